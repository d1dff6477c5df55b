"""
Multi-seed checks on synthetic data with planted structure.

>>> PYTHONPATH="." python project/run_acceptance.py --seeds 10
"""

import argparse
import time

import numpy as np
import pandas as pd

from arrivalcast import forecast_eval, price_model, regpcr
from arrivalcast.cli import configure_logging
from arrivalcast.synth import SynthConfig, generate


def planted_support(seed):
    dataset, truth = generate(SynthConfig(seed=seed, months=37, n_markets=1))
    market = dataset.markets[0]
    design = regpcr.build_design(market, dataset.locations)
    model = regpcr.fit(design)
    recall = len(set(model.selected_locations) & set(truth.supports[market.market_id]))

    config = forecast_eval.BacktestConfig(initial_window=24, steps=12, methods=("regpcr", "pcr"))
    report = forecast_eval.rolling_backtest(design, market.market_id, config)
    scores = report.mean_mae()
    return {
        "seed": seed,
        "recall": recall,
        "selected": model.p,
        "factors": int(model.pc_mask.sum()),
        "regpcr_mae": scores.get("regpcr", np.nan),
        "pcr_mae": scores.get("pcr", np.nan),
    }


def state_aggregation(seed):
    dataset, _ = generate(SynthConfig(seed=seed, grid_rows=5, grid_cols=5, n_markets=4))
    rng = np.random.Generator(np.random.PCG64(seed))
    arrivals = {m.market_id: m.arrivals[1:] for m in dataset.markets}
    weights = rng.uniform(0.5, 2.0, len(arrivals))
    exact = sum(w * a for w, a in zip(weights, arrivals.values()))
    total = exact + 0.01 * exact.mean() * rng.standard_normal(len(exact))
    model = forecast_eval.fit_state_aggregate(arrivals, total)
    return {"seed": seed, "adjusted_r2": model.adjusted_r2, "p_value": model.p_value}


def price_error_growth(seed):
    config = SynthConfig(seed=seed, grid_rows=5, grid_cols=5, months=72, price_noise=0.01)
    dataset, truth = generate(config)
    months = dataset.month_index[1:]
    prices = price_model.state_price_series(dataset.markets, months)
    arrivals = price_model.state_arrival_series(dataset.markets, months)
    run = price_model.price_backtest(
        prices, arrivals, price_model.PriceModelConfig(w=truth.w, d=truth.d), steps=12, include_arima=False
    )
    return {"seed": seed, **{f"mae_k{k}": run.mae("arrival", k) for k in (1, 2, 3)}}


def main():
    parser = argparse.ArgumentParser(description="synthetic acceptance runs")
    parser.add_argument("--seeds", type=int, default=10)
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args()
    configure_logging(args.verbose)
    seeds = range(args.seeds)

    start = time.time()
    support = pd.DataFrame([planted_support(s) for s in seeds])
    print(support.to_string(index=False))
    print(
        "recall >= 4/5 on %d/%d seeds; RegPCR <= PCR on %d/%d seeds (%.1fs)"
        % (
            (support["recall"] >= 4).sum(),
            len(support),
            (support["regpcr_mae"] <= support["pcr_mae"]).sum(),
            len(support),
            time.time() - start,
        )
    )

    state = pd.DataFrame([state_aggregation(s) for s in seeds])
    print(state.to_string(index=False))
    print(
        "adjusted R^2 > 0.98 and p < 0.001 on %d/%d seeds"
        % (((state["adjusted_r2"] > 0.98) & (state["p_value"] < 0.001)).sum(), len(state))
    )

    growth = pd.DataFrame([price_error_growth(s) for s in seeds])
    print(growth.to_string(index=False))
    print("MAE(k=3) >= MAE(k=1) on %d/%d seeds" % ((growth["mae_k3"] >= growth["mae_k1"]).sum(), len(growth)))


if __name__ == "__main__":
    main()
