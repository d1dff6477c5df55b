from .errors import *  # noqa: F401,F403, D104
from .data_ingest import Dataset, LocationSeries, MarketSeries, build_dataset, load_dataset, write_dataset  # noqa: F401
from .spatial import GeoPoint, LocationFilterConfig, prepare_locations, select_working_set  # noqa: F401
from .elastic_net import ElasticNetConfig, ElasticNetModel  # noqa: F401
from .pca import PcaModel, fit_pca  # noqa: F401
from .regpcr import DesignMatrix, RegPcrConfig, RegPcrModel, build_design  # noqa: F401
from .forecast_eval import BacktestConfig, BacktestReport, rolling_backtest, run_backtest  # noqa: F401
from .price_model import PriceModel, PriceModelConfig, fit_price_model, predict_price  # noqa: F401
from .synth import SynthConfig, generate  # noqa: F401
from .config import RunConfig, dump_config, load_config  # noqa: F401
from . import baselines, elastic_net, fast_ops, forecast_eval, insights, operators, pca, price_model, regpcr, spatial, special, synth  # noqa: F401
