import numpy as np

import arrivalcast.fast_ops

# PYTHONPATH="." python project/parallel_check.py


# BOX MEAN
print("BOX MEAN")
values = np.zeros((6, 6, 4))
present = np.ones((6, 6, 4), dtype=np.bool_)
occupied = np.ones((6, 6), dtype=np.bool_)
out = np.zeros((6, 6, 4))
arrivalcast.fast_ops.box_mean(values, present, occupied, 1, out)
print(arrivalcast.fast_ops.box_mean.parallel_diagnostics(level=3))

# HAVERSINE
print("HAVERSINE")
lats, lons = np.linspace(14.0, 16.0, 10), np.linspace(74.0, 76.0, 10)
out = np.zeros(10)
arrivalcast.fast_ops.haversine_many(lats, lons, 15.0, 75.0, out)
print(arrivalcast.fast_ops.haversine_many.parallel_diagnostics(level=3))
