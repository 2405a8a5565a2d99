"""
One seed of the vehicle benchmark, step by step
===============================================

Simulate a contaminated vehicle run, feed the same record to the four
estimators and compare their errors.
"""

import numpy as np

from drise.bench import rmse, run_filter
from drise.vehicle import Scenario, simulate

# The default scenario: 2000 steps at 20 ms, a square-wave unknown input on
# the slip and acceleration channels, and 10% of the measurements drawn with
# ten times the nominal standard deviation.
scenario = Scenario()
record = simulate(scenario)
print("steps:", record.horizon, " outliers:", int(record.outlier.sum()))

# Every estimator sees exactly these measurements.
print("record digest:", record.digest()[:16])

for name in ("kf", "dre", "ise", "drise"):
    outputs = run_filter(record, scenario, name)
    x_hat = np.array([o.x_hat for o in outputs])
    line = f"{name:>6}  RMSE(x) {rmse(x_hat, record.x):7.4f}"
    if outputs[0].d_hat is not None:
        d_hat = np.array([o.d_hat for o in outputs])
        line += f"  RMSE(d) {rmse(d_hat, record.d):7.4f}"
    print(line)

# The Kalman filter and DRE have no unknown-input channel, so the square
# wave shows up as a bias in their state estimates.
outputs = run_filter(record, scenario, "drise")
trace = np.array([np.trace(o.P_x) for o in outputs])
print("DRISE trace(P_x): start %.3f, median after step 50 %.3f" % (trace[0], np.median(trace[50:])))
