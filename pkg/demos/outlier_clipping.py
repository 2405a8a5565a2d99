"""
Where the clipping bites
========================

The robust update clips each whitened innovation component at K. Compare
the instants it fires with the instants the simulator drew an outlier.
"""

import numpy as np

from drise.bench import run_filter
from drise.estimators import i_min, psi_clamp
from drise.vehicle import Scenario, simulate

K = 1.345
print(psi_clamp([0.3, -2.0, 5.0], K))

# Clipping costs covariance reduction; i_min is the worst-case factor.
for eps in (0.0, 0.1, 0.3):
    print("eps %.1f  i_min %.4f" % (eps, i_min(eps, K)))

scenario = Scenario(horizon=1000)
record = simulate(scenario)
outputs = run_filter(record, scenario, "drise")
fired = np.array([o.psi_activated.any() for o in outputs])
flag = record.outlier

print("outlier draws:", int(flag.sum()))
print("steps with clipping:", int(fired.sum()))
print("clipping on outlier steps: %.0f%%" % (100 * fired[flag].mean()))
print("clipping on clean steps:   %.0f%%" % (100 * fired[~flag].mean()))
