"""
DRISE in the nominal limit
==========================

With theta2 = 1, epsilon = 0 and a huge clipping level, DRISE is the
ordinary minimum-variance input and state estimator. Check that on a few
random models.
"""

import numpy as np

from drise.estimators import drise_step, ise_step
from drise.model import Belief, RobustParams
from drise.reduction import random_ltv_model, reduction_suite, simulate_ltv

rng = np.random.default_rng(1)
model = random_ltv_model(rng, n=4, p=1, l=3, steps=50)
x0, us, ys = simulate_ltv(model, rng, 50)

nominal = RobustParams.nominal()
print(nominal)

b_dr = b_is = Belief.initial(x0, np.eye(4), p=1)
gap = 0.0
for k in range(1, 51):
    o_dr, b_dr = drise_step(b_dr, us[k - 1], ys[k - 1], model, nominal, k)
    o_is, b_is = ise_step(b_is, us[k - 1], ys[k - 1], model, k)
    gap = max(gap, np.abs(o_dr.x_hat - o_is.x_hat).max())
print("largest state gap over 50 steps: %.1e" % gap)

# Switch the robustness back on and the two part ways.
b = Belief.initial(x0, np.eye(4), p=1)
o, _ = drise_step(b, us[0], ys[0], model, RobustParams(), 1)
print("robust P_x trace %.4f vs nominal %.4f" % (np.trace(o.P_x), np.trace(ise_step(b, us[0], ys[0], model, 1)[0].P_x)))

# The full suite, the same one `drise reduction-test` runs.
res = reduction_suite()
print("suite: %d runs, max deviation %.1e, worst |MCG - I| %.1e" % (len(res.runs), res.max_error, res.gain_identity))
