"""Limit-parameter equivalence checks: DRISE -> ISE and DRE -> KF.

With ``theta2 = 1``, ``epsilon = 0`` and a clipping level far above any
normalized innovation, the robust update is the nominal one. DRISE must then
agree with the independently coded :func:`~drise.estimators.ise_step` and,
on a model without unknown inputs, with :func:`~drise.estimators.kf_step`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .estimators import drise_step, ise_step, kf_step
from .model import Belief, LtvModel, RobustParams

TOLERANCE = 1e-9


def random_ltv_model(rng: np.random.Generator, n: int, p: int, l: int, steps: int) -> LtvModel:
    """Random time-varying model with spectral radius below one and ``rank(C G) = p``."""
    if not 0 <= p <= l <= n:
        raise ValueError("need 0 <= p <= l <= n")
    m = 1 + int(rng.integers(0, 2))
    A = np.empty((steps + 1, n, n))
    for k in range(steps + 1):
        X = rng.standard_normal((n, n))
        A[k] = 0.95 * X / max(1.0, np.abs(np.linalg.eigvals(X)).max())
    B = rng.standard_normal((n, m))
    C = rng.standard_normal((steps + 1, l, n))
    G = rng.standard_normal((steps + 1, n, p))
    Wq = rng.standard_normal((n, n))
    Wr = rng.standard_normal((l, l))
    Q = 0.1 * Wq @ Wq.T / n
    R = 0.1 * (Wr @ Wr.T / l + np.eye(l))
    return LtvModel(A=A, B=B, G=G, C=C, Q=Q, R=R)


def simulate_ltv(model: LtvModel, rng: np.random.Generator, steps: int):
    """Draw ``(x0, u, y)`` from ``model`` driven by a random-walk unknown input."""
    x = rng.standard_normal(model.n)
    x0 = x.copy()
    d = np.zeros(model.p)
    us, ys = [], []
    Lq = np.linalg.cholesky(model.Q + 1e-12 * np.eye(model.n))
    Lr = np.linalg.cholesky(model.R)
    for k in range(1, steps + 1):
        tr = model.transition(k)
        u = rng.standard_normal(model.m)
        d = d + 0.3 * rng.standard_normal(model.p)
        x = tr.A @ x + tr.B @ u + tr.G @ d + Lq @ rng.standard_normal(model.n)
        ys.append(tr.C @ x + Lr @ rng.standard_normal(model.l))
        us.append(u)
    return x0, np.array(us), np.array(ys)


@dataclass
class ReductionResult:
    """Worst absolute deviations over all compared runs."""

    x_hat: float = 0.0
    d_hat: float = 0.0
    P_x: float = 0.0
    P_d: float = 0.0
    gain_identity: float = 0.0
    runs: list = field(default_factory=list)

    @property
    def max_error(self) -> float:
        return max(self.x_hat, self.d_hat, self.P_x, self.P_d)

    def passed(self, tol: float = TOLERANCE) -> bool:
        return self.max_error <= tol and self.gain_identity <= 1e-8


def compare_with_reference(model, x0, P0, us, ys, p_prior: float = 10.0, relative: bool = False) -> dict:
    """Run nominal DRISE next to ISE (or KF when ``p == 0``).

    With ``relative`` each deviation is divided by ``1 + max|reference|``,
    which keeps near-singular ``C G`` draws (huge ``P_d``) comparable.

    Returns:
        maximum deviations per quantity and the worst ``|M C G - I|`` entry.
    """
    params = RobustParams.nominal()
    p = model.transition(1).G.shape[1]
    b_dr = Belief.initial(x0, P0, p=p, input_variance=p_prior)
    b_ref = b_dr
    err = dict(x_hat=0.0, d_hat=0.0, P_x=0.0, P_d=0.0, gain_identity=0.0)

    def dev(a, b):
        gap = float(np.abs(a - b).max())
        return gap / (1.0 + float(np.abs(b).max())) if relative else gap

    for k in range(1, len(ys) + 1):
        o_dr, b_dr = drise_step(b_dr, us[k - 1], ys[k - 1], model, params, k)
        if p:
            o_ref, b_ref = ise_step(b_ref, us[k - 1], ys[k - 1], model, k)
            tr = model.transition(k)
            resid = o_dr.gains.M @ tr.C @ tr.G - np.eye(p)
            err["gain_identity"] = max(err["gain_identity"], float(np.abs(resid).max()))
            err["d_hat"] = max(err["d_hat"], dev(o_dr.d_hat, o_ref.d_hat))
            err["P_d"] = max(err["P_d"], dev(o_dr.P_d, o_ref.P_d))
        else:
            o_ref, b_ref = kf_step(b_ref, us[k - 1], ys[k - 1], model, k)
        err["x_hat"] = max(err["x_hat"], dev(o_dr.x_hat, o_ref.x_hat))
        err["P_x"] = max(err["P_x"], dev(o_dr.P_x, o_ref.P_x))
    return err


def reduction_suite(n_models: int = 10, steps: int = 200, seed: int = 0, extra=()) -> ReductionResult:
    """Compare DRISE against ISE on ``n_models`` random models and against KF
    on the same models with the unknown input removed.

    ``extra`` holds further ``(model, x0, P0, us, ys)`` cases, e.g. a
    recorded vehicle trajectory.
    """
    rng = np.random.default_rng(seed)
    cases = []
    for _ in range(n_models):
        n = int(rng.integers(2, 7))
        p = int(rng.integers(1, min(2, n - 1) + 1))
        l = int(rng.integers(p + 1, n + 1)) if p < n else n
        model = random_ltv_model(rng, n, p, l, steps)
        x0, us, ys = simulate_ltv(model, rng, steps)
        P0 = np.eye(n)
        cases.append((f"ise n={n} p={p} l={l}", model, x0, P0, us, ys))
        bare = LtvModel(A=model.A, B=model.B, G=np.zeros((n, 0)), C=model.C, Q=model.Q, R=model.R)
        cases.append((f"kf n={n} l={l}", bare, x0, P0, us, ys))
    for i, case in enumerate(extra):
        cases.append((f"extra {i}",) + tuple(case))

    res = ReductionResult()
    for label, model, x0, P0, us, ys in cases:
        err = compare_with_reference(model, x0, P0, us, ys)
        res.runs.append((label, err))
        for key, val in err.items():
            setattr(res, key, max(getattr(res, key), val))
    return res
