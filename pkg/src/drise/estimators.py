"""Single-step filter recursions: KF, ISE, DRISE and DRE.

DRISE runs four stages per step: prediction, unknown-input estimation, time
update and a distributionally robust measurement update. DRE is the same
recursion on a model without unknown inputs (``p == 0``), where stages two
and three are skipped. ISE and KF are coded separately from DRISE so the
limit-parameter equivalences are genuine cross-checks.

The innovation covariance ``S_k`` that follows unknown-input estimation has
rank ``l - p``: input estimation consumes ``p`` directions of the innovation.
Both the DRISE and ISE measurement updates therefore use Moore-Penrose
inverses restricted to the range of ``S_k``; when ``p == 0`` this is the
ordinary inverse.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .errors import NotPsd
from .matfound import chol_inv, eigh_sym, psd_fast, spd_solve, symmetrize
from .model import Belief, GainBundle, RobustParams, StepOutput

PSD_TOL = 1e-8
# Relative eigenvalue cutoff defining the range of the innovation covariance.
RANGE_RTOL = 1e-9


def std_normal_cdf(z: float) -> float:
    """Standard normal CDF via ``erfc``; accurate in both tails."""
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def i_min(epsilon: float, K: float) -> float:
    """Worst-case covariance-reduction factor ``(1 - eps) * (1 - 2 Phi(-K))``."""
    return (1.0 - epsilon) * (1.0 - 2.0 * std_normal_cdf(-K))


@lru_cache(maxsize=64)
def _i_min_cached(epsilon: float, K: float) -> float:
    return i_min(epsilon, K)


def psi_clamp(mu, K: float) -> np.ndarray:
    """Entry-wise clip of the normalized innovation to ``[-K, K]``."""
    return np.clip(np.asarray(mu, dtype=float), -K, K)


def predict(belief: Belief, u, model, k: int):
    """Prediction: propagate mean and covariance, form ``Rtilde_k``.

    Returns:
        ``(x_minus, P_x_minus, Rtilde)``.
    """
    x_minus, P_minus, Rtilde = _predict(model.transition(k), belief, np.asarray(u, dtype=float))
    return x_minus, symmetrize(P_minus), Rtilde


def estimate_unknown_input(x_minus, P_x_minus, Rtilde, y, belief: Belief, model, k: int):
    """Unknown-input estimation from the predicted innovation.

    Returns:
        ``(gains, d_hat, P_d, P_xd)`` where ``d_hat`` estimates ``d_{k-1}``.
    """
    return _estimate_input(model.transition(k), x_minus, Rtilde, np.asarray(y, dtype=float), belief)


def time_update(x_minus, P_x_minus, d_hat, P_d, P_xd, gains: GainBundle, belief: Belief, model, k: int):
    """Time update: add the input estimate and assemble ``P_x_star``.

    ``P_x_minus`` is ``A P A^T + Q`` from :func:`predict`; the remaining five
    terms account for the input estimate and its correlation with the state
    and process noise.

    Raises:
        NotPsd: if the assembled covariance is indefinite.
    """
    x_star, P_star, _ = _time_update(model.transition(k), x_minus, P_x_minus, d_hat, P_d, P_xd, gains, k)
    return x_star, symmetrize(P_star)


def drise_measurement_update(x_star, P_x_star, gains: GainBundle, y, params: RobustParams, model, k: int) -> StepOutput:
    """Distributionally robust measurement update.

    The covariances are inflated by ``theta2_x`` and ``theta2_v``, the
    normalized innovation is clipped at ``clip_K`` and the covariance
    reduction is scaled by :func:`i_min`.

    Raises:
        NotPsd: if the innovation covariance is indefinite.
    """
    tr = model.transition(k)
    GM = tr.G @ gains.M
    x_hat, P_x, S, s, active, L = _robust_update(tr, x_star, P_x_star, GM, np.asarray(y, dtype=float), params, k)
    return StepOutput(
        x_hat=x_hat,
        P_x=P_x,
        d_hat=None,
        P_d=None,
        innovation=s,
        innovation_cov=S,
        psi_activated=active,
        gains=GainBundle(gains.M, gains.Rtilde, L),
        k=k,
    )


# The kernels below use ndarray.dot rather than the @ operator: for the 4x4
# operands of the vehicle problem its dispatch overhead is less than half.


def _predict(tr, belief, u):
    # P_minus is symmetric up to rounding; downstream consumers read one
    # triangle or symmetrize.
    A, C = tr.A, tr.C
    x_minus = A.dot(belief.x_hat) + tr.B.dot(u) + tr.c
    P_minus = A.dot(belief.P_x).dot(A.T) + tr.Q
    Rtilde = chol_inv(C.dot(P_minus).dot(C.T) + tr.R)
    return x_minus, P_minus, Rtilde


def _estimate_input(tr, x_minus, Rtilde, y, belief):
    C = tr.C
    F = C.dot(tr.G)
    RF = Rtilde.dot(F)
    P_d = chol_inv(F.T.dot(RF))
    M = P_d.dot(RF.T)
    d_hat = M.dot(y - C.dot(x_minus))
    P_xd = -(M.dot(C).dot(tr.A).dot(belief.P_x).T)
    return GainBundle(M=M, Rtilde=Rtilde), d_hat, P_d, P_xd


def _time_update(tr, x_minus, P_minus, d_hat, P_d, P_xd, gains, k):
    G = tr.G
    GM = G.dot(gains.M)
    X = tr.A.dot(P_xd).dot(G.T) - GM.dot(tr.C).dot(tr.Q)
    # Symmetric up to rounding; LAPACK below reads the lower triangle only.
    P_star = P_minus + G.dot(P_d).dot(G.T) + X + X.T
    if not psd_fast(P_star, PSD_TOL):
        raise NotPsd(f"time-update covariance is indefinite at k={k}")
    return x_minus + G.dot(d_hat), P_star, GM


def _robust_update(tr, x_star, P_star, GM, y, params, k):
    C = tr.C
    Sx = params.theta2_x * P_star
    l = C.shape[0]
    if tr.G.shape[1] == l:
        # I - C G M vanishes exactly, so S = 0 and the update is void.
        z = np.zeros(l)
        return x_star, 0.5 * (Sx + Sx.T), np.zeros((l, l)), y - C.dot(x_star), z > 0, np.zeros((x_star.size, l))
    Sv = params.theta2_v * tr.R
    GMSv = GM.dot(Sv)
    N = Sx.dot(C.T) - GMSv
    S = C.dot(N) - C.dot(GMSv).T + Sv
    w, V = eigh_sym(S)
    lo, hi = w[0], w[-1]
    scale = max(hi, Sv.trace())
    if lo < -PSD_TOL * (1.0 + scale):
        raise NotPsd(f"innovation covariance is indefinite at k={k}")
    # Directions outside the numerical range of S get a zero weight.
    inv_root = np.where(w > RANGE_RTOL * scale, w, np.inf) ** -0.5
    W = (V * inv_root).dot(V.T)
    s = y - C.dot(x_star)
    mu = W.dot(s)
    K = params.clip_K
    L = N.dot(W)
    x_hat = x_star + L.dot(mu.clip(-K, K))
    P_x = Sx - L.dot(L.T) * _i_min_cached(params.epsilon, K)
    P_x = 0.5 * (P_x + P_x.T)
    return x_hat, P_x, S, s, np.abs(mu) > K, L


def drise_step(belief: Belief, u, y, model, params: RobustParams, k: int):
    """One DRISE step (or DRE when the model has ``p == 0``).

    Returns:
        ``(StepOutput, Belief)``; the new belief carries ``x_hat_k``,
        ``P_x_k`` and the input covariances for ``d_{k-1}``.
    """
    tr = model.transition(k)
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    x_minus, P_minus, Rtilde = _predict(tr, belief, u)
    if tr.G.shape[1] == 0:
        M = np.zeros((0, y.size))
        GM = np.zeros((P_minus.shape[0], y.size))
        x_hat, P_x, S, s, active, L = _robust_update(tr, x_minus, P_minus, GM, y, params, k)
        out = StepOutput(x_hat, P_x, None, None, s, S, active, None, GainBundle(M, Rtilde, L), k)
        return out, Belief._unchecked(x_hat, P_x, None, None, k)

    gains, d_hat, P_d, P_xd = _estimate_input(tr, x_minus, Rtilde, y, belief)
    x_star, P_star, GM = _time_update(tr, x_minus, P_minus, d_hat, P_d, P_xd, gains, k)
    x_hat, P_x, S, s, active, L = _robust_update(tr, x_star, P_star, GM, y, params, k)
    out = StepOutput(x_hat, P_x, d_hat, P_d, s, S, active, P_xd, GainBundle(gains.M, Rtilde, L), k)
    return out, Belief._unchecked(x_hat, P_x, P_d, P_xd, k)


def dre_step(belief: Belief, u, y, model, params: RobustParams, k: int):
    """DRE baseline: DRISE with the unknown-input channel removed."""
    return drise_step(belief, u, y, _without_input(model), params, k)


def ise_step(belief: Belief, u, y, model, k: int):
    """Classical minimum-variance input and state estimation step.

    Written independently of :func:`drise_step`: LU solves instead of
    Cholesky, the factored form of the time-update covariance and an SVD
    pseudo-inverse of the innovation matrix.
    """
    A, B, G, c, Q, C, R = model.transition(k)
    y = np.asarray(y, dtype=float)
    n, p = G.shape

    x_minus = A @ belief.x_hat + B @ np.asarray(u, dtype=float) + c
    P_minus = A @ belief.P_x @ A.T + Q
    P_minus = 0.5 * (P_minus + P_minus.T)
    innov_cov = C @ P_minus @ C.T + R

    F = C @ G
    RF = np.linalg.solve(innov_cov, F)
    info = F.T @ RF
    P_d = np.linalg.inv(0.5 * (info + info.T))
    P_d = 0.5 * (P_d + P_d.T)
    M = np.linalg.solve(info, RF.T)
    d_hat = M @ (y - C @ x_minus)
    P_xd = -belief.P_x @ A.T @ C.T @ M.T

    x_star = x_minus + G @ d_hat
    T = np.eye(n) - G @ M @ C
    GM = G @ M
    P_star = T @ P_minus @ T.T + GM @ R @ GM.T
    P_star = 0.5 * (P_star + P_star.T)

    Rt_star = C @ P_star @ C.T - C @ GM @ R - R @ GM.T @ C.T + R
    Rt_star = 0.5 * (Rt_star + Rt_star.T)
    if G.shape[1] == C.shape[0]:
        # Every output direction was spent on d; nothing is left to correct x.
        Rt_pinv = np.zeros_like(R)
    else:
        w, V = np.linalg.eigh(Rt_star)
        keep = w > RANGE_RTOL * max(w[-1], np.trace(R))
        Rt_pinv = (V[:, keep] / w[keep]) @ V[:, keep].T
    gain = (P_star @ C.T - GM @ R) @ Rt_pinv
    s = y - C @ x_star
    x_hat = x_star + gain @ s
    P_x = P_star - gain @ Rt_star @ gain.T
    P_x = 0.5 * (P_x + P_x.T)

    out = StepOutput(
        x_hat=x_hat,
        P_x=P_x,
        d_hat=d_hat,
        P_d=P_d,
        P_xd=P_xd,
        innovation=s,
        innovation_cov=Rt_star,
        psi_activated=np.zeros(s.size, dtype=bool),
        gains=GainBundle(M=M, Rtilde=np.linalg.inv(innov_cov), L=gain),
        k=k,
    )
    return out, Belief._unchecked(x_hat, P_x, P_d, P_xd, k)


def kf_step(belief: Belief, u, y, model, k: int):
    """Kalman filter step ignoring the unknown input (Joseph-form covariance)."""
    A, B, _, c, Q, C, R = model.transition(k)
    y = np.asarray(y, dtype=float)
    x_minus = A @ belief.x_hat + B @ np.asarray(u, dtype=float) + c
    P_minus = A @ belief.P_x @ A.T + Q
    P_minus = 0.5 * (P_minus + P_minus.T)
    S = C @ P_minus @ C.T + R
    S = 0.5 * (S + S.T)
    gain = spd_solve(S, C @ P_minus).T
    s = y - C @ x_minus
    x_hat = x_minus + gain @ s
    J = np.eye(x_hat.size) - gain @ C
    P_x = J @ P_minus @ J.T + gain @ R @ gain.T
    P_x = 0.5 * (P_x + P_x.T)
    out = StepOutput(
        x_hat=x_hat,
        P_x=P_x,
        d_hat=None,
        P_d=None,
        innovation=s,
        innovation_cov=S,
        psi_activated=np.zeros(s.size, dtype=bool),
        gains=GainBundle(M=np.zeros((0, s.size)), Rtilde=np.linalg.inv(S), L=gain),
        k=k,
    )
    return out, Belief._unchecked(x_hat, P_x, None, None, k)


class _NoInput:
    __slots__ = ("model",)

    def __init__(self, model):
        self.model = model

    def transition(self, k):
        tr = self.model.transition(k)
        return tr._replace(G=tr.G[:, :0])


def _without_input(model):
    return _NoInput(model)
