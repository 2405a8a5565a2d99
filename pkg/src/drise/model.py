"""System model, filter belief and robustness parameters.

The LTV system is

    x_{k+1} = A_k x_k + B_k u_k + c_k + G_k d_k + w_k
    y_k     = C_k x_k + v_k

with ``w_k ~ N(0, Q_k)``, ``v_k ~ N(0, R_k)`` and an unknown input ``d_k``.
``c_k`` is an optional known drift (zero unless given); it carries the
constant term of a linearization and can equivalently be read as one extra
column of ``B_k`` driven by a unit input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import InvalidParams, NotPsd, RankDeficient
from .matfound import is_psd

BELIEF_PSD_TOL = 1e-8
RANK_RTOL = 1e-10


class Transition(NamedTuple):
    """Matrices consumed by one filter step ``k``.

    ``A, B, G, c, Q`` belong to index ``k - 1``; ``C, R`` to index ``k``.
    """

    A: np.ndarray
    B: np.ndarray
    G: np.ndarray
    c: np.ndarray
    Q: np.ndarray
    C: np.ndarray
    R: np.ndarray


def _as_stack(name: str, M, ndim: int) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim not in (ndim, ndim + 1):
        raise ValueError(f"{name} must have {ndim} or {ndim + 1} dimensions, got {M.ndim}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} contains non-finite entries")
    return M


def _pick(M: np.ndarray, ndim: int, k: int) -> np.ndarray:
    return M if M.ndim == ndim else M[k]


@dataclass(frozen=True)
class LtvModel:
    """Time-indexed system matrices.

    Each matrix may be given as a single 2-D array (time invariant) or as a
    stack whose leading axis is the time index ``k``. ``G`` may have zero
    columns, which turns the unknown-input machinery off.
    """

    A: np.ndarray
    B: np.ndarray
    G: np.ndarray
    C: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    c: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("A", "B", "G", "C", "Q", "R"):
            object.__setattr__(self, name, _as_stack(name, getattr(self, name), 2))
        n = self.A.shape[-1]
        c = np.zeros(n) if self.c is None else _as_stack("c", self.c, 1)
        object.__setattr__(self, "c", c)

        shapes = {
            "A": (n, n),
            "B": (n, self.m),
            "G": (n, self.p),
            "C": (self.l, n),
            "Q": (n, n),
            "R": (self.l, self.l),
        }
        for name, shape in shapes.items():
            if getattr(self, name).shape[-2:] != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if c.shape[-1] != n:
            raise ValueError(f"c has shape {c.shape}, expected trailing dimension {n}")

        for Qk in self.Q if self.Q.ndim == 3 else [self.Q]:
            if not is_psd(Qk, 1e-9):
                raise NotPsd("Q must be positive semidefinite")
        for Rk in self.R if self.R.ndim == 3 else [self.R]:
            if not is_psd(Rk, 1e-9):
                raise NotPsd("R must be positive definite")
            try:
                np.linalg.cholesky(0.5 * (Rk + Rk.T))
            except np.linalg.LinAlgError:
                raise NotPsd("R must be positive definite") from None

    @property
    def n(self) -> int:
        return self.A.shape[-1]

    @property
    def m(self) -> int:
        return self.B.shape[-1]

    @property
    def p(self) -> int:
        return self.G.shape[-1]

    @property
    def l(self) -> int:  # noqa: E743
        return self.C.shape[-2]

    def transition(self, k: int) -> Transition:
        j = k - 1
        return Transition(
            _pick(self.A, 2, j),
            _pick(self.B, 2, j),
            _pick(self.G, 2, j),
            _pick(self.c, 1, j),
            _pick(self.Q, 2, j),
            _pick(self.C, 2, k),
            _pick(self.R, 2, k),
        )


class FixedTransition:
    """Model wrapper that returns one pre-built :class:`Transition` for any ``k``.

    Used when the matrices are rebuilt every step, e.g. by linearizing about
    the current estimate.
    """

    __slots__ = ("tr",)

    def __init__(self, tr: Transition):
        self.tr = tr

    def transition(self, k: int) -> Transition:
        return self.tr


@dataclass(frozen=True)
class Belief:
    """Filter state carried between steps.

    ``P_d`` and ``P_xd`` are absent when the model has no unknown input.
    """

    x_hat: np.ndarray
    P_x: np.ndarray
    P_d: Optional[np.ndarray] = None
    P_xd: Optional[np.ndarray] = None
    k: int = 0

    def __post_init__(self):
        x = np.asarray(self.x_hat, dtype=float).reshape(-1)
        P = np.asarray(self.P_x, dtype=float)
        object.__setattr__(self, "x_hat", x)
        object.__setattr__(self, "P_x", P)
        if P.shape != (x.size, x.size):
            raise ValueError(f"P_x has shape {P.shape}, expected {(x.size, x.size)}")
        if not is_psd(P, BELIEF_PSD_TOL):
            raise NotPsd("P_x is not positive semidefinite")
        if (self.P_d is None) != (self.P_xd is None):
            raise ValueError("P_d and P_xd must be given together")
        if self.P_d is None:
            return
        Pd = np.asarray(self.P_d, dtype=float)
        Pxd = np.asarray(self.P_xd, dtype=float)
        object.__setattr__(self, "P_d", Pd)
        object.__setattr__(self, "P_xd", Pxd)
        p = Pd.shape[0]
        if Pd.shape != (p, p) or Pxd.shape != (x.size, p):
            raise ValueError("P_d / P_xd shapes are inconsistent with x_hat")
        if not is_psd(Pd, BELIEF_PSD_TOL):
            raise NotPsd("P_d is not positive semidefinite")
        joint = np.block([[P, Pxd], [Pxd.T, Pd]])
        if not is_psd(joint, BELIEF_PSD_TOL):
            raise NotPsd("joint (x, d) covariance is not positive semidefinite")

    @classmethod
    def initial(cls, x0, P0, p: int = 0, input_variance: float = 10.0) -> "Belief":
        """Prior with zero state/input cross-covariance and a diffuse input prior."""
        x0 = np.asarray(x0, dtype=float).reshape(-1)
        if p == 0:
            return cls(x0, P0)
        return cls(x0, P0, input_variance * np.eye(p), np.zeros((x0.size, p)))

    @classmethod
    def _unchecked(cls, x_hat, P_x, P_d, P_xd, k) -> "Belief":
        # Filter steps build beliefs from quantities they have already checked.
        b = object.__new__(cls)
        object.__setattr__(b, "x_hat", x_hat)
        object.__setattr__(b, "P_x", P_x)
        object.__setattr__(b, "P_d", P_d)
        object.__setattr__(b, "P_xd", P_xd)
        object.__setattr__(b, "k", k)
        return b


@dataclass(frozen=True)
class RobustParams:
    """Ambiguity-set radii, contamination level and clipping threshold.

    Only ``theta2_x``, ``theta2_v``, ``epsilon`` and ``clip_K`` enter the
    recursion. The remaining radii complete the ambiguity-set description and
    are validated but otherwise unused.
    """

    theta1_x: float = 1.0
    theta2_x: float = 1.5
    theta3_x: float = 0.0
    theta1_v: float = 1.0
    theta2_v: float = 1.5
    theta3_v: float = 0.0
    epsilon: float = 0.1
    clip_K: float = 1.345

    @classmethod
    def nominal(cls) -> "RobustParams":
        """Parameters under which the robust update collapses to the nominal one."""
        return cls(theta1_x=0.0, theta2_x=1.0, theta1_v=0.0, theta2_v=1.0, epsilon=0.0, clip_K=1e6)

    def validated(self) -> "RobustParams":
        validate_params(self)
        return self


def validate_params(params: RobustParams) -> None:
    """Raise :class:`InvalidParams` naming the first violated constraint."""
    for name in ("theta1_x", "theta2_x", "theta3_x", "theta1_v", "theta2_v", "theta3_v", "epsilon", "clip_K"):
        value = getattr(params, name)
        if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
            raise InvalidParams(name, "must be a finite real number")
    for axis in ("x", "v"):
        t1 = getattr(params, f"theta1_{axis}")
        t2 = getattr(params, f"theta2_{axis}")
        t3 = getattr(params, f"theta3_{axis}")
        if t1 < 0:
            raise InvalidParams(f"theta1_{axis}", "must be ≥ 0")
        if t1 > 1:
            raise InvalidParams(f"theta1_{axis}", "must be ≤ 1")
        if t2 < 1:
            raise InvalidParams(f"theta2_{axis}", "must be ≥ 1")
        if t3 < 0:
            raise InvalidParams(f"theta3_{axis}", "must be ≥ 0")
    if params.epsilon < 0:
        raise InvalidParams("epsilon", "must be ≥ 0")
    if params.epsilon >= 1:
        raise InvalidParams("epsilon", "must be < 1")
    if params.clip_K <= 0:
        raise InvalidParams("clip_K", "must be > 0")


@dataclass(frozen=True)
class GainBundle:
    """Gains of one step: unknown-input gain ``M``, inverse innovation
    weighting ``Rtilde`` and robust state gain ``L`` (set by the measurement
    update)."""

    M: np.ndarray
    Rtilde: np.ndarray
    L: Optional[np.ndarray] = None


@dataclass(frozen=True)
class StepOutput:
    x_hat: np.ndarray
    P_x: np.ndarray
    d_hat: Optional[np.ndarray]
    P_d: Optional[np.ndarray]
    innovation: np.ndarray
    innovation_cov: np.ndarray
    psi_activated: np.ndarray
    P_xd: Optional[np.ndarray] = None
    gains: Optional[GainBundle] = None
    k: int = 0
    extras: dict = field(default_factory=dict)


def check_rank_condition(model, k: int) -> None:
    """Check that ``rank(C_k G_{k-1}) == p``.

    Raises:
        RankDeficient: when the unknown input does not show up in ``y_k``.
    """
    tr = model.transition(k)
    p = tr.G.shape[1]
    if p == 0:
        return
    s = np.linalg.svd(tr.C @ tr.G, compute_uv=False)
    rank = int(np.sum(s > RANK_RTOL * s[0])) if s.size and s[0] > 0 else 0
    if rank < p:
        raise RankDeficient(rank, p)
