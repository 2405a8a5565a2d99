"""Kinematic bicycle vehicle, unknown-input signal and trajectory simulation.

State vector ``[X, Y, heading, speed]`` (m, m, rad, m/s); control
``u = [slip_angle, acceleration]``; unknown input ``d = [d1, d2]`` perturbs
the two actuation channels. Headings are kept continuous (unwrapped) in all
arrays so the linear filters never see a 2*pi jump; :class:`VehicleState`
reports the wrapped value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError
from .matfound import sym_sqrt
from .model import LtvModel, RobustParams, Transition

N_STATE = 4
N_INPUT = 2

STREAM_PROCESS = 1
STREAM_MEASUREMENT = 2


def wrap_angle(a: float) -> float:
    """Wrap to ``(-pi, pi]``."""
    w = math.remainder(a, 2.0 * math.pi)
    return math.pi if w == -math.pi else w


@dataclass(frozen=True)
class VehicleState:
    X: float
    Y: float
    heading: float
    speed: float

    def __post_init__(self):
        for name in ("X", "Y", "heading", "speed"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    @classmethod
    def from_array(cls, x) -> "VehicleState":
        return cls(*map(float, x))

    def as_array(self) -> np.ndarray:
        return np.array([self.X, self.Y, self.heading, self.speed])


@dataclass(frozen=True)
class VehicleGeometry:
    l_f: float = 1.2
    l_r: float = 1.6

    def __post_init__(self):
        if not (self.l_f > 0 and self.l_r > 0):
            raise ValueError("axle distances must be positive")

    @property
    def wheelbase(self) -> float:
        return self.l_f + self.l_r


@dataclass(frozen=True)
class ContaminationSpec:
    """Per-instant outlier probability ``epsilon`` and covariance scale ``lambda**2``."""

    epsilon: float = 0.1
    inflation_lambda: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.inflation_lambda < 1.0:
            raise ValueError("inflation_lambda must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True)
class ControlPolicy:
    """Open-loop steering sinusoid with constant acceleration, or pure pursuit.

    ``kind="pure_pursuit"`` tracks the sinusoidal road ``Y = road_amplitude *
    sin(2 pi X / road_wavelength)`` from the *estimated* state; it needs an
    estimator in the loop (see :func:`simulate_closed_loop`).
    """

    kind: str = "open_loop"
    steering_amplitude: float = 0.1
    steering_period: float = 4.0
    acceleration: float = 0.0
    road_amplitude: float = 5.0
    road_wavelength: float = 60.0
    lookahead: float = 6.0
    target_speed: float = 10.0
    speed_gain: float = 0.5

    def __post_init__(self):
        if self.kind not in ("open_loop", "cruise", "pure_pursuit"):
            raise ValueError(f"unknown control policy {self.kind!r}")


@dataclass(frozen=True)
class Scenario:
    """Simulation configuration.

    ``Q_diag``/``R_diag`` are the nominal covariances handed to the filters.
    ``true_Q_diag``/``true_R_diag`` override the covariances used to generate
    data (default: the nominal ones). ``dynamics="input_affine"`` makes the
    unknown input enter exactly linearly through its Jacobian, so generated
    data satisfy the LTV model up to linearization of the drift only.
    ``linearization`` picks the point the filters' matrices are built at.
    """

    geometry: VehicleGeometry = field(default_factory=VehicleGeometry)
    dt: float = 0.02
    horizon: int = 2000
    Q_diag: tuple = (1.0, 1.0, 0.01, 0.001)
    R_diag: tuple = (0.1, 0.1, 0.01, 0.001)
    true_Q_diag: Optional[tuple] = None
    true_R_diag: Optional[tuple] = None
    contamination: ContaminationSpec = field(default_factory=ContaminationSpec)
    control: ControlPolicy = field(default_factory=ControlPolicy)
    robust: RobustParams = field(default_factory=RobustParams)
    dre_robust: RobustParams = field(default_factory=lambda: RobustParams(theta2_x=3.0, theta2_v=3.0, clip_K=5.0))
    x0: tuple = (0.0, 0.0, 0.0, 10.0)
    P0_diag: tuple = (1.0, 1.0, 0.01, 0.01)
    P0_d: float = 10.0
    unknown_input_scale: float = 1.0
    slip_gain: float = 1.0
    dynamics: str = "nonlinear"
    linearization: str = "estimate"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ValueError("horizon must be a positive integer")
        for name in ("Q_diag", "R_diag", "x0", "P0_diag", "true_Q_diag", "true_R_diag"):
            v = getattr(self, name)
            if v is None:
                continue
            v = tuple(float(a) for a in v)
            if len(v) != N_STATE:
                raise ValueError(f"{name} must have {N_STATE} entries")
            object.__setattr__(self, name, v)
        for name in ("Q_diag", "true_Q_diag", "true_R_diag", "P0_diag"):
            v = getattr(self, name)
            if v is not None and min(v) < 0:
                raise ValueError(f"{name} entries must be non-negative")
        if min(self.R_diag) <= 0:
            raise ValueError("R_diag entries must be positive")
        if self.P0_d <= 0:
            raise ValueError("P0_d must be positive")
        if self.dynamics not in ("nonlinear", "input_affine"):
            raise ValueError(f"unknown dynamics {self.dynamics!r}")
        if self.linearization not in ("estimate", "truth"):
            raise ValueError(f"unknown linearization {self.linearization!r}")

    @property
    def Q(self) -> np.ndarray:
        return np.diag(self.Q_diag)

    @property
    def R(self) -> np.ndarray:
        return np.diag(self.R_diag)

    @property
    def true_Q(self) -> np.ndarray:
        return np.diag(self.Q_diag if self.true_Q_diag is None else self.true_Q_diag)

    @property
    def true_R(self) -> np.ndarray:
        return np.diag(self.R_diag if self.true_R_diag is None else self.true_R_diag)


def slip_angle(steering_alpha: float, geom: VehicleGeometry) -> float:
    """Slip angle ``arctan(l_r / (l_f + l_r) * tan(alpha))``."""
    if not abs(steering_alpha) < math.pi / 2:
        raise DomainError("steering angle must satisfy |alpha| < pi/2")
    return math.atan(geom.l_r / geom.wheelbase * math.tan(steering_alpha))


def unknown_input_signal(k: int) -> np.ndarray:
    """Square wave ``sign(sin(0.005 k)) * [1, 10]``."""
    if k < 0:
        raise ValueError("k must be non-negative")
    return float(np.sign(math.sin(0.005 * k))) * np.array([1.0, 10.0])


def bicycle_step(state, u, d, dt: float, geom: VehicleGeometry, slip_gain: float = 1.0) -> np.ndarray:
    """Forward-Euler kinematic bicycle step.

    The first unknown-input channel perturbs the slip angle by
    ``slip_gain * d1``; the second adds to the acceleration. With the default
    ``slip_gain = 1`` the input Jacobian in ``d`` equals the one in ``u``.
    Accepts a :class:`VehicleState` or an array; returns an array with
    continuous heading.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    X, Y, psi, v = state.as_array() if isinstance(state, VehicleState) else state
    beta = u[0] + d[0] * slip_gain
    return np.array([
        X + dt * v * math.cos(psi + beta),
        Y + dt * v * math.sin(psi + beta),
        psi + dt * v / geom.l_r * math.sin(beta),
        v + dt * (u[1] + d[1]),
    ])


def linearize(state, u, geom: VehicleGeometry, dt: float):
    """Jacobians ``(A, B)`` of :func:`bicycle_step` at ``(state, u, d=0)``."""
    _, _, psi, v = state.as_array() if isinstance(state, VehicleState) else state
    beta = u[0]
    cb, sb = math.cos(psi + beta), math.sin(psi + beta)
    A = np.eye(N_STATE)
    A[0, 2] = -dt * v * sb
    A[0, 3] = dt * cb
    A[1, 2] = dt * v * cb
    A[1, 3] = dt * sb
    A[2, 3] = dt * math.sin(beta) / geom.l_r
    B = np.zeros((N_STATE, N_INPUT))
    B[0, 0] = -dt * v * sb
    B[1, 0] = dt * v * cb
    B[2, 0] = dt * v * math.cos(beta) / geom.l_r
    B[3, 1] = dt
    return A, B


def input_jacobian(B: np.ndarray, slip_gain: float = 1.0) -> np.ndarray:
    """Jacobian of :func:`bicycle_step` in ``d``: the ``B`` columns, the slip
    channel scaled by ``slip_gain``."""
    return B * np.array([slip_gain, 1.0])


def local_transition(state, u, geom: VehicleGeometry, dt: float, Q, C, R, slip_gain: float = 1.0) -> Transition:
    """Affine linearization of one step about ``(state, u)``."""
    state = np.asarray(state, dtype=float)
    A, B = linearize(state, u, geom, dt)
    c = bicycle_step(state, u, (0.0, 0.0), dt, geom) - A @ state - B @ u
    return Transition(A, B, input_jacobian(B, slip_gain), c, Q, C, R)


def _rng(seed: int, stream: int, k: int) -> np.random.Generator:
    # Counter-based stream: the draw at step k depends only on (seed, stream, k).
    return np.random.Generator(np.random.Philox(key=[seed, stream * (1 << 32) + k]))


def _contaminated_draw(root, spec: ContaminationSpec, rng: np.random.Generator):
    outlier = bool(rng.random() < spec.epsilon)
    z = rng.standard_normal(root.shape[0])
    scale = spec.inflation_lambda if outlier else 1.0
    return scale * (root @ z), outlier


def sample_measurement_noise(R, spec: ContaminationSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw from ``(1 - eps) N(0, R) + eps N(0, lambda^2 R)``."""
    return _contaminated_draw(sym_sqrt(np.asarray(R, dtype=float)), spec, rng)[0]


def measurement_noise(R, spec: ContaminationSpec, k: int) -> np.ndarray:
    return sample_measurement_noise(R, spec, _rng(spec.seed, STREAM_MEASUREMENT, k))


def process_noise(Q_root: np.ndarray, seed: int, k: int) -> np.ndarray:
    return Q_root @ _rng(seed, STREAM_PROCESS, k).standard_normal(Q_root.shape[0])


def open_loop_control(scenario: Scenario, k: int, x_true=None) -> np.ndarray:
    """Sinusoidal steering; constant acceleration, or for ``kind="cruise"``
    a proportional speed hold acting on the true speed."""
    pol = scenario.control
    t = k * scenario.dt
    alpha = pol.steering_amplitude * math.sin(2.0 * math.pi * t / pol.steering_period)
    accel = pol.acceleration
    if pol.kind == "cruise":
        accel = pol.speed_gain * (pol.target_speed - x_true[3])
    return np.array([slip_angle(alpha, scenario.geometry), accel])


def pure_pursuit_control(scenario: Scenario, x_est) -> np.ndarray:
    """Steer towards a look-ahead point on the sinusoidal road."""
    pol = scenario.control
    X, Y, psi, v = x_est
    tx = X + pol.lookahead
    ty = pol.road_amplitude * math.sin(2.0 * math.pi * tx / pol.road_wavelength)
    eta = math.remainder(math.atan2(ty - Y, tx - X) - psi, 2.0 * math.pi)
    ld = math.hypot(tx - X, ty - Y)
    alpha = math.atan2(2.0 * scenario.geometry.wheelbase * math.sin(eta), ld)
    alpha = max(-1.2, min(1.2, alpha))
    accel = pol.speed_gain * (pol.target_speed - v)
    return np.array([slip_angle(alpha, scenario.geometry), accel])


@dataclass
class TrajectoryRecord:
    """Simulated data shared by all estimators; every series has ``horizon`` rows.

    Row ``i`` describes filter step ``k = i + 1``: ``u[i] = u_{k-1}``,
    ``d[i] = d_{k-1}``, ``x[i] = x_k``, ``y[i] = y_k``. ``A, B, G, c`` hold
    the transition from ``k - 1`` to ``k`` linearized about the true state.
    """

    x0: np.ndarray
    x: np.ndarray
    d: np.ndarray
    u: np.ndarray
    y: np.ndarray
    A: np.ndarray
    B: np.ndarray
    G: np.ndarray
    c: np.ndarray
    C: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    outlier: np.ndarray

    @property
    def horizon(self) -> int:
        return self.x.shape[0]

    def truth_model(self) -> LtvModel:
        """LTV model about the true trajectory, indexed so ``transition(k)``
        returns row ``k - 1``."""
        return LtvModel(A=self.A, B=self.B, G=self.G, c=self.c, C=self.C, Q=self.Q, R=self.R)

    def arrays(self) -> dict:
        return {name: getattr(self, name) for name in (
            "x0", "x", "d", "u", "y", "A", "B", "G", "c", "C", "Q", "R", "outlier")}

    def digest(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for name, arr in self.arrays().items():
            h.update(name.encode())
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def _advance(scenario: Scenario, x, u, d, k: int, Q_root) -> tuple:
    geom, dt, sg = scenario.geometry, scenario.dt, scenario.slip_gain
    A, B = linearize(x, u, geom, dt)
    G = input_jacobian(B, sg)
    drift = bicycle_step(x, u, (0.0, 0.0), dt, geom)
    c = drift - A @ x - B @ u
    if scenario.dynamics == "input_affine":
        x_next = drift + G @ d
    else:
        x_next = bicycle_step(x, u, d, dt, geom, sg)
    x_next = x_next + process_noise(Q_root, scenario.contamination.seed, k)
    return x_next, A, B, G, c


def _measure(scenario: Scenario, x, k: int, R_root):
    spec = scenario.contamination
    v, flag = _contaminated_draw(R_root, spec, _rng(spec.seed, STREAM_MEASUREMENT, k))
    return x + v, flag


def simulate(scenario: Scenario) -> TrajectoryRecord:
    """Roll the vehicle forward under open-loop control.

    Deterministic in ``scenario`` (including the contamination seed).
    """
    if scenario.control.kind == "pure_pursuit":
        raise ValueError("pure pursuit needs an estimator in the loop; use simulate_closed_loop()")
    N = int(scenario.horizon)
    Q_root = sym_sqrt(scenario.true_Q)
    R_root = sym_sqrt(scenario.true_R)
    x = np.array(scenario.x0, dtype=float)
    out = {name: [] for name in ("x", "d", "u", "y", "A", "B", "G", "c", "outlier")}
    for k in range(1, N + 1):
        u = open_loop_control(scenario, k - 1, x)
        d = scenario.unknown_input_scale * unknown_input_signal(k - 1)
        x, A, B, G, c = _advance(scenario, x, u, d, k, Q_root)
        y, flag = _measure(scenario, x, k, R_root)
        for name, val in zip(out, (x, d, u, y, A, B, G, c, flag)):
            out[name].append(val)
    return TrajectoryRecord(
        x0=np.array(scenario.x0, dtype=float),
        **{name: np.array(vals) for name, vals in out.items()},
        C=np.eye(N_STATE),
        Q=scenario.Q,
        R=scenario.R,
    )


def simulate_closed_loop(scenario: Scenario, step_fn, belief):
    """Run the vehicle with pure-pursuit control computed from the estimate.

    ``step_fn(belief, u, y, model, k)`` advances the estimator; the filter's
    matrices are linearized about the current estimate. Process and
    measurement noise use the same counter-based streams as
    :func:`simulate`, so different estimators see identical noise draws.

    Returns:
        ``(TrajectoryRecord, outputs)`` with the per-step estimator outputs.
    """
    from .model import FixedTransition

    N = int(scenario.horizon)
    Q_root = sym_sqrt(scenario.true_Q)
    R_root = sym_sqrt(scenario.true_R)
    C = np.eye(N_STATE)
    x = np.array(scenario.x0, dtype=float)
    out = {name: [] for name in ("x", "d", "u", "y", "A", "B", "G", "c", "outlier")}
    outputs = []
    for k in range(1, N + 1):
        u = pure_pursuit_control(scenario, belief.x_hat)
        d = scenario.unknown_input_scale * unknown_input_signal(k - 1)
        x, A, B, G, c = _advance(scenario, x, u, d, k, Q_root)
        y, flag = _measure(scenario, x, k, R_root)
        for name, val in zip(out, (x, d, u, y, A, B, G, c, flag)):
            out[name].append(val)
        tr = local_transition(belief.x_hat, u, scenario.geometry, scenario.dt, scenario.Q, C, scenario.R, scenario.slip_gain)
        step_out, belief = step_fn(belief, u, y, FixedTransition(tr), k)
        outputs.append(step_out)
    record = TrajectoryRecord(
        x0=np.array(scenario.x0, dtype=float),
        **{name: np.array(vals) for name, vals in out.items()},
        C=C,
        Q=scenario.Q,
        R=scenario.R,
    )
    return record, outputs
