"""Monte-Carlo benchmark: shared simulated data, four estimators, RMSE tables."""

from __future__ import annotations

import csv
import dataclasses
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DriseError, LengthMismatch
from .estimators import dre_step, drise_step, ise_step, kf_step
from .matfound import is_psd_stack
from .model import Belief, FixedTransition, RobustParams, validate_params, check_rank_condition
from .vehicle import (
    ContaminationSpec,
    ControlPolicy,
    Scenario,
    TrajectoryRecord,
    VehicleGeometry,
    local_transition,
    simulate,
    simulate_closed_loop,
)

ESTIMATORS = ("kf", "ise", "dre", "drise")
INPUT_ESTIMATORS = ("ise", "drise")
EMIT_FORMATS = ("csv", "json")
PSD_TOL = 1e-8

SERIES = (
    "state_error_norm",
    "input_error_norm",
    "trace_Px",
    "trace_Pd",
    "X_hat",
    "Y_hat",
    "input_error_slip",
    "input_error_accel",
)


class ConfigError(DriseError, ValueError):
    pass


def rmse(estimates, truths) -> float:
    """Root mean squared Euclidean error over a sequence of vectors."""
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truths, dtype=float)
    if est.shape != tru.shape:
        raise LengthMismatch(f"estimates {est.shape} vs truths {tru.shape}")
    if est.shape[0] < 1:
        raise LengthMismatch("need at least one sample")
    err = (est - tru).reshape(est.shape[0], -1)
    return float(np.sqrt(np.mean(np.sum(err**2, axis=1))))


@dataclass(frozen=True)
class BenchConfig:
    scenario: Scenario = field(default_factory=Scenario)
    estimators: tuple = ESTIMATORS
    seeds: tuple = tuple(range(20))
    output_dir: str = "results"
    emit: tuple = ("csv", "json")

    def __post_init__(self):
        est = tuple(self.estimators)
        if not est:
            raise ConfigError("at least one estimator is required")
        bad = [e for e in est if e not in ESTIMATORS]
        if bad:
            raise ConfigError(f"unknown estimators {bad}; choose from {list(ESTIMATORS)}")
        seeds = tuple(int(s) for s in self.seeds)
        if not seeds:
            raise ConfigError("at least one seed is required")
        if any(s < 0 for s in seeds):
            raise ConfigError("seeds must be unsigned integers")
        emit = tuple(self.emit)
        bad = [e for e in emit if e not in EMIT_FORMATS]
        if bad:
            raise ConfigError(f"unknown emit formats {bad}")
        object.__setattr__(self, "estimators", est)
        object.__setattr__(self, "seeds", seeds)
        object.__setattr__(self, "emit", emit)


def _build(cls, data, nested=None):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{cls.__name__} must be a JSON object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    kwargs = dict(data)
    for key, sub in (nested or {}).items():
        if key in kwargs:
            kwargs[key] = _build(sub, kwargs[key])
    for key, value in kwargs.items():
        if isinstance(value, list):
            kwargs[key] = tuple(value)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, DriseError):
            raise
        raise ConfigError(f"{cls.__name__}: {exc}") from exc


def scenario_from_dict(data) -> Scenario:
    return _build(Scenario, data, {
        "geometry": VehicleGeometry,
        "contamination": ContaminationSpec,
        "control": ControlPolicy,
        "robust": RobustParams,
        "dre_robust": RobustParams,
    })


def config_from_dict(data) -> BenchConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    data = dict(data)
    scenario = scenario_from_dict(data.pop("scenario", None))
    cfg = _build(BenchConfig, data)
    return dataclasses.replace(cfg, scenario=scenario)


def load_config(path) -> BenchConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data)


def config_to_dict(cfg: BenchConfig) -> dict:
    def conv(obj):
        if dataclasses.is_dataclass(obj):
            return {f.name: conv(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        if isinstance(obj, tuple):
            return [conv(v) for v in obj]
        return obj

    return conv(cfg)


def validate_config(cfg: BenchConfig) -> None:
    """Parameter and model checks done before any estimator runs.

    Simulates a short stretch of the first seed to check the rank condition
    on the generated matrices.
    """
    validate_params(cfg.scenario.robust)
    validate_params(cfg.scenario.dre_robust)
    sc = dataclasses.replace(
        cfg.scenario,
        horizon=min(cfg.scenario.horizon, 50),
        contamination=dataclasses.replace(cfg.scenario.contamination, seed=cfg.seeds[0]),
    )
    if sc.control.kind != "pure_pursuit":
        model = simulate(sc).truth_model()
        for k in range(1, sc.horizon + 1):
            check_rank_condition(model, k)


@dataclass
class RunReport:
    """Result of one (estimator, seed) cell."""

    estimator: str
    seed: int
    rmse_state: Optional[float] = None
    rmse_input: Optional[float] = None
    series: dict = field(default_factory=dict)
    psd_violations: int = 0
    wall_clock: float = 0.0
    error: Optional[str] = None
    input_digest: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class BenchReport:
    config: BenchConfig
    runs: list
    truth: dict = field(default_factory=dict)

    def cells(self, estimator: str) -> list:
        return [r for r in self.runs if r.estimator == estimator]

    def aggregate(self) -> dict:
        """``{estimator: {metric: (median, iqr)}}`` over successful seeds."""
        agg = {}
        for est in self.config.estimators:
            rows = {}
            for metric in ("rmse_state", "rmse_input"):
                vals = [getattr(r, metric) for r in self.cells(est) if r.ok and getattr(r, metric) is not None]
                if vals:
                    q1, med, q3 = np.percentile(vals, [25, 50, 75])
                    rows[metric] = (float(med), float(q3 - q1))
            agg[est] = rows
        return agg


def _stepper(name: str, scenario: Scenario):
    params = scenario.dre_robust if name == "dre" else scenario.robust
    if name == "kf":
        return kf_step, 0
    if name == "ise":
        return ise_step, None
    if name == "dre":
        return (lambda b, u, y, m, k: dre_step(b, u, y, m, params, k)), 0
    if name == "drise":
        return (lambda b, u, y, m, k: drise_step(b, u, y, m, params, k)), None
    raise ValueError(f"unknown estimator {name!r}")


def initial_belief(scenario: Scenario, p: int) -> Belief:
    return Belief.initial(scenario.x0, np.diag(scenario.P0_diag), p=p, input_variance=scenario.P0_d)


def _collect(record: TrajectoryRecord, outputs, name: str, check_psd: bool):
    N = record.horizon
    x_hat = np.array([o.x_hat for o in outputs])
    trace_px = np.array([np.trace(o.P_x) for o in outputs])
    violations = 0
    if check_psd:
        stacks = [np.array([o.P_x for o in outputs]), np.array([o.innovation_cov for o in outputs])]
        if outputs[0].P_d is not None:
            stacks.append(np.array([o.P_d for o in outputs]))
        violations = int(sum((~is_psd_stack(st, PSD_TOL)).sum() for st in stacks))
    err = x_hat - record.x
    series = {
        "state_error_norm": np.linalg.norm(err, axis=1),
        "trace_Px": trace_px,
        "X_hat": x_hat[:, 0],
        "Y_hat": x_hat[:, 1],
    }
    rmse_in = None
    if name in INPUT_ESTIMATORS:
        d_hat = np.array([o.d_hat for o in outputs])
        derr = d_hat - record.d
        series["input_error_norm"] = np.linalg.norm(derr, axis=1)
        series["trace_Pd"] = np.array([np.trace(o.P_d) for o in outputs])
        series["input_error_slip"] = derr[:, 0]
        series["input_error_accel"] = derr[:, 1]
        rmse_in = rmse(d_hat, record.d)
    assert all(len(v) == N for v in series.values())
    return rmse(x_hat, record.x), rmse_in, series, violations


def run_filter(record: TrajectoryRecord, scenario: Scenario, name: str, linearization: Optional[str] = None):
    """Run one estimator over a recorded trajectory.

    Returns:
        list of per-step :class:`~drise.model.StepOutput`.
    """
    step, p = _stepper(name, scenario)
    p = record.G.shape[-1] if p is None else p
    belief = initial_belief(scenario, p)
    mode = linearization or scenario.linearization
    outputs = []
    if mode == "truth":
        model = record.truth_model()
        for k in range(1, record.horizon + 1):
            out, belief = step(belief, record.u[k - 1], record.y[k - 1], model, k)
            outputs.append(out)
        return outputs
    geom, dt, Q, C, R = scenario.geometry, scenario.dt, record.Q, record.C, record.R
    for k in range(1, record.horizon + 1):
        u = record.u[k - 1]
        tr = local_transition(belief.x_hat, u, geom, dt, Q, C, R, scenario.slip_gain)
        out, belief = step(belief, u, record.y[k - 1], FixedTransition(tr), k)
        outputs.append(out)
    return outputs


def seed_scenario(scenario: Scenario, seed: int) -> Scenario:
    return dataclasses.replace(scenario, contamination=dataclasses.replace(scenario.contamination, seed=seed))


def run_seed(cfg: BenchConfig, seed: int, check_psd: bool = True):
    """Simulate one seed and run every selected estimator on it.

    Returns:
        ``(record_or_None, [RunReport, ...])``. Estimator faults are caught
        and recorded on the cell.
    """
    sc = seed_scenario(cfg.scenario, seed)
    closed = sc.control.kind == "pure_pursuit"
    record = None if closed else simulate(sc)
    digest = record.digest() if record is not None else None
    reports = []
    for name in cfg.estimators:
        t0 = time.perf_counter()
        rep = RunReport(estimator=name, seed=seed, input_digest=digest)
        try:
            if closed:
                step, p = _stepper(name, sc)
                belief = initial_belief(sc, 2 if p is None else p)
                rec, outputs = simulate_closed_loop(sc, step, belief)
                rep.series["X_true"], rep.series["Y_true"] = rec.x[:, 0], rec.x[:, 1]
            else:
                rec, outputs = record, run_filter(record, sc, name)
            rep.rmse_state, rep.rmse_input, series, rep.psd_violations = _collect(rec, outputs, name, check_psd)
            rep.series.update(series)
        except (DriseError, np.linalg.LinAlgError, FloatingPointError) as exc:
            rep.error = f"{type(exc).__name__}: {exc}"
        rep.wall_clock = time.perf_counter() - t0
        reports.append(rep)
    return record, reports


def run_benchmark(cfg: BenchConfig, check_psd: bool = True, workers: int = 1) -> BenchReport:
    """Run every (seed, estimator) cell. Deterministic given ``cfg``."""
    validate_params(cfg.scenario.robust)
    validate_params(cfg.scenario.dre_robust)
    runs, truth = [], {}
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_seed_star, [(cfg, s, check_psd) for s in cfg.seeds]))
    else:
        results = [run_seed(cfg, s, check_psd) for s in cfg.seeds]
    for seed, (record, reports) in zip(cfg.seeds, results):
        runs.extend(reports)
        if record is not None:
            truth[seed] = {"X_true": record.x[:, 0], "Y_true": record.x[:, 1]}
    return BenchReport(config=cfg, runs=runs, truth=truth)


def _run_seed_star(args):
    return run_seed(*args)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _open(path: Path):
    try:
        return open(path, "w", encoding="utf-8", newline="")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def emit_csv(report: BenchReport, path) -> list:
    """Write one ``step,estimator,seed,value`` file per series plus ``summary.csv``.

    Returns:
        the list of files written.
    """
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out}: {exc.strerror}") from exc
    written = []
    names = list(SERIES) + ["X_true", "Y_true"]
    for name in names:
        rows = []
        for rep in report.runs:
            if not rep.ok or name not in rep.series:
                continue
            rows.append((rep.estimator, rep.seed, rep.series[name]))
        if name in ("X_true", "Y_true"):
            rows.extend(("truth", seed, tr[name]) for seed, tr in report.truth.items())
        if not rows:
            continue
        fp = out / f"{name}.csv"
        with _open(fp) as fh:
            fh.write("step,estimator,seed,value\n")
            for est, seed, values in rows:
                for i, v in enumerate(values, start=1):
                    fh.write(f"{i},{est},{seed},{_fmt(v)}\n")
        written.append(fp)

    fp = out / "summary.csv"
    with _open(fp) as fh:
        fh.write("estimator,metric,median,iqr\n")
        for est, metrics in report.aggregate().items():
            for metric, (med, iqr) in metrics.items():
                fh.write(f"{est},{metric},{_fmt(med)},{_fmt(iqr)}\n")
    written.append(fp)
    return written


def read_series_csv(path) -> dict:
    """Parse a series file back into ``{(estimator, seed): np.ndarray}``."""
    data = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            data.setdefault((row["estimator"], int(row["seed"])), []).append((int(row["step"]), float(row["value"])))
    return {key: np.array([v for _, v in sorted(rows)]) for key, rows in data.items()}


def emit_json(report: BenchReport, path) -> list:
    """Write ``report.json`` (deterministic data) and ``timing.json`` (wall clock)."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    agg = report.aggregate()
    doc = {
        "config": config_to_dict(report.config),
        "aggregate": {e: {m: {"median": v[0], "iqr": v[1]} for m, v in ms.items()} for e, ms in agg.items()},
        "runs": [
            {
                "estimator": r.estimator,
                "seed": r.seed,
                "rmse_state": r.rmse_state,
                "rmse_input": r.rmse_input,
                "psd_violations": r.psd_violations,
                "error": r.error,
                "input_digest": r.input_digest,
            }
            for r in report.runs
        ],
    }
    fp = out / "report.json"
    with _open(fp) as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    tp = out / "timing.json"
    with _open(tp) as fh:
        json.dump([{"estimator": r.estimator, "seed": r.seed, "wall_clock": r.wall_clock} for r in report.runs], fh, indent=2)
        fh.write("\n")
    return [fp, tp]


def resolve_output_dir(cli_out: Optional[str], cfg: BenchConfig) -> str:
    return cli_out or os.environ.get("DRISE_OUT") or cfg.output_dir
