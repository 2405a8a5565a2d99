"""Command-line entry point: ``drise {run,validate,reduction-test}``.

Exit codes: 0 success, 1 validation error (or a failed equivalence check),
2 runtime estimation fault, 64 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from importlib import resources

from .bench import (
    ConfigError,
    emit_csv,
    emit_json,
    load_config,
    resolve_output_dir,
    run_benchmark,
    validate_config,
)
from .errors import DriseError, InvalidParams

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def default_config_path():
    return resources.files("drise").joinpath("data/default_config.json")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="drise", description="Robust input and state estimation benchmark.")
    sub = parser.add_subparsers(dest="command", metavar="{run,validate,reduction-test}", parser_class=_Parser)
    sub.required = True

    run = sub.add_parser("run", help="run the Monte-Carlo benchmark")
    run.add_argument("--config", required=True, help="JSON benchmark config")
    run.add_argument("--seed", type=int, action="append", help="seed to run (repeatable; overrides the config)")
    run.add_argument("--out", help="output directory (falls back to $DRISE_OUT, then the config)")
    run.add_argument("--workers", type=int, default=1, help="parallel worker processes")

    val = sub.add_parser("validate", help="check a config without running estimators")
    val.add_argument("--config", required=True)

    red = sub.add_parser("reduction-test", help="check DRISE against ISE and KF in the nominal limit")
    red.add_argument("--config", help="also check on a recorded trajectory of this config (default: shipped config)")
    red.add_argument("--models", type=int, default=10)
    red.add_argument("--steps", type=int, default=200)
    return parser


def _load(path, err):
    try:
        cfg = load_config(path)
        validate_config(cfg)
    except FileNotFoundError:
        print(f"error: config file not found: {path}", file=err)
        return None
    except InvalidParams as exc:
        print(f"invalid parameter {exc.field}: {exc.reason}", file=err)
        return None
    except (ConfigError, DriseError, ValueError) as exc:
        print(f"invalid config: {exc}", file=err)
        return None
    return cfg


def _cmd_validate(args, out, err) -> int:
    cfg = _load(args.config, err)
    if cfg is None:
        return EXIT_INVALID
    print(f"ok: {args.config}", file=out)
    return EXIT_OK


def _cmd_run(args, out, err) -> int:
    cfg = _load(args.config, err)
    if cfg is None:
        return EXIT_INVALID
    if args.seed:
        if any(s < 0 for s in args.seed):
            print("invalid config: seeds must be unsigned integers", file=err)
            return EXIT_INVALID
        cfg = dataclasses.replace(cfg, seeds=tuple(args.seed))
    if args.workers < 1:
        print("error: --workers must be at least 1", file=err)
        return EXIT_USAGE
    report = run_benchmark(cfg, workers=args.workers)
    target = resolve_output_dir(args.out, cfg)
    try:
        if "csv" in cfg.emit:
            emit_csv(report, target)
        if "json" in cfg.emit:
            emit_json(report, target)
    except OSError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_RUNTIME

    print(f"{'estimator':<10}{'rmse_state':>22}{'rmse_input':>22}", file=out)
    for est, metrics in report.aggregate().items():
        cols = []
        for metric in ("rmse_state", "rmse_input"):
            if metric in metrics:
                med, iqr = metrics[metric]
                cols.append(f"{med:10.4f} (iqr {iqr:.3f})")
            else:
                cols.append("-")
        print(f"{est:<10}{cols[0]:>22}{cols[1]:>22}", file=out)
    failed = [r for r in report.runs if not r.ok]
    for r in failed:
        print(f"failed cell {r.estimator}/seed {r.seed}: {r.error}", file=err)
    print(f"results written to {target}", file=out)
    return EXIT_RUNTIME if failed else EXIT_OK


def _cmd_reduction(args, out, err) -> int:
    from .bench import seed_scenario
    from .reduction import TOLERANCE, reduction_suite
    from .vehicle import simulate

    path = args.config or default_config_path()
    cfg = _load(path, err)
    if cfg is None:
        return EXIT_INVALID
    extra = []
    if cfg.scenario.control.kind != "pure_pursuit":
        import numpy as np

        sc = dataclasses.replace(seed_scenario(cfg.scenario, cfg.seeds[0]), horizon=min(cfg.scenario.horizon, args.steps))
        rec = simulate(sc)
        extra.append((rec.truth_model(), np.array(sc.x0), np.diag(sc.P0_diag), rec.u, rec.y))
    try:
        res = reduction_suite(n_models=args.models, steps=args.steps, extra=extra)
    except DriseError as exc:
        print(f"estimation fault: {exc}", file=err)
        return EXIT_RUNTIME
    for label, e in res.runs:
        worst = max(e["x_hat"], e["d_hat"], e["P_x"], e["P_d"])
        print(f"{label:<22} max|diff| {worst:.2e}  |MCG-I| {e['gain_identity']:.2e}", file=out)
    ok = res.passed(TOLERANCE)
    print(f"{'PASS' if ok else 'FAIL'}: max deviation {res.max_error:.2e} (tolerance {TOLERANCE:.0e})", file=out)
    return EXIT_OK if ok else EXIT_INVALID


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    args = build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "validate": _cmd_validate, "reduction-test": _cmd_reduction}[args.command]
    try:
        return handler(args, out, err)
    except DriseError as exc:
        print(f"estimation fault: {exc}", file=err)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
