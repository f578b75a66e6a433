"""Command-line entry point: run / verify / fit / sweep.

Exit codes: 0 success, 1 runtime or verification failure, 2 argument or
config errors (usage problems).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .harness import (
    ConfigError,
    ExperimentConfig,
    build_problem,
    config_constants,
    fit_loglog_slope,
    load_config,
    parse_schedule_spec,
    read_results_csv,
    run_experiment,
    write_results,
)
from .problems import MinMaxOperator
from .schedules import ExperimentSchedule, PowerLawSchedule
from .smoothness import SymmetryConstants, fit_symmetry_constants, verify_assumptions

DEFAULT_SWEEP_CELLS = ["1.5,0.33,0.6", "3.0,0.5,0.6", "4.0,0.8,0.6", "6.0,0.8,0.6"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clipvi",
        description="Clipped stochastic methods for variational inequalities.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="path to a flat key=value config file")
        p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
        p.add_argument("--workers", type=int, default=1, help="parallel method batches")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config key (repeatable)",
        )
        p.add_argument("--raw-traces", action="store_true", help="also dump per-run trace CSVs")

    p_run = sub.add_parser("run", help="run the configured experiment and write CSV + JSON")
    common(p_run)

    p_verify = sub.add_parser("verify", help="check the problem's assumptions and print a report")
    common(p_verify)
    p_verify.add_argument(
        "--samples", type=int, default=10_000, help="sample pairs per check (default 10000)"
    )

    p_fit = sub.add_parser("fit", help="re-fit log-log slopes on an existing results CSV")
    common(p_fit)
    p_fit.add_argument("--csv", default=None, help="results CSV (default: <out>/results.csv)")

    p_sweep = sub.add_parser("sweep", help="run a grid of (p, alpha, q) cells")
    common(p_sweep)
    p_sweep.add_argument(
        "--cell",
        dest="cells",
        action="append",
        default=None,
        metavar="P,ALPHA,Q",
        help="one sweep cell as 'p,alpha,q' (repeatable; default: the four benchmark panels)",
    )
    return parser


def _parse_overrides(pairs) -> dict:
    overrides = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"--set expects KEY=VALUE, got {pair!r}")
        key, value = pair.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def _load(args) -> ExperimentConfig:
    overrides = _parse_overrides(args.overrides)
    if args.raw_traces:
        overrides["raw_traces"] = "true"
    if args.out is not None:
        overrides["out"] = args.out
    return load_config(args.config, overrides)


def _out_dir(config: ExperimentConfig, args) -> Path:
    return Path(args.out or config.out or "results")


def cmd_run(args) -> int:
    config = _load(args)
    result = run_experiment(config, master_seed=args.seed, workers=args.workers)
    csv_path = write_results(result, _out_dir(config, args))
    for label, schedule in zip(result.labels, result.schedules):
        slopes = result.slopes[label]
        print(
            f"[{label}] {config.seeds} runs x {config.iterations} iterations, "
            f"schedule {schedule}, slope_last={_fmt_slope(slopes['last'])}, "
            f"slope_avg={_fmt_slope(slopes['avg'])}"
        )
    print(f"results written to {csv_path}")
    return 0


def _fmt_slope(s) -> str:
    return "n/a" if s is None else f"{s:.4f}"


def cmd_verify(args) -> int:
    config = _load(args)
    problem = build_problem(config)
    constants = config_constants(config)
    if constants is None:
        constants = _auto_constants(config, problem)
        print(
            f"using constants alpha={constants.alpha:g}, L0={constants.L0:.6g}, "
            f"L1={constants.L1:.6g} (no L0/L1 in config)"
        )
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(args.seed, spawn_key=(2, 0, 0))))
    report = verify_assumptions(
        problem,
        constants,
        n_samples=args.samples,
        box_half_width=2.0 * config.start_radius,
        rng=rng,
    )
    for line in report.summary_lines():
        print(line)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "verification.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
        print(f"report written to {out / 'verification.json'}")
    return 0 if report.passed else 1


def _auto_constants(config: ExperimentConfig, problem):
    """Exact constants where available, otherwise fit inside the verification box."""
    half_width = 2.0 * config.start_radius
    alpha = config.alpha
    if config.operator == "neg_identity":
        return SymmetryConstants(alpha=alpha, L0=1.0, L1=0.0)
    if config.p == 2.0:
        return SymmetryConstants(alpha=alpha, L0=linear_operator_norm(config.m), L1=0.0)
    return fit_symmetry_constants(
        problem.operator, config.m, alpha, box_half_width=half_width, seed=0
    )


def linear_operator_norm(m: int) -> float:
    """Largest singular value of the p = 2 benchmark operator's matrix."""
    op = MinMaxOperator(p=2.0)
    matrix = np.stack([op(row) for row in np.eye(m)], axis=1)
    return float(np.linalg.svd(matrix, compute_uv=False)[0])


def cmd_fit(args) -> int:
    config = _load(args)
    out_dir = _out_dir(config, args)
    csv_path = Path(args.csv) if args.csv else out_dir / "results.csv"
    data = read_results_csv(csv_path)
    window = (config.iterations / 10.0, float(config.iterations))
    labels = sorted(set(data["method"]), key=data["method"].index)
    slopes = {}
    for label in labels:
        mask = np.array([meth == label for meth in data["method"]])
        ks = data["k"][mask]
        slopes[label] = {}
        for measure, column in (("last", "mean_dist2_last"), ("avg", "mean_dist2_avg")):
            try:
                slopes[label][measure] = fit_loglog_slope(zip(ks, data[column][mask]), window)
            except ValueError:
                slopes[label][measure] = None
        print(
            f"[{label}] slope_last={_fmt_slope(slopes[label]['last'])}, "
            f"slope_avg={_fmt_slope(slopes[label]['avg'])}"
        )
    sidecar = csv_path.with_suffix(".json")
    if sidecar.exists():
        payload = json.loads(sidecar.read_text())
        payload["slopes"] = slopes
        sidecar.write_text(json.dumps(payload, indent=2) + "\n")
        print(f"updated slopes in {sidecar}")
    return 0


def _retune_schedule_q(spec: str, q: float) -> str:
    if spec.strip() == "theorem":
        return spec
    schedule = parse_schedule_spec(spec)
    if isinstance(schedule, (PowerLawSchedule, ExperimentSchedule)):
        return dataclasses.replace(schedule, q=q).describe()
    return spec


def cmd_sweep(args) -> int:
    cells_raw = args.cells if args.cells else DEFAULT_SWEEP_CELLS
    cells = []
    for cell in cells_raw:
        parts = cell.split(",")
        if len(parts) != 3:
            raise ConfigError(f"--cell expects 'p,alpha,q', got {cell!r}")
        try:
            cells.append(tuple(float(x.strip()) for x in parts))
        except ValueError:
            raise ConfigError(f"--cell has non-numeric entries: {cell!r}") from None

    base = _load(args)
    out_root = _out_dir(base, args)
    manifest = []
    for p, alpha, q in cells:
        methods = tuple(
            (kind, _retune_schedule_q(spec, q)) for kind, spec in base.methods
        )
        config = dataclasses.replace(base, p=p, alpha=alpha, q=q, methods=methods)
        name = f"cell_p{p:g}_alpha{alpha:g}_q{q:g}"
        result = run_experiment(config, master_seed=args.seed, workers=args.workers)
        csv_path = write_results(result, out_root, name=name)
        print(f"[{name}] written to {csv_path}")
        manifest.append(
            {
                "p": p,
                "alpha": alpha,
                "q": q,
                "csv": csv_path.name,
                "json": f"{name}.json",
                "title": f"p={p:g}, alpha={alpha:g}, q={q:g}",
            }
        )
    manifest_path = out_root / "manifest.json"
    manifest_path.write_text(json.dumps({"cells": manifest}, indent=2) + "\n")
    print(f"manifest written to {manifest_path}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"run": cmd_run, "verify": cmd_verify, "fit": cmd_fit, "sweep": cmd_sweep}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(f"run 'clipvi {args.command} --help' for usage", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - surface runtime failures as exit 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
