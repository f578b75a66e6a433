"""Experiment orchestration: config files, multi-seed execution, aggregation, persistence.

A config is a flat ``key = value`` text file (``#`` starts a comment). Keys:

=================  ======================================================================
p                  operator exponent (> 1)                                   [required]
m                  problem dimension, even                                   [required]
iterations         iteration budget per run                                  [required]
seeds              number of runs per method                                 [required]
method             repeatable: ``<kind>: <schedule>``                        [required]
sigma_entry        per-coordinate oracle noise std (default 0)
operator           ``minmax`` (default) or ``neg_identity``
feasible_set       ``whole_space`` (default), ``ball(R)``, ``box(H)`` for [-H, H]^m
start_radius       norm of the deterministic start point (default 5)
checkpoints        number of log-spaced trace checkpoints (default 200)
mu                 quasi-sharpness constant (default: the benchmark rule)
alpha              smoothness order in (0, 1]; Popov clip exponent (default 0.5)
L0, L1             smoothness constants; enable verification and theorem schedules
q                  exponent for theorem power-law schedules (default 0.6)
out                output directory for results
raw_traces         ``true`` to also dump per-run trace CSVs (default false)
=================  ======================================================================

Method kinds: projection_two_sample, projection_same_sample, korpelevich, popov.
Schedules: ``harmonic(a=..., offset=...)``, ``power_law(b=..., q=...)``,
``experiment(c0=..., q=...)``, or ``theorem`` to derive the published
construction (harmonic with a pilot-estimated C_F for p = 2, power-law with
b = min{1/(4 mu), 1/(2 sqrt(3) (K0+K1+K2))} for p > 2).
"""

from __future__ import annotations

import csv
import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .methods import (
    CALLS_PER_ITERATION,
    MethodKind,
    default_checkpoints,
    default_start,
    initial_state,
    run_batch,
    step_korpelevich,
    step_popov,
    step_projection_same_sample,
    step_projection_two_sample,
)
from .problems import (
    Ball,
    Box,
    ProblemInstance,
    WholeSpace,
    minmax_problem,
    neg_identity_problem,
    sample_oracle,
)
from .schedules import (
    ExperimentSchedule,
    HarmonicSchedule,
    PowerLawSchedule,
    clip_stepsize,
    korpelevich_offset,
    theoretical_a,
)
from .smoothness import SymmetryConstants, VerificationReport, verify_assumptions

PILOT_ITERATIONS = 1000
PILOT_SEEDS = 5

CSV_COLUMNS = [
    "method",
    "k",
    "mean_dist2_last",
    "std_dist2_last",
    "mean_dist2_avg",
    "std_dist2_avg",
    "mean_gamma",
]


class ConfigError(ValueError):
    """Raised for malformed or inconsistent experiment configs."""


@dataclass(frozen=True)
class ExperimentConfig:
    p: float
    m: int
    iterations: int
    seeds: int
    methods: tuple  # of (MethodKind, schedule spec string)
    sigma_entry: float = 0.0
    operator: str = "minmax"
    feasible_set: str = "whole_space"
    start_radius: float = 5.0
    checkpoints: int = 200
    mu: float | None = None
    alpha: float = 0.5
    L0: float | None = None
    L1: float | None = None
    q: float = 0.6
    out: str | None = None
    raw_traces: bool = False

    def __post_init__(self):
        if self.m % 2 != 0 or self.m < 2:
            raise ConfigError(f"m: dimension must be even and >= 2, got {self.m}")
        if self.iterations < 1:
            raise ConfigError(f"iterations: must be >= 1, got {self.iterations}")
        if self.seeds < 1:
            raise ConfigError(f"seeds: must be >= 1, got {self.seeds}")
        if not self.methods:
            raise ConfigError("method: at least one method entry is required")
        if self.operator not in ("minmax", "neg_identity"):
            raise ConfigError(f"operator: unknown operator '{self.operator}'")
        for kind, spec in self.methods:
            if spec != "theorem":
                parse_schedule_spec(spec)  # validates eagerly, naming the bad field

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "m": self.m,
            "iterations": self.iterations,
            "seeds": self.seeds,
            "methods": [f"{kind.value}: {spec}" for kind, spec in self.methods],
            "sigma_entry": self.sigma_entry,
            "operator": self.operator,
            "feasible_set": self.feasible_set,
            "start_radius": self.start_radius,
            "checkpoints": self.checkpoints,
            "mu": self.mu,
            "alpha": self.alpha,
            "L0": self.L0,
            "L1": self.L1,
            "q": self.q,
            "out": self.out,
            "raw_traces": self.raw_traces,
        }


_INT_KEYS = {"m", "iterations", "seeds", "checkpoints"}
_FLOAT_KEYS = {"p", "sigma_entry", "start_radius", "mu", "alpha", "L0", "L1", "q"}
_STR_KEYS = {"operator", "feasible_set", "out"}
_BOOL_KEYS = {"raw_traces"}
KNOWN_KEYS = _INT_KEYS | _FLOAT_KEYS | _STR_KEYS | _BOOL_KEYS | {"method"}

_REQUIRED_KEYS = ("p", "m", "iterations", "seeds", "method")


def parse_config(text: str, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Parse flat key = value config text; overrides replace file values by key."""
    raw: dict[str, str] = {}
    methods: list[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown config key '{key}' (line {lineno})")
        if key == "method":
            methods.append(value)
        else:
            raw[key] = value
    for key, value in (overrides or {}).items():
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown config key '{key}' in override")
        if key == "method":
            methods = [value]
        else:
            raw[key] = value
    for key in _REQUIRED_KEYS:
        present = methods if key == "method" else key in raw
        if not present:
            raise ConfigError(f"missing required config key '{key}'")

    kwargs = {}
    for key, value in raw.items():
        try:
            if key in _INT_KEYS:
                kwargs[key] = int(value)
            elif key in _FLOAT_KEYS:
                kwargs[key] = float(value)
            elif key in _BOOL_KEYS:
                if value.lower() not in ("true", "false"):
                    raise ValueError("expected true/false")
                kwargs[key] = value.lower() == "true"
            else:
                kwargs[key] = value
        except ValueError as exc:
            raise ConfigError(f"{key}: cannot parse {value!r} ({exc})") from None
    kwargs["methods"] = tuple(parse_method_entry(entry) for entry in methods)
    try:
        return ExperimentConfig(**kwargs)
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def load_config(path, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    return parse_config(text, overrides)


def parse_method_entry(entry: str):
    """'kind: schedule_spec' -> (MethodKind, spec string)."""
    if ":" not in entry:
        raise ConfigError(
            f"method: expected '<kind>: <schedule>', got {entry!r}"
        )
    kind_str, spec = (part.strip() for part in entry.split(":", 1))
    try:
        kind = MethodKind(kind_str)
    except ValueError:
        names = ", ".join(k.value for k in MethodKind)
        raise ConfigError(f"method: unknown kind '{kind_str}' (expected one of {names})") from None
    return kind, spec


_SCHED_RE = re.compile(r"^(\w+)\s*\((.*)\)$")


def parse_schedule_spec(spec: str):
    """Parse 'harmonic(a=..., offset=...)' / 'power_law(...)' / 'experiment(...)'."""
    spec = spec.strip()
    match = _SCHED_RE.match(spec)
    if not match:
        raise ConfigError(
            f"method: cannot parse schedule {spec!r} "
            "(expected name(key=value, ...) or 'theorem')"
        )
    name, arg_text = match.group(1), match.group(2)
    args = {}
    for part in filter(None, (p.strip() for p in arg_text.split(","))):
        if "=" not in part:
            raise ConfigError(f"method: schedule argument {part!r} must be key=value")
        key, value = (s.strip() for s in part.split("=", 1))
        try:
            args[key] = float(value)
        except ValueError:
            raise ConfigError(f"method: schedule argument {key}={value!r} is not numeric") from None
    families = {
        "harmonic": HarmonicSchedule,
        "power_law": PowerLawSchedule,
        "experiment": ExperimentSchedule,
    }
    if name not in families:
        raise ConfigError(
            f"method: unknown schedule family '{name}' (expected harmonic, power_law, experiment)"
        )
    try:
        return families[name](**args)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"method: {exc}") from None


# ---------------------------------------------------------------------------
# Problem construction and theorem schedule resolution
# ---------------------------------------------------------------------------


def build_problem(config: ExperimentConfig) -> ProblemInstance:
    spec = config.feasible_set.strip()
    if spec == "whole_space":
        fs = WholeSpace()
    else:
        match = _SCHED_RE.match(spec)
        if not match or match.group(1) not in ("ball", "box"):
            raise ConfigError(
                f"feasible_set: expected whole_space, ball(R) or box(H), got {spec!r}"
            )
        try:
            size = float(match.group(2).split("=")[-1])
        except ValueError:
            raise ConfigError(f"feasible_set: non-numeric size in {spec!r}") from None
        if match.group(1) == "ball":
            fs = Ball(center=np.zeros(config.m), radius=size)
        else:
            fs = Box(lower=-size * np.ones(config.m), upper=size * np.ones(config.m))
    if config.operator == "neg_identity":
        return neg_identity_problem(
            dim=config.m, sigma_entry=config.sigma_entry, feasible_set=fs,
            mu=config.mu if config.mu is not None else 1.0, p=config.p,
        )
    return minmax_problem(
        p=config.p, dim=config.m, sigma_entry=config.sigma_entry,
        feasible_set=fs, mu=config.mu,
    )


def config_constants(config: ExperimentConfig) -> SymmetryConstants | None:
    if config.L0 is None or config.L1 is None:
        return None
    return SymmetryConstants(alpha=config.alpha, L0=config.L0, L1=config.L1)


def estimate_c_f(
    problem: ProblemInstance,
    kind: MethodKind,
    mu: float,
    alpha: float,
    start: np.ndarray,
    seeds,
    iterations: int = PILOT_ITERATIONS,
) -> float:
    """Pilot estimate of C_F: max running mean of ||Phi|| along short method runs.

    The pilot drives the method with the provisional harmonic schedule a = mu
    and measures one extra oracle sample per iteration at the method's query
    point; C_F is the largest running mean seen over all pilot seeds.
    """
    schedule = HarmonicSchedule(a=mu, offset=2.0)
    worst = 0.0
    for seed in seeds:
        rng = np.random.Generator(np.random.Philox(seed))
        state = initial_state(start)
        total = 0.0
        betas = schedule.beta(np.arange(iterations + 1))
        for k in range(iterations):
            point = state.h if kind is MethodKind.KORPELEVICH else state.u
            total += float(np.linalg.norm(sample_oracle(problem, point, rng)))
            worst = max(worst, total / (k + 1))
            if kind is MethodKind.PROJECTION_TWO_SAMPLE:
                state = step_projection_two_sample(state, problem, betas[k], rng)
            elif kind is MethodKind.PROJECTION_SAME_SAMPLE:
                state = step_projection_same_sample(state, problem, betas[k], rng)
            elif kind is MethodKind.KORPELEVICH:
                state = step_korpelevich(state, problem, betas[k], rng)
            else:
                state = step_popov(state, problem, betas[k], betas[k + 1], alpha, rng)
    return worst


def resolve_schedule(
    config: ExperimentConfig,
    problem: ProblemInstance,
    kind: MethodKind,
    spec,
    pilot_seeds=None,
):
    """Turn a parsed schedule spec or the 'theorem' marker into a concrete schedule.

    Returns (schedule, pilot_C_F or None). The theorem construction needs mu
    (problem), sigma_total, a pilot C_F estimate, and for Korpelevich or p > 2
    the smoothness constants from the config.
    """
    if spec != "theorem":
        return parse_schedule_spec(spec) if isinstance(spec, str) else spec, None
    if kind is MethodKind.POPOV:
        raise ConfigError(
            "method: no published schedule construction exists for popov; "
            "give it an explicit schedule"
        )
    mu = problem.mu
    constants = config_constants(config)
    if config.p > 2.0:
        if constants is None:
            raise ConfigError(
                "method: theorem power-law schedule for p > 2 needs L0 and L1 in the config"
            )
        b = min(1.0 / (4.0 * mu), 1.0 / (2.0 * np.sqrt(3.0) * constants.K_sum))
        return PowerLawSchedule(b=b, q=config.q), None
    if config.p < 2.0:
        raise ConfigError("method: theorem schedules cover p >= 2 only")
    sigma = problem.noise.sigma_total(problem.dim)
    start = default_start(problem, config.start_radius)
    if pilot_seeds is None:
        pilot_seeds = range(PILOT_SEEDS)
    c_f = estimate_c_f(problem, kind, mu, config.alpha, start, pilot_seeds)
    a = theoretical_a(mu, c_f, sigma)
    if kind is MethodKind.KORPELEVICH:
        if constants is None:
            raise ConfigError(
                "method: theorem schedule for korpelevich needs L0 and L1 in the config"
            )
        d = korpelevich_offset(mu, constants)
        return HarmonicSchedule(a=a, offset=2.0 * d / a), c_f
    return HarmonicSchedule(a=a, offset=2.0), c_f


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AggregateResult:
    """Across-seed statistics per method and checkpoint plus fitted rate slopes."""

    labels: list[str]
    schedules: list[str]
    k: np.ndarray
    mean_dist2_last: np.ndarray  # (n_methods, n_checkpoints)
    std_dist2_last: np.ndarray
    mean_dist2_avg: np.ndarray
    std_dist2_avg: np.ndarray
    mean_gamma: np.ndarray
    slopes: dict
    config: dict
    pilot_c_f: dict
    verification: VerificationReport | None = None
    traces: list | None = None

    def method_rows(self, label: str) -> dict:
        i = self.labels.index(label)
        return {
            "k": self.k,
            "mean_dist2_last": self.mean_dist2_last[i],
            "std_dist2_last": self.std_dist2_last[i],
            "mean_dist2_avg": self.mean_dist2_avg[i],
            "std_dist2_avg": self.std_dist2_avg[i],
            "mean_gamma": self.mean_gamma[i],
        }


def fit_loglog_slope(series, window) -> float:
    """Least-squares slope of log(value) vs log(k) over window = (k_min, k_max).

    ``series`` is an iterable of (k, value) pairs; the window is inclusive.
    Requires at least 3 points in the window, all with positive k and value.
    """
    pts = [(float(k), float(v)) for k, v in series]
    k_min, k_max = window
    sel = [(k, v) for k, v in pts if k_min <= k <= k_max]
    if len(sel) < 3:
        raise ValueError(f"need at least 3 points in window [{k_min}, {k_max}], got {len(sel)}")
    ks = np.array([k for k, _ in sel])
    vs = np.array([v for _, v in sel])
    if np.any(ks <= 0.0) or np.any(vs <= 0.0):
        raise ValueError("log-log fit needs positive k and positive values")
    slope, _ = np.polyfit(np.log(ks), np.log(vs), 1)
    return float(slope)


def _method_labels(methods) -> list[str]:
    labels = []
    for kind, _ in methods:
        label = kind.value
        if label in labels:
            label = f"{label}#{sum(1 for l in labels if l.startswith(kind.value)) + 1}"
        labels.append(label)
    return labels


def run_experiment(
    config: ExperimentConfig, master_seed: int = 0, workers: int = 1
) -> AggregateResult:
    """Execute seeds x methods runs and aggregate; pure function of (config, master_seed).

    Per-run streams are keyed by (purpose, method_index, run_index) under the
    master seed, so adding or removing one method entry leaves the other
    methods' randomness untouched. Purpose tags: 0 main runs, 1 pilot runs,
    2 verification sampling.
    """
    problem = build_problem(config)
    checkpoints = default_checkpoints(config.iterations, config.checkpoints)
    labels = _method_labels(config.methods)

    resolved = []
    pilot_c_f = {}
    for mi, (kind, spec) in enumerate(config.methods):
        pilot = [
            np.random.SeedSequence(master_seed, spawn_key=(1, mi, r)) for r in range(PILOT_SEEDS)
        ]
        schedule, c_f = resolve_schedule(config, problem, kind, spec, pilot_seeds=pilot)
        resolved.append(schedule)
        pilot_c_f[labels[mi]] = c_f

    def _run(mi: int):
        kind, _ = config.methods[mi]
        seeds = [
            np.random.SeedSequence(master_seed, spawn_key=(0, mi, r))
            for r in range(config.seeds)
        ]
        return run_batch(
            kind,
            problem,
            resolved[mi],
            config.iterations,
            seeds,
            checkpoints=checkpoints,
            alpha=config.alpha,
            start_radius=config.start_radius,
        )
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            all_traces = list(pool.map(_run, range(len(config.methods))))
    else:
        all_traces = [_run(mi) for mi in range(len(config.methods))]

    k_arr = all_traces[0][0].k
    n_methods, n_rows = len(config.methods), k_arr.size
    stats = {
        name: np.zeros((n_methods, n_rows))
        for name in (
            "mean_dist2_last",
            "std_dist2_last",
            "mean_dist2_avg",
            "std_dist2_avg",
            "mean_gamma",
        )
    }
    for mi, traces in enumerate(all_traces):
        last = np.stack([t.dist2_last for t in traces])
        avg = np.stack([t.dist2_avg for t in traces])
        gam = np.stack([t.gamma for t in traces])
        stats["mean_dist2_last"][mi] = np.mean(last, axis=0)
        stats["std_dist2_last"][mi] = np.std(last, axis=0)
        stats["mean_dist2_avg"][mi] = np.mean(avg, axis=0)
        stats["std_dist2_avg"][mi] = np.std(avg, axis=0)
        stats["mean_gamma"][mi] = np.mean(gam, axis=0)

    window = (config.iterations / 10.0, float(config.iterations))
    slopes = {}
    for mi, label in enumerate(labels):
        slopes[label] = {
            "last": _try_slope(k_arr, stats["mean_dist2_last"][mi], window),
            "avg": _try_slope(k_arr, stats["mean_dist2_avg"][mi], window),
        }

    constants = config_constants(config)
    verification = None
    if constants is not None:
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(master_seed, spawn_key=(2, 0, 0)))
        )
        verification = verify_assumptions(
            problem, constants, n_samples=2000, box_half_width=config.start_radius, rng=rng
        )

    return AggregateResult(
        labels=labels,
        schedules=[s.describe() for s in resolved],
        k=k_arr,
        **stats,
        slopes=slopes,
        config=config.to_dict(),
        pilot_c_f=pilot_c_f,
        verification=verification,
        traces=all_traces if config.raw_traces else None,
    )


def _try_slope(k_arr, values, window):
    try:
        return fit_loglog_slope(zip(k_arr, values), window)
    except ValueError:
        return None


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def write_results(result: AggregateResult, out_dir, name: str = "results") -> Path:
    """Write <name>.csv and <name>.json under out_dir; returns the CSV path.

    The CSV has the documented fixed column order with floats at 17
    significant digits; the JSON sidecar carries the config echo, fitted
    slopes, the verification report when one was computed, and the resolved
    schedules.
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / f"{name}.csv"
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for mi, label in enumerate(result.labels):
                for j in range(result.k.size):
                    writer.writerow(
                        [
                            label,
                            int(result.k[j]),
                            _fmt(result.mean_dist2_last[mi, j]),
                            _fmt(result.std_dist2_last[mi, j]),
                            _fmt(result.mean_dist2_avg[mi, j]),
                            _fmt(result.std_dist2_avg[mi, j]),
                            _fmt(result.mean_gamma[mi, j]),
                        ]
                    )
        sidecar = {
            "config": result.config,
            "slopes": result.slopes,
            "verification": result.verification.to_dict() if result.verification else None,
            "resolved": {
                "schedules": dict(zip(result.labels, result.schedules)),
                "pilot_C_F": result.pilot_c_f,
            },
        }
        (out_dir / f"{name}.json").write_text(json.dumps(sidecar, indent=2) + "\n")
        if result.traces is not None:
            for label, traces in zip(result.labels, result.traces):
                for ri, trace in enumerate(traces):
                    _write_trace(trace, out_dir / f"raw_{name}_{label}_run{ri}.csv")
    except OSError as exc:
        raise OSError(f"cannot write results under {out_dir}: {exc}") from exc
    return csv_path


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _write_trace(trace, path: Path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "gamma", "dist2_last", "dist2_avg", "oracle_calls"])
        for j in range(trace.k.size):
            writer.writerow(
                [
                    int(trace.k[j]),
                    _fmt(trace.gamma[j]),
                    _fmt(trace.dist2_last[j]),
                    _fmt(trace.dist2_avg[j]),
                    int(trace.oracle_calls[j]),
                ]
            )


def read_results_csv(path) -> dict:
    """Read a results CSV back into arrays; raises on schema mismatch naming the column."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty results file")
        if header != CSV_COLUMNS:
            missing = [c for c in CSV_COLUMNS if c not in header]
            extra = [c for c in header if c not in CSV_COLUMNS]
            bad = (missing + extra)[0]
            raise ValueError(
                f"{path}: unexpected results schema at column '{bad}' "
                f"(expected columns {CSV_COLUMNS})"
            )
        rows = list(reader)
    return {
        "method": [r[0] for r in rows],
        "k": np.array([int(r[1]) for r in rows], dtype=np.int64),
        "mean_dist2_last": np.array([float(r[2]) for r in rows]),
        "std_dist2_last": np.array([float(r[3]) for r in rows]),
        "mean_dist2_avg": np.array([float(r[4]) for r in rows]),
        "std_dist2_avg": np.array([float(r[5]) for r in rows]),
        "mean_gamma": np.array([float(r[6]) for r in rows]),
    }
