"""Clipped stochastic solvers: projection (two-sample and same-sample), Korpelevich, Popov.

Each method advances by projected steps whose stepsize gamma_k is a base value
beta_k shrunk by the clipping rule, so single updates never move farther than
beta_k. The two-sample variants draw the clipping sample before and
independently of the direction sample, removing the bias that same-sample
clipping introduces.

``run_method`` is the scalar reference loop; ``run_batch`` advances many seeds
of the same configuration in lock-step with vectorized arithmetic and is
bit-identical to running the scalar loop per seed (it relies on the fact that
a generator's block normal draws equal the same draws made one by one).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .problems import ProblemInstance, project, sample_oracle
from .schedules import StepSchedule, clip_stepsize


class MethodKind(str, Enum):
    PROJECTION_TWO_SAMPLE = "projection_two_sample"
    PROJECTION_SAME_SAMPLE = "projection_same_sample"
    KORPELEVICH = "korpelevich"
    POPOV = "popov"


# oracle calls consumed per iteration; also the per-iteration noise draw count
CALLS_PER_ITERATION = {
    MethodKind.PROJECTION_TWO_SAMPLE: 2,
    MethodKind.PROJECTION_SAME_SAMPLE: 1,
    MethodKind.KORPELEVICH: 2,
    MethodKind.POPOV: 2,
}


@dataclass(frozen=True)
class AveragingState:
    """Incremental stepsize-weighted average of visited iterates.

    Maintains u_bar = (sum_t beta_t)^-1 sum_t beta_t u_t without storing the
    trajectory; ``avg`` equals the start point while ``weight_sum`` is zero.
    """

    avg: np.ndarray
    weight_sum: float = 0.0


def update_weighted_average(state: AveragingState, u_k: np.ndarray, beta_k: float) -> AveragingState:
    """Fold (u_k, beta_k) into the running weighted average."""
    if not beta_k > 0.0:
        raise ValueError(f"averaging weight must be positive, got {beta_k}")
    if state.weight_sum == 0.0:
        return AveragingState(avg=np.array(u_k, dtype=np.float64, copy=True), weight_sum=float(beta_k))
    new_weight = state.weight_sum + beta_k
    avg = state.avg + (beta_k / new_weight) * (u_k - state.avg)
    return AveragingState(avg=avg, weight_sum=new_weight)


@dataclass(frozen=True)
class MethodState:
    """Iterates of one run: main iterate u, leader h, previous leader, step count."""

    u: np.ndarray
    h: np.ndarray
    h_prev: np.ndarray
    k: int
    avg: AveragingState
    gamma: float = 0.0  # stepsize used by the most recent step


def initial_state(start: np.ndarray) -> MethodState:
    start = np.asarray(start, dtype=np.float64)
    return MethodState(
        u=start, h=start, h_prev=start, k=0, avg=AveragingState(avg=start, weight_sum=0.0)
    )


# ---------------------------------------------------------------------------
# Single steps (scalar reference implementations)
# ---------------------------------------------------------------------------


def _norm(v: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(v * v, axis=-1))


def step_projection_two_sample(
    state: MethodState, problem: ProblemInstance, beta_k: float, rng: np.random.Generator
) -> MethodState:
    """u' = P(u - gamma * Phi(u, xi)) with gamma clipped by an independent first sample."""
    clip_sample = sample_oracle(problem, state.u, rng)
    direction = sample_oracle(problem, state.u, rng)
    gamma = clip_stepsize(beta_k, _norm(clip_sample))
    avg = update_weighted_average(state.avg, state.u, beta_k)
    u_next = project(problem.feasible_set, state.u - gamma * direction)
    return MethodState(u=u_next, h=u_next, h_prev=state.h, k=state.k + 1, avg=avg, gamma=float(gamma))


def step_projection_same_sample(
    state: MethodState, problem: ProblemInstance, beta_k: float, rng: np.random.Generator
) -> MethodState:
    """Single-draw variant: the one sample sets the clip norm and the direction."""
    sample = sample_oracle(problem, state.u, rng)
    gamma = clip_stepsize(beta_k, _norm(sample))
    avg = update_weighted_average(state.avg, state.u, beta_k)
    u_next = project(problem.feasible_set, state.u - gamma * sample)
    return MethodState(u=u_next, h=u_next, h_prev=state.h, k=state.k + 1, avg=avg, gamma=float(gamma))


def step_korpelevich(
    state: MethodState, problem: ProblemInstance, beta_k: float, rng: np.random.Generator
) -> MethodState:
    """Extrapolate to u_k from h_k, then correct h with the operator at u_k.

    The stepsize clips the first sample Phi(h_k, .) and the same gamma_k is
    reused for both projected updates.
    """
    s1 = sample_oracle(problem, state.h, rng)
    gamma = clip_stepsize(beta_k, _norm(s1))
    u_k = project(problem.feasible_set, state.h - gamma * s1)
    s2 = sample_oracle(problem, u_k, rng)
    h_next = project(problem.feasible_set, state.h - gamma * s2)
    avg = update_weighted_average(state.avg, u_k, beta_k)
    return MethodState(u=u_k, h=h_next, h_prev=state.h, k=state.k + 1, avg=avg, gamma=float(gamma))


def _popov_cap(clip_norm, dist_to_prev, expo: float):
    # min{1, 1/clip_norm} (with 1/0 -> 1), further capped by 1/(dist+1)^expo <= 1
    inv_clip = np.where(clip_norm > 1.0, 1.0 / np.where(clip_norm > 1.0, clip_norm, 1.0), 1.0)
    return np.minimum(inv_clip, 1.0 / (dist_to_prev + 1.0) ** expo)


def step_popov(
    state: MethodState,
    problem: ProblemInstance,
    beta_k: float,
    beta_next: float,
    alpha: float,
    rng: np.random.Generator,
) -> MethodState:
    """One-direction extrapolation step reusing the previous leader point.

    gamma_k = beta_k * min{1, 1/||Phi(h_k, xi^c)||, 1/(||u_k - h_{k-1}|| + 1)^(alpha/(1-alpha))};
    both updates use the same direction sample Phi(h_k, xi_k):
    u' = P(u_k - gamma_k Phi(h_k, xi_k)), h' = P(u' - gamma' Phi(h_k, xi_k)).

    The clip norm uses an independent oracle sample at h_k rather than the
    unavailable exact operator norm. gamma' applies the rule at weight
    beta_{k+1} with the same clip sample and the fresh distance ||u' - h_k||;
    at the next step the leading stepsize is recomputed from scratch.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"popov needs alpha in (0, 1), got {alpha}")
    expo = alpha / (1.0 - alpha)
    clip_sample = sample_oracle(problem, state.h, rng)
    direction = sample_oracle(problem, state.h, rng)
    clip_norm = _norm(clip_sample)
    gamma = beta_k * _popov_cap(clip_norm, _norm(state.u - state.h_prev), expo)
    avg = update_weighted_average(state.avg, state.u, beta_k)
    u_next = project(problem.feasible_set, state.u - gamma * direction)
    gamma_next = beta_next * _popov_cap(clip_norm, _norm(u_next - state.h), expo)
    h_next = project(problem.feasible_set, u_next - gamma_next * direction)
    return MethodState(
        u=u_next, h=h_next, h_prev=state.h, k=state.k + 1, avg=avg, gamma=float(gamma)
    )


# ---------------------------------------------------------------------------
# Run loop
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunTrace:
    """Checkpoint records of one run.

    ``k`` counts completed iterations (the first row is the initial point with
    k = 0 and gamma = 0); ``oracle_calls`` equals k times the method's
    per-iteration call count. ``dist2_avg`` is the squared distance of the
    stepsize-weighted average of all iterates at which steps were taken; at
    k = 0 it reports the start point's squared distance.
    """

    method: str
    schedule: str
    seed: str
    problem: str
    k: np.ndarray
    gamma: np.ndarray
    dist2_last: np.ndarray
    dist2_avg: np.ndarray
    oracle_calls: np.ndarray
    points_last: np.ndarray | None = None
    points_avg: np.ndarray | None = None


def default_start(problem: ProblemInstance, radius: float = 5.0) -> np.ndarray:
    """Deterministic start point: the all-ones direction scaled to the given radius."""
    start = np.full(problem.dim, radius / np.sqrt(problem.dim))
    return project(problem.feasible_set, start)


def default_checkpoints(iterations: int, count: int = 200) -> np.ndarray:
    """About ``count`` log-spaced iteration counts in [1, iterations], always ending there."""
    if iterations <= 0:
        return np.array([], dtype=np.int64)
    ks = np.unique(np.round(np.logspace(0.0, np.log10(iterations), count)).astype(np.int64))
    return ks[(ks >= 1) & (ks <= iterations)]


def _seed_label(seed) -> str:
    if isinstance(seed, np.random.SeedSequence):
        return f"entropy={seed.entropy},spawn_key={tuple(seed.spawn_key)}"
    return str(seed)


def _make_rng(seed) -> np.random.Generator:
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def _validate_checkpoints(checkpoints, iterations: int) -> np.ndarray:
    ks = np.asarray(checkpoints, dtype=np.int64)
    if ks.size and (np.any(np.diff(ks) <= 0) or ks[0] < 0):
        raise ValueError("checkpoints must be strictly increasing and nonnegative")
    if ks.size and ks[-1] > iterations:
        raise ValueError(f"checkpoint {int(ks[-1])} exceeds iteration budget {iterations}")
    return ks[ks > 0]  # k = 0 row is always recorded


def run_method(
    kind: MethodKind,
    problem: ProblemInstance,
    schedule: StepSchedule,
    iterations: int,
    seed,
    checkpoints=None,
    alpha: float = 0.5,
    start_point=None,
    start_radius: float = 5.0,
    keep_points: bool = False,
) -> RunTrace:
    """Run one seed of one method; deterministic given (seed, arguments).

    ``seed`` may be an integer or a numpy SeedSequence. ``alpha`` is consumed
    by the Popov clip exponent only. With ``keep_points`` the recorded last
    and averaged iterates themselves are attached to the trace.
    """
    kind = MethodKind(kind)
    iterations = int(iterations)
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    if checkpoints is None:
        checkpoints = default_checkpoints(iterations)
    ks = _validate_checkpoints(checkpoints, iterations)
    rng = _make_rng(seed)
    start = (
        project(problem.feasible_set, np.asarray(start_point, dtype=np.float64))
        if start_point is not None
        else default_start(problem, start_radius)
    )
    state = initial_state(start)
    betas = np.asarray(schedule.beta(np.arange(iterations + 1)), dtype=np.float64)

    rows = {name: [] for name in ("k", "gamma", "dist2_last", "dist2_avg", "oracle_calls")}
    pts_last, pts_avg = [], []
    calls_per_iter = CALLS_PER_ITERATION[kind]

    def record(state: MethodState):
        main = state.h if kind is MethodKind.KORPELEVICH else state.u
        rows["k"].append(state.k)
        rows["gamma"].append(state.gamma)
        rows["dist2_last"].append(float(problem.solution.distance(main) ** 2))
        rows["dist2_avg"].append(float(problem.solution.distance(state.avg.avg) ** 2))
        rows["oracle_calls"].append(state.k * calls_per_iter)
        if keep_points:
            pts_last.append(np.array(main))
            pts_avg.append(np.array(state.avg.avg))

    record(state)
    next_cp = 0
    for k in range(iterations):
        if kind is MethodKind.PROJECTION_TWO_SAMPLE:
            state = step_projection_two_sample(state, problem, betas[k], rng)
        elif kind is MethodKind.PROJECTION_SAME_SAMPLE:
            state = step_projection_same_sample(state, problem, betas[k], rng)
        elif kind is MethodKind.KORPELEVICH:
            state = step_korpelevich(state, problem, betas[k], rng)
        else:
            state = step_popov(state, problem, betas[k], betas[k + 1], alpha, rng)
        if next_cp < ks.size and state.k == ks[next_cp]:
            record(state)
            next_cp += 1

    return RunTrace(
        method=kind.value,
        schedule=schedule.describe(),
        seed=_seed_label(seed),
        problem=problem.tag,
        k=np.array(rows["k"], dtype=np.int64),
        gamma=np.array(rows["gamma"], dtype=np.float64),
        dist2_last=np.array(rows["dist2_last"], dtype=np.float64),
        dist2_avg=np.array(rows["dist2_avg"], dtype=np.float64),
        oracle_calls=np.array(rows["oracle_calls"], dtype=np.int64),
        points_last=np.array(pts_last) if keep_points else None,
        points_avg=np.array(pts_avg) if keep_points else None,
    )


# ---------------------------------------------------------------------------
# Vectorized multi-seed runner
# ---------------------------------------------------------------------------
#
# The batch runner advances all seeds in lock-step: per-seed noise is drawn
# from each seed's own generator in chunks of whole iterations, which equals
# the scalar loop's draw-by-draw stream bit for bit, and the state arithmetic
# broadcasts over the leading run axis with the same elementwise operations.

_NOISE_CHUNK = 2048


def run_batch(
    kind: MethodKind,
    problem: ProblemInstance,
    schedule: StepSchedule,
    iterations: int,
    seeds,
    checkpoints=None,
    alpha: float = 0.5,
    start_point=None,
    start_radius: float = 5.0,
) -> list[RunTrace]:
    """Run one method over many seeds at once; output matches per-seed run_method."""
    kind = MethodKind(kind)
    iterations = int(iterations)
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    if checkpoints is None:
        checkpoints = default_checkpoints(iterations)
    ks = _validate_checkpoints(checkpoints, iterations)
    seeds = list(seeds)
    n_runs = len(seeds)
    if n_runs == 0:
        return []
    gens = [_make_rng(s) for s in seeds]
    start = (
        project(problem.feasible_set, np.asarray(start_point, dtype=np.float64))
        if start_point is not None
        else default_start(problem, start_radius)
    )
    m = problem.dim
    fs = problem.feasible_set
    sigma = problem.noise.sigma_entry
    op = problem.operator
    if kind is MethodKind.POPOV and not 0.0 < alpha < 1.0:
        raise ValueError(f"popov needs alpha in (0, 1), got {alpha}")
    expo = alpha / (1.0 - alpha) if alpha < 1.0 else np.inf

    U = np.tile(start, (n_runs, 1))
    H = U.copy()
    Hprev = U.copy()
    avg = U.copy()
    weight_sum = 0.0
    gamma = np.zeros(n_runs)
    betas = np.asarray(schedule.beta(np.arange(iterations + 1)), dtype=np.float64)
    draws = CALLS_PER_ITERATION[kind]

    rows_k, rows = [], {name: [] for name in ("gamma", "dist2_last", "dist2_avg")}

    def record(k: int):
        main = H if kind is MethodKind.KORPELEVICH else U
        rows_k.append(k)
        rows["gamma"].append(gamma.copy())
        rows["dist2_last"].append(problem.solution.distance(main) ** 2)
        rows["dist2_avg"].append(problem.solution.distance(avg) ** 2)

    record(0)
    next_cp = 0
    k = 0
    noise = np.empty((n_runs, _NOISE_CHUNK, draws, m))
    while k < iterations:
        chunk = min(_NOISE_CHUNK, iterations - k)
        for i, g in enumerate(gens):
            noise[i, :chunk] = g.standard_normal((chunk, draws, m))
        for t in range(chunk):
            beta_k = betas[k]
            if kind is MethodKind.PROJECTION_TWO_SAMPLE:
                clip_sample = op(U) + sigma * noise[:, t, 0]
                direction = op(U) + sigma * noise[:, t, 1]
                gamma = clip_stepsize(beta_k, _norm(clip_sample))
                avg, weight_sum = _avg_update(avg, weight_sum, U, beta_k)
                U = project(fs, U - gamma[:, None] * direction)
            elif kind is MethodKind.PROJECTION_SAME_SAMPLE:
                sample = op(U) + sigma * noise[:, t, 0]
                gamma = clip_stepsize(beta_k, _norm(sample))
                avg, weight_sum = _avg_update(avg, weight_sum, U, beta_k)
                U = project(fs, U - gamma[:, None] * sample)
            elif kind is MethodKind.KORPELEVICH:
                s1 = op(H) + sigma * noise[:, t, 0]
                gamma = clip_stepsize(beta_k, _norm(s1))
                Uk = project(fs, H - gamma[:, None] * s1)
                s2 = op(Uk) + sigma * noise[:, t, 1]
                H_next = project(fs, H - gamma[:, None] * s2)
                avg, weight_sum = _avg_update(avg, weight_sum, Uk, beta_k)
                U, H = Uk, H_next
            else:
                clip_sample = op(H) + sigma * noise[:, t, 0]
                direction = op(H) + sigma * noise[:, t, 1]
                clip_norm = _norm(clip_sample)
                gamma = beta_k * _popov_cap(clip_norm, _norm(U - Hprev), expo)
                avg, weight_sum = _avg_update(avg, weight_sum, U, beta_k)
                U_next = project(fs, U - gamma[:, None] * direction)
                gamma_next = betas[k + 1] * _popov_cap(clip_norm, _norm(U_next - H), expo)
                H_next = project(fs, U_next - gamma_next[:, None] * direction)
                Hprev, U, H = H, U_next, H_next
            k += 1
            if kind in (MethodKind.PROJECTION_TWO_SAMPLE, MethodKind.PROJECTION_SAME_SAMPLE):
                H = U
            if next_cp < ks.size and k == ks[next_cp]:
                record(k)
                next_cp += 1

    calls_per_iter = CALLS_PER_ITERATION[kind]
    k_arr = np.array(rows_k, dtype=np.int64)
    gammas = np.stack(rows["gamma"])  # (n_rows, n_runs)
    d_last = np.stack(rows["dist2_last"])
    d_avg = np.stack(rows["dist2_avg"])
    return [
        RunTrace(
            method=kind.value,
            schedule=schedule.describe(),
            seed=_seed_label(seeds[i]),
            problem=problem.tag,
            k=k_arr,
            gamma=gammas[:, i],
            dist2_last=d_last[:, i],
            dist2_avg=d_avg[:, i],
            oracle_calls=k_arr * calls_per_iter,
        )
        for i in range(n_runs)
    ]


def _avg_update(avg, weight_sum: float, points, beta_k: float):
    if weight_sum == 0.0:
        return points.copy(), float(beta_k)
    new_weight = weight_sum + beta_k
    return avg + (beta_k / new_weight) * (points - avg), new_weight
