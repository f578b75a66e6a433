"""Benchmark operators, stochastic oracles, feasible sets and solution-distance metrics.

Points are plain float64 numpy arrays. Every public operation accepts either a
single point of shape ``(m,)`` or a batch of shape ``(n, m)``; norms and inner
products are taken along the last axis. For min-max problems the dimension m is
even and a point is the concatenation ``(u1, u2)`` of the two players' blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

Array = np.ndarray

# Membership slack for projected points; see FeasibleSet.contains.
MEMBERSHIP_TOL = 1e-12


def as_point(coords, dim: int | None = None) -> Array:
    """Convert to a float64 vector, checking finiteness and (optionally) length."""
    u = np.asarray(coords, dtype=np.float64)
    if u.ndim != 1:
        raise ValueError(f"point must be one-dimensional, got shape {u.shape}")
    if dim is not None and u.shape[0] != dim:
        raise ValueError(f"point has dimension {u.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(u)):
        raise ValueError("point has non-finite coordinates")
    return u


def _norm(v: Array) -> Array:
    return np.sqrt(np.sum(v * v, axis=-1))


def _dot(a: Array, b: Array) -> Array:
    return np.sum(a * b, axis=-1)


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MinMaxOperator:
    """The benchmark min-max operator F(u) = (||u1||^(p-2) u1 + u2, ||u2||^(p-2) u2 - u1).

    This is the first-order operator of the game
    ``min_{u1} max_{u2} ||u1||^p / p + <u1, u2> - ||u2||^p / p`` with p > 1.
    At ``u_i = 0`` the power term is the continuous extension 0 (relevant for
    1 < p < 2, where the bare coefficient diverges).
    """

    p: float

    def __post_init__(self):
        if not self.p > 1.0:
            raise ValueError(f"p must be > 1, got {self.p}")

    def __call__(self, u: Array) -> Array:
        m = u.shape[-1]
        if m % 2 != 0:
            raise ValueError(f"min-max operator needs an even dimension, got {m}")
        d = m // 2
        u1, u2 = u[..., :d], u[..., d:]
        if self.p == 2.0:
            g1, g2 = u1, u2
        else:
            n1 = _norm(u1)[..., None]
            n2 = _norm(u2)[..., None]
            # 0 * 0^(p-2) would be nan/inf for p < 2; mask before the power
            g1 = np.where(n1 > 0.0, n1, 1.0) ** (self.p - 2.0) * (n1 > 0.0) * u1
            g2 = np.where(n2 > 0.0, n2, 1.0) ** (self.p - 2.0) * (n2 > 0.0) * u2
        return np.concatenate([g1 + u2, g2 - u1], axis=-1)


@dataclass(frozen=True)
class NegIdentityOperator:
    """F(u) = -u; a fixture violating quasi-sharpness (gap = -2 ||u||^2 for mu=1, p=2)."""

    def __call__(self, u: Array) -> Array:
        return -u


def eval_minmax_operator(p: float, point: Array) -> Array:
    """Evaluate the benchmark min-max operator at one point (or a batch)."""
    return MinMaxOperator(p)(np.asarray(point, dtype=np.float64))


# ---------------------------------------------------------------------------
# Feasible sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WholeSpace:
    """Unconstrained domain; projection is the identity."""

    kind = "whole_space"

    def project(self, v: Array) -> Array:
        return v

    def contains(self, v: Array, tol: float = MEMBERSHIP_TOL) -> bool:
        return True

    def describe(self) -> str:
        return "whole_space"


@dataclass(frozen=True)
class Ball:
    """Euclidean ball { x : ||x - center|| <= radius }."""

    center: Array
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_point(self.center))
        if not self.radius > 0.0:
            raise ValueError(f"ball radius must be positive, got {self.radius}")

    def project(self, v: Array) -> Array:
        # Rescale radially; re-check so that the projected point's computed norm
        # is <= radius, which makes the projection exactly idempotent.
        w = v - self.center
        for _ in range(4):
            n = _norm(w)[..., None]
            outside = n > self.radius
            if not np.any(outside):
                break
            w = np.where(outside, w * (self.radius / np.where(outside, n, 1.0)), w)
        return self.center + w

    def contains(self, v: Array, tol: float = MEMBERSHIP_TOL) -> bool:
        return bool(np.all(_norm(v - self.center) <= self.radius + tol))

    def describe(self) -> str:
        return f"ball(radius={self.radius})"


@dataclass(frozen=True)
class Box:
    """Axis-aligned box { x : lower <= x <= upper } (componentwise)."""

    lower: Array
    upper: Array

    def __post_init__(self):
        object.__setattr__(self, "lower", as_point(self.lower))
        object.__setattr__(self, "upper", as_point(self.upper, dim=self.lower.shape[0]))
        if np.any(self.lower > self.upper):
            raise ValueError("invalid box: lower bound exceeds upper bound in some coordinate")

    def project(self, v: Array) -> Array:
        return np.clip(v, self.lower, self.upper)

    def contains(self, v: Array, tol: float = MEMBERSHIP_TOL) -> bool:
        return bool(np.all(v >= self.lower - tol) and np.all(v <= self.upper + tol))

    def describe(self) -> str:
        return f"box(lower={self.lower.tolist()}, upper={self.upper.tolist()})"


FeasibleSet = WholeSpace | Ball | Box


def project(feasible_set: FeasibleSet, v: Array) -> Array:
    """Euclidean projection of v onto the set. Validates finiteness of v."""
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot project a non-finite point")
    return feasible_set.project(v)


# ---------------------------------------------------------------------------
# Solution sets, noise, problem instances
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SingletonSolution:
    """Solution set descriptor for a unique known solution point."""

    point: Array

    def __post_init__(self):
        object.__setattr__(self, "point", as_point(self.point))

    def distance(self, u: Array) -> Array:
        return _norm(u - self.point)

    def project(self, u: Array) -> Array:
        return np.broadcast_to(self.point, np.shape(u))


@dataclass(frozen=True)
class NoiseSpec:
    """Additive Gaussian oracle noise with i.i.d. zero-mean entries.

    ``sigma_entry`` is the per-coordinate standard deviation; the total
    variance bound is ``sigma_total(m)**2 = m * sigma_entry**2``.
    """

    sigma_entry: float = 0.0

    def __post_init__(self):
        if self.sigma_entry < 0.0:
            raise ValueError(f"sigma_entry must be >= 0, got {self.sigma_entry}")

    def sigma_total(self, dim: int) -> float:
        return self.sigma_entry * np.sqrt(dim)


@dataclass(frozen=True)
class ProblemInstance:
    """A stochastic variational inequality: operator, oracle noise, feasible set, sharpness.

    Immutable after construction and safe to share across concurrent runs.
    ``mu`` and ``p`` are the quasi-sharpness constants: the inner product
    ``<F(u), u - P_{U*}(u)>`` is expected to dominate ``mu * dist(u, U*)**p``.
    """

    operator: object  # callable Array -> Array
    noise: NoiseSpec
    feasible_set: FeasibleSet
    solution: SingletonSolution
    mu: float
    p: float
    dim: int
    tag: str = field(default="")

    def __post_init__(self):
        if not self.mu > 0.0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not self.p > 0.0:
            raise ValueError(f"p must be positive, got {self.p}")
        if self.solution.point.shape[0] != self.dim:
            raise ValueError("solution point dimension does not match problem dimension")


def default_mu(p: float) -> float:
    """Quasi-sharpness constant of the benchmark operator.

    ``<F(u), u> = ||u1||^p + ||u2||^p``, and by the power-mean inequality this
    dominates ``2**(1 - p/2) * ||u||^p`` for p >= 2 (with equality when
    ``||u1|| = ||u2||``) and ``||u||^p`` itself for p <= 2.
    """
    return min(1.0, 2.0 ** (1.0 - p / 2.0))


def minmax_problem(
    p: float,
    dim: int,
    sigma_entry: float = 0.0,
    feasible_set: FeasibleSet | None = None,
    mu: float | None = None,
) -> ProblemInstance:
    """Build the benchmark min-max problem instance with solution set {0}."""
    if dim % 2 != 0 or dim < 2:
        raise ValueError(f"dimension must be even and >= 2, got {dim}")
    return ProblemInstance(
        operator=MinMaxOperator(p),
        noise=NoiseSpec(sigma_entry),
        feasible_set=feasible_set if feasible_set is not None else WholeSpace(),
        solution=SingletonSolution(np.zeros(dim)),
        mu=mu if mu is not None else default_mu(p),
        p=p,
        dim=dim,
        tag=f"minmax(p={p:g}, m={dim}, sigma_entry={sigma_entry:g})",
    )


def neg_identity_problem(
    dim: int,
    sigma_entry: float = 0.0,
    feasible_set: FeasibleSet | None = None,
    mu: float = 1.0,
    p: float = 2.0,
) -> ProblemInstance:
    """F(u) = -u with solution descriptor {0}; quasi-sharpness fails everywhere else."""
    return ProblemInstance(
        operator=NegIdentityOperator(),
        noise=NoiseSpec(sigma_entry),
        feasible_set=feasible_set if feasible_set is not None else WholeSpace(),
        solution=SingletonSolution(np.zeros(dim)),
        mu=mu,
        p=p,
        dim=dim,
        tag=f"neg_identity(m={dim}, sigma_entry={sigma_entry:g})",
    )


# ---------------------------------------------------------------------------
# Oracle and metrics
# ---------------------------------------------------------------------------


def sample_oracle(problem: ProblemInstance, point: Array, rng: np.random.Generator) -> Array:
    """One stochastic oracle sample F(point) + xi with i.i.d. Gaussian entries.

    Advances the generator by exactly ``point.size`` normal draws per call,
    also when ``sigma_entry == 0`` (so call sequences stay aligned between
    noisy and noise-free configurations).
    """
    noise = rng.standard_normal(np.shape(point))
    return problem.operator(point) + problem.noise.sigma_entry * noise


def distance_to_solution(problem: ProblemInstance, point: Array) -> Array:
    """Euclidean distance from point to the stored solution set."""
    return problem.solution.distance(point)


def quasi_sharp_gap(problem: ProblemInstance, point: Array) -> Array:
    """Slack of the sharpness inequality: <F(u), u - P_{U*}(u)> - mu * dist(u, U*)**p.

    Nonnegative exactly when the quasi-sharpness inequality holds at this point.
    """
    f = problem.operator(point)
    d = problem.solution.distance(point)
    return _dot(f, point - problem.solution.project(point)) - problem.mu * d**problem.p
