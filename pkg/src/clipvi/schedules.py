"""Stepsize schedules, the clipping rule, and the theorem constants a and d.

Three deterministic base-stepsize families are provided:

* harmonic:   beta_k = 2 / (a * (offset + k))
* power_law:  beta_k = b / (k + 1)^q with q in (1/2, 1)
* experiment: beta_k = c0 / (c0 + k^q)

All of them are positive and nonincreasing; the power-law range of q makes
sum(beta) diverge while sum(beta^2) converges, which is the standing schedule
condition of the convergence theory. The stochastic stepsize is obtained from
the base value by ``clip_stepsize``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .smoothness import SymmetryConstants


@dataclass(frozen=True)
class HarmonicSchedule:
    """beta_k = 2 / (a * (offset + k))."""

    a: float
    offset: float = 2.0

    def __post_init__(self):
        if not self.a > 0.0:
            raise ValueError(f"harmonic schedule needs a > 0, got {self.a}")
        if not self.offset > 0.0:
            raise ValueError(f"harmonic schedule needs offset > 0, got {self.offset}")

    def beta(self, k):
        return 2.0 / (self.a * (self.offset + np.asarray(k, dtype=np.float64)))

    def describe(self) -> str:
        return f"harmonic(a={self.a:g}, offset={self.offset:g})"


@dataclass(frozen=True)
class PowerLawSchedule:
    """beta_k = b / (k + 1)^q with q in (1/2, 1) exclusive."""

    b: float
    q: float

    def __post_init__(self):
        if not self.b > 0.0:
            raise ValueError(f"power_law schedule needs b > 0, got {self.b}")
        if not 0.5 < self.q < 1.0:
            raise ValueError(f"power_law schedule needs q in (1/2, 1), got {self.q}")

    def beta(self, k):
        return self.b / (np.asarray(k, dtype=np.float64) + 1.0) ** self.q

    def describe(self) -> str:
        return f"power_law(b={self.b:g}, q={self.q:g})"


@dataclass(frozen=True)
class ExperimentSchedule:
    """beta_k = c0 / (c0 + k^q), the schedule used in the benchmark figures."""

    c0: float = 100.0
    q: float = 0.6

    def __post_init__(self):
        if not self.c0 > 0.0:
            raise ValueError(f"experiment schedule needs c0 > 0, got {self.c0}")
        if not self.q > 0.0:
            raise ValueError(f"experiment schedule needs q > 0, got {self.q}")

    def beta(self, k):
        return self.c0 / (self.c0 + np.asarray(k, dtype=np.float64) ** self.q)

    def describe(self) -> str:
        return f"experiment(c0={self.c0:g}, q={self.q:g})"


StepSchedule = HarmonicSchedule | PowerLawSchedule | ExperimentSchedule


def clip_stepsize(beta_k, clip_norm):
    """gamma_k = beta_k * min(1, 1 / clip_norm), with min(1, 1/0) = 1.

    Keeps the effective update norm at most beta_k. Accepts scalars or arrays;
    a zero clip norm (possible noise-free at the solution) leaves beta_k
    unchanged. Always returns a value <= beta_k.
    """
    beta_k = np.asarray(beta_k, dtype=np.float64)
    clip_norm = np.asarray(clip_norm, dtype=np.float64)
    if np.any(clip_norm < 0.0):
        raise ValueError("clip_norm must be nonnegative")
    scaled = beta_k / np.where(clip_norm > 1.0, clip_norm, 1.0)
    if scaled.ndim == 0:
        return float(scaled)
    return scaled


def theoretical_a(mu: float, C_F: float, sigma: float) -> float:
    """Stepsize constant a = mu * min(1, 1 / (2 (C_F + sigma))).

    C_F bounds the expected operator norm along the trajectory and sigma the
    oracle noise level; when both are zero the constant collapses to mu.
    """
    if not mu > 0.0:
        raise ValueError(f"mu must be positive, got {mu}")
    denom = 2.0 * (C_F + sigma)
    if denom <= 0.0:
        return mu
    return mu * min(1.0, 1.0 / denom)


def korpelevich_offset(mu: float, constants: SymmetryConstants) -> float:
    """d = max(4 mu, 2 sqrt(3) (K0 + K1 + K2)); the harmonic offset is 2 d / a."""
    if not mu > 0.0:
        raise ValueError(f"mu must be positive, got {mu}")
    return max(4.0 * mu, 2.0 * np.sqrt(3.0) * constants.K_sum)


def series_lower_bound(q: float, K: int) -> float:
    """Closed-form lower bound on sum_{t=0}^{K} 1/(t+1)^q for 1/2 <= q < 1.

    Integral comparison gives ((K+1)^(1-q) - 2^(1-q)) / (1-q); the true
    partial sum always dominates it.
    """
    if not 0.5 <= q < 1.0:
        raise ValueError(f"q must lie in [1/2, 1), got {q}")
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    return ((K + 1.0) ** (1.0 - q) - 2.0 ** (1.0 - q)) / (1.0 - q)


def series_upper_bound(q: float, K: int) -> float:
    """Upper bound on sum_{t=0}^{K} 1/(t+1)^(2q): 1 + log(K+1) at q = 1/2, else 1 + 1/(2q-1).

    The leading 1 accounts for the t = 0 summand, which the bare integral
    estimates log(K+1) and 1/(2q-1) do not cover (at K = 0 the sum is already 1).
    """
    if not 0.5 <= q < 1.0:
        raise ValueError(f"q must lie in [1/2, 1), got {q}")
    if K < 0:
        raise ValueError(f"K must be >= 0, got {K}")
    if q == 0.5:
        return 1.0 + float(np.log(K + 1.0))
    return 1.0 + 1.0 / (2.0 * q - 1.0)
