"""
Random sampling schemes and the grids of observation times they generate.

A scheme is an i.i.d. duration law with mean Delta_n. Grids start at t_0 = 0
and keep every time <= horizon; the duration overshooting the horizon is
dropped, so count matches N_T^n = sup(i: t_i <= T).
"""

import math
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ParameterError, InsufficientDataError

SCHEME_KINDS = ("deterministic", "exponential", "gamma", "uniform")


@dataclass(frozen=True)
class SamplingScheme:
    """Duration law with mean `mean_duration` (Delta_n)."""

    kind: str
    mean_duration: float
    shape: float = 1.0
    half_width_frac: float = 0.0

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ParameterError(f"unknown scheme kind '{self.kind}', expected one of {SCHEME_KINDS}")
        if not (self.mean_duration > 0 and math.isfinite(self.mean_duration)):
            raise ParameterError(f"mean_duration must be a positive finite time, got {self.mean_duration}")
        if self.kind == "gamma" and not self.shape > 0:
            raise ParameterError(f"gamma shape must be positive, got {self.shape}")
        if self.kind == "uniform" and not 0.0 <= self.half_width_frac < 1.0:
            raise ParameterError(f"half_width_frac must lie in [0, 1), got {self.half_width_frac}")

    def draw(self, rng, size):
        """Draw `size` i.i.d. durations."""
        delta = self.mean_duration
        if self.kind == "deterministic":
            return np.full(size, delta)
        if self.kind == "exponential":
            return rng.exponential(delta, size)
        if self.kind == "gamma":
            return rng.gamma(self.shape, delta / self.shape, size)
        h = self.half_width_frac
        return rng.uniform(delta * (1.0 - h), delta * (1.0 + h), size)

    def describe(self):
        return {
            "kind": self.kind,
            "mean_duration": self.mean_duration,
            "shape": self.shape,
            "half_width_frac": self.half_width_frac,
            "M": analytic_M(self),
        }


@dataclass(frozen=True, eq=False)
class SampleGrid:
    """Realized sampling times 0 = t_0 < t_1 < ... < t_N <= horizon."""

    times: np.ndarray
    durations: np.ndarray
    horizon: float
    count: int
    nominal_mean: Optional[float] = None

    def __post_init__(self):
        times = self.times
        if times.ndim != 1 or times.size == 0 or times[0] != 0.0:
            raise ParameterError("grid times must be a nonempty vector starting at 0")
        if self.durations.size != self.count or times.size != self.count + 1:
            raise ParameterError("grid length mismatch between times, durations and count")
        if self.count and np.any(self.durations <= 0):
            raise ParameterError("grid times must be strictly increasing")
        if times[-1] > self.horizon:
            raise ParameterError(f"last grid time {times[-1]} exceeds horizon {self.horizon}")

    @classmethod
    def from_times(cls, times, horizon=None, nominal_mean=None):
        """Build a grid from observation times already shifted to start at 0."""
        times = np.asarray(times, dtype=float)
        if horizon is None:
            horizon = float(times[-1]) if times.size else 0.0
        return cls(times=times, durations=np.diff(times), horizon=float(horizon),
                   count=int(times.size - 1), nominal_mean=nominal_mean)

    @property
    def last_time(self):
        return float(self.times[-1])


def scheme_for_rate(kind, horizon, n, shape=1.0, half_width_frac=0.0):
    """Scheme with Delta_n = T/n, keeping M independent of n."""
    if n <= 0:
        raise ParameterError(f"nominal rate n must be positive, got {n}")
    if horizon <= 0:
        raise ParameterError(f"horizon must be positive, got {horizon}")
    return SamplingScheme(kind=kind, mean_duration=horizon / n, shape=shape, half_width_frac=half_width_frac)


def gen_sampling_times(scheme, horizon, rng_seed):
    """Generate one grid of sampling times on [0, horizon]."""
    if not (horizon > 0 and math.isfinite(horizon)):
        raise ParameterError(f"horizon must be positive and finite, got {horizon}")
    if not isinstance(scheme, SamplingScheme):
        raise ParameterError("scheme must be a SamplingScheme")
    delta = scheme.mean_duration

    if scheme.kind == "deterministic":
        # i * delta avoids accumulated rounding in the equally spaced case
        count = int(math.floor(horizon / delta * (1.0 + 1e-12)))
        times = np.arange(count + 1) * delta
        if times[-1] > horizon:
            times[-1] = horizon
        return SampleGrid.from_times(times, horizon=horizon, nominal_mean=delta)

    rng = np.random.default_rng(rng_seed)
    expected = horizon / delta
    chunk = int(expected + 6.0 * math.sqrt(expected * (1.0 + analytic_M(scheme))) + 16)
    pieces = []
    total = 0.0
    while total <= horizon:
        draws = scheme.draw(rng, chunk)
        pieces.append(draws)
        total += float(draws.sum())
    durations = np.concatenate(pieces)
    times = np.concatenate(([0.0], np.cumsum(durations)))
    count = int(np.searchsorted(times, horizon, side="right") - 1)
    times = times[:count + 1]
    logging.debug(f"Generated {scheme.kind} grid: N={count}, Delta_n={delta:.6g}, T={horizon}")
    return SampleGrid.from_times(times, horizon=horizon, nominal_mean=delta)


def analytic_M(scheme):
    """Var(tau) / Delta_n^2 of the scheme's duration law."""
    if scheme.kind == "deterministic":
        return 0.0
    if scheme.kind == "exponential":
        return 1.0
    if scheme.kind == "gamma":
        return 1.0 / scheme.shape
    return scheme.half_width_frac ** 2 / 3.0


def estimate_duration_stats(grid):
    """Sample mean of durations and M-hat = unbiased variance / mean^2."""
    if grid.count < 2:
        raise InsufficientDataError(f"need at least 2 durations to estimate M, got {grid.count}")
    tau = grid.durations
    delta_hat = float(np.mean(tau))
    m_hat = float(np.var(tau, ddof=1)) / delta_hat ** 2
    return delta_hat, m_hat


def check_regularity(grid, n):
    """
    Diagnostics for the even-spreading conditions on the sampling times.

    sum_sq_scaled = n * sum tau_i^2 stays bounded when sum tau_i^2 = O_p(1/n);
    count_ratio = N / n stays bounded when N = O_p(n); max_duration_scaled is
    n times the mesh. Values are reported only.
    """
    if n <= 0:
        raise ParameterError(f"nominal rate n must be positive, got {n}")
    if grid.count == 0:
        return {"sum_sq_scaled": 0.0, "count_ratio": 0.0, "max_duration_scaled": 0.0}
    tau = grid.durations
    return {
        "sum_sq_scaled": float(n * np.sum(tau ** 2)),
        "count_ratio": grid.count / n,
        "max_duration_scaled": float(n * np.max(tau)),
    }
