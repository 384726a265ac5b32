"""
Joint simulation of the volatility process and the log price X.

dX_t = b_t dt + sigma_t dW_t, simulated on a fine grid that refines every
sampling duration into sub-steps no longer than max_step. The sampling grid
is an input: it is generated from its own seed stream before the path, so
the observation times never see the Brownian drivers.
"""

import math
import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.signal import lfilter

from .errors import ParameterError

VOL_KINDS = ("constant", "deterministic", "cir", "lognormal")
DRIFT_KINDS = ("constant", "function")


@dataclass(frozen=True)
class VolJumps:
    """Compound Poisson multiplicative jumps on sigma^2: sigma^2 <- sigma^2 * exp(J)."""

    intensity: float
    log_mean: float = 0.0
    log_sd: float = 0.0

    def __post_init__(self):
        if self.intensity < 0:
            raise ParameterError(f"jump intensity must be >= 0, got {self.intensity}")
        if self.log_sd < 0:
            raise ParameterError(f"jump log_sd must be >= 0, got {self.log_sd}")


@dataclass(frozen=True)
class ModelSpec:
    """
    Parameters of the semimartingale.

    vol_kind selects sigma^2:
      constant       sigma^2 = sigma ** 2
      deterministic  sigma^2(t) = sigma2_fn(t)
      cir            dv = kappa (theta - v) dt + xi sqrt(v) dB, v_0 = v0
      lognormal      d ln sigma = kappa (theta - ln sigma) dt + xi dB, sigma_0 = sigma0
    """

    x0: float = 0.0
    drift_kind: str = "constant"
    drift: float = 0.0
    drift_fn: Optional[Callable] = None
    drift_bound: float = math.inf
    vol_kind: str = "constant"
    sigma: float = 1.0
    sigma2_fn: Optional[Callable] = None
    kappa: float = 0.0
    theta: float = 0.0
    xi: float = 0.0
    v0: float = 1.0
    sigma0: float = 1.0
    truncate: bool = True
    leverage: float = 0.0
    vol_jumps: Optional[VolJumps] = None

    def __post_init__(self):
        if self.vol_kind not in VOL_KINDS:
            raise ParameterError(f"unknown vol model '{self.vol_kind}', expected one of {VOL_KINDS}")
        if self.drift_kind not in DRIFT_KINDS:
            raise ParameterError(f"unknown drift kind '{self.drift_kind}', expected one of {DRIFT_KINDS}")
        if not -1.0 <= self.leverage <= 1.0:
            raise ParameterError(f"leverage must lie in [-1, 1], got {self.leverage}")
        if self.drift_kind == "constant" and not math.isfinite(self.drift):
            raise ParameterError("constant drift must be finite")
        if self.drift_kind == "function":
            if self.drift_fn is None:
                raise ParameterError("drift_kind 'function' requires drift_fn")
            if not math.isfinite(self.drift_bound):
                raise ParameterError("a time-varying drift needs a finite drift_bound")
        if self.vol_kind == "constant" and self.sigma < 0:
            raise ParameterError(f"constant sigma must be >= 0, got {self.sigma}")
        if self.vol_kind == "deterministic" and self.sigma2_fn is None:
            raise ParameterError("vol_kind 'deterministic' requires sigma2_fn")
        if self.vol_kind == "cir":
            if self.kappa <= 0 or self.theta < 0 or self.xi < 0 or self.v0 < 0:
                raise ParameterError("CIR needs kappa > 0 and theta, xi, v0 >= 0")
            if not self.feller_satisfied and not self.truncate:
                raise ParameterError(
                    f"Feller condition 2*kappa*theta >= xi^2 fails "
                    f"({2 * self.kappa * self.theta:.6g} < {self.xi ** 2:.6g}) and truncation is disabled")
        if self.vol_kind == "lognormal":
            if self.kappa <= 0 or self.xi < 0 or self.sigma0 <= 0:
                raise ParameterError("lognormal-OU needs kappa > 0, xi >= 0, sigma0 > 0")

    @property
    def feller_satisfied(self):
        return 2.0 * self.kappa * self.theta >= self.xi ** 2

    def describe(self):
        out = {
            "x0": self.x0,
            "drift_kind": self.drift_kind,
            "vol_kind": self.vol_kind,
            "leverage": self.leverage,
        }
        if self.drift_kind == "constant":
            out["drift"] = self.drift
        else:
            out["drift_bound"] = self.drift_bound
        if self.vol_kind == "constant":
            out["sigma"] = self.sigma
        elif self.vol_kind == "cir":
            out.update(kappa=self.kappa, theta=self.theta, xi=self.xi, v0=self.v0, truncate=self.truncate)
        elif self.vol_kind == "lognormal":
            out.update(kappa=self.kappa, theta=self.theta, xi=self.xi, sigma0=self.sigma0)
        if self.vol_jumps is not None:
            out["vol_jumps"] = {
                "intensity": self.vol_jumps.intensity,
                "log_mean": self.vol_jumps.log_mean,
                "log_sd": self.vol_jumps.log_sd,
            }
        return out


@dataclass(frozen=True, eq=False)
class SimulatedPath:
    """(sigma^2, X) on the fine grid and at the sampling times."""

    fine_times: np.ndarray
    fine_sigma2: np.ndarray
    sample_x: np.ndarray
    sample_sigma2: np.ndarray
    grid: object
    sample_index: np.ndarray

    @property
    def times(self):
        return self.grid.times

    @property
    def x(self):
        return self.sample_x


def refine_grid(grid, max_step):
    """Split each duration into equal sub-steps of length <= max_step."""
    if not max_step > 0:
        raise ParameterError(f"max_step must be positive, got {max_step}")
    if grid.count == 0:
        return grid.times.copy(), np.zeros(1, dtype=int)
    steps = np.maximum(np.ceil(grid.durations / max_step * (1.0 - 1e-12)).astype(np.int64), 1)
    block_start = np.concatenate(([0], np.cumsum(steps)))
    total = int(block_start[-1])
    owner = np.repeat(np.arange(grid.count), steps)
    within = np.arange(total) - block_start[:-1][owner]
    fine = grid.times[:-1][owner] + within * (grid.durations / steps)[owner]
    fine = np.concatenate((fine, grid.times[-1:]))
    return fine, block_start


def _jump_log_factor(jumps, dt, rng):
    """Cumulative log multiplier of sigma^2 at each fine time (0 at the start)."""
    counts = rng.poisson(jumps.intensity * dt)
    sizes = np.zeros(dt.size)
    hit = counts > 0
    if np.any(hit):
        # sum of `count` i.i.d. normals
        c = counts[hit]
        sizes[hit] = rng.normal(jumps.log_mean * c, jumps.log_sd * np.sqrt(c))
    return np.concatenate(([0.0], np.cumsum(sizes)))


def _cir_variance(model, dt, z_vol, jump_log):
    """Euler full truncation: v+ = max(v, 0) in drift and diffusion."""
    kappa, theta, xi = model.kappa, model.theta, model.xi
    jump_mult = np.exp(np.diff(jump_log)).tolist() if jump_log is not None else None
    v = model.v0
    out = [v]
    steps = dt.tolist()
    shocks = z_vol.tolist()
    for j in range(len(steps)):
        h = steps[j]
        vp = v if v > 0.0 else 0.0
        v = v + kappa * (theta - vp) * h + xi * math.sqrt(vp * h) * shocks[j]
        if jump_mult is not None:
            v = v * jump_mult[j]
        out.append(v)
    return np.maximum(np.array(out), 0.0)


def _lognormal_variance(model, dt, z_vol, jump_log):
    """Exact OU recursion for y = ln sigma; jumps add J/2 to y."""
    kappa = model.kappa
    phi = np.exp(-kappa * dt)
    scale = model.xi * np.sqrt(-np.expm1(-2.0 * kappa * dt) / (2.0 * kappa))
    dev0 = math.log(model.sigma0) - model.theta
    shocks = scale * z_vol
    if dt.size and np.allclose(phi, phi[0], rtol=0.0, atol=1e-15):
        dev, _ = lfilter([1.0], [1.0, -phi[0]], shocks, zi=[phi[0] * dev0])
    else:
        dev = []
        prev = dev0
        for a, s in zip(phi.tolist(), shocks.tolist()):
            prev = a * prev + s
            dev.append(prev)
    y = model.theta + np.concatenate(([dev0], dev))
    if jump_log is not None:
        y = y + 0.5 * jump_log
    return np.exp(2.0 * y)


def _variance_path(model, fine, dt, z_vol, rng):
    jump_log = None
    if model.vol_jumps is not None and model.vol_jumps.intensity > 0:
        jump_log = _jump_log_factor(model.vol_jumps, dt, rng)

    if model.vol_kind == "cir":
        return _cir_variance(model, dt, z_vol, jump_log)
    if model.vol_kind == "lognormal":
        return _lognormal_variance(model, dt, z_vol, jump_log)
    if model.vol_kind == "constant":
        sigma2 = np.full(fine.size, model.sigma ** 2)
    else:
        sigma2 = np.asarray(model.sigma2_fn(fine), dtype=float) * np.ones(fine.size)
        if np.any(sigma2 < 0):
            raise ParameterError("sigma2_fn returned a negative variance")
    if jump_log is not None:
        sigma2 = sigma2 * np.exp(jump_log)
    return sigma2


def simulate_path(model, grid, max_step, rng_seed):
    """
    Simulate (sigma^2, X) for one replication on the given sampling grid.

    X_{s+h} = X_s + b_s h + sigma_s sqrt(h) Z with Z correlated `leverage`
    with the volatility shock; sigma is taken at the left end of each
    sub-step, so increments over a sampling interval are exact for constant
    b and sigma.
    """
    fine, sample_index = refine_grid(grid, max_step)
    rng = np.random.default_rng(rng_seed)
    dt = np.diff(fine)
    steps = dt.size

    z_vol = rng.standard_normal(steps)
    z_ind = rng.standard_normal(steps)
    rho = model.leverage
    z_x = rho * z_vol + math.sqrt(1.0 - rho * rho) * z_ind

    sigma2 = _variance_path(model, fine, dt, z_vol, rng)

    if model.drift_kind == "constant":
        drift_part = model.drift * fine
    else:
        b = np.asarray(model.drift_fn(fine[:-1]), dtype=float) * np.ones(steps)
        if np.any(np.abs(b) > model.drift_bound):
            raise ParameterError(f"drift exceeds its declared bound {model.drift_bound}")
        drift_part = np.concatenate(([0.0], np.cumsum(b * dt)))

    diffusion = np.concatenate(([0.0], np.cumsum(np.sqrt(sigma2[:-1] * dt) * z_x)))
    x_fine = model.x0 + drift_part + diffusion

    logging.debug(f"Simulated {model.vol_kind} path: {steps} fine steps, N={grid.count}")
    return SimulatedPath(
        fine_times=fine,
        fine_sigma2=sigma2,
        sample_x=x_fine[sample_index],
        sample_sigma2=sigma2[sample_index],
        grid=grid,
        sample_index=sample_index,
    )


def integrate_on_fine_grid(path, g):
    """Left-endpoint Riemann sum of g(sigma^2(u)) over [0, t_N]."""
    dt = np.diff(path.fine_times)
    if dt.size == 0:
        return 0.0
    values = np.asarray(g(path.fine_sigma2[:-1]), dtype=float) * np.ones(dt.size)
    return float(np.sum(values * dt))


def integrated_variance(path):
    """Integral of sigma^2 over [0, t_N] on the fine grid."""
    return integrate_on_fine_grid(path, lambda s2: s2)


def default_max_step(grid):
    """Delta_n / 4, using the nominal mean when the grid carries one."""
    delta = grid.nominal_mean
    if delta is None:
        delta = grid.last_time / max(grid.count, 1)
    return delta / 4.0


def parse_vol_model(text):
    """Parse `const:s`, `linear:a,b`, `cir:kappa,theta,xi,v0` or `lognormal:kappa,theta,xi,sigma0`."""
    name, _, args = text.partition(":")
    try:
        values = [float(v) for v in args.split(",")] if args else []
    except ValueError:
        raise ParameterError(f"cannot parse volatility model '{text}'")
    name = name.strip().lower()
    if name in ("const", "constant") and len(values) == 1:
        return {"vol_kind": "constant", "sigma": values[0]}
    if name == "linear" and len(values) == 2:
        a, slope = values
        return {"vol_kind": "deterministic", "sigma2_fn": lambda t: a + slope * t}
    if name == "cir" and len(values) == 4:
        return {"vol_kind": "cir", "kappa": values[0], "theta": values[1], "xi": values[2], "v0": values[3]}
    if name == "lognormal" and len(values) == 4:
        return {"vol_kind": "lognormal", "kappa": values[0], "theta": values[1], "xi": values[2],
                "sigma0": values[3]}
    raise ParameterError(f"cannot parse volatility model '{text}'")


def parse_drift(text):
    """Parse `const:c` or `sin:a,omega` (b(t) = a sin(omega t), bound |a|)."""
    name, _, args = text.partition(":")
    try:
        values = [float(v) for v in args.split(",")] if args else []
    except ValueError:
        raise ParameterError(f"cannot parse drift '{text}'")
    name = name.strip().lower()
    if name in ("const", "constant") and len(values) == 1:
        return {"drift_kind": "constant", "drift": values[0]}
    if name == "sin" and len(values) == 2:
        a, omega = values
        return {"drift_kind": "function", "drift_fn": lambda t: a * np.sin(omega * t), "drift_bound": abs(a)}
    raise ParameterError(f"cannot parse drift '{text}'")


def parse_vol_jumps(text):
    """Parse `intensity[,log_mean[,log_sd]]`."""
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise ParameterError(f"cannot parse vol jumps '{text}'")
    if not 1 <= len(values) <= 3:
        raise ParameterError(f"cannot parse vol jumps '{text}'")
    return VolJumps(*values)
