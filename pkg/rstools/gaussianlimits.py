"""
Gaussian limit quantities of the LLN and CLT for V'(f,k).

  rho(f, s2)      = E f(sigma U_1, ..., sigma U_k)
  R(f, s2)        = sum_{l=-k+1}^{k-1} E[f(sigma U_k..U_{2k-1}) f(sigma U_{l+k}..U_{l+2k-1})]
                    - (2k - 1) rho^2
  R'(f, s2, M)    = R + M rho^2

For monomial sums every expectation factorizes over the distinct U indices,
so both are exact. Other functions fall back to Gauss-Hermite quadrature
(rho, k <= 3) or Monte Carlo.
"""

import math
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional

import numpy as np
from scipy import stats
from scipy.special import gamma as gamma_fn

from .errors import ParameterError, DegenerateVarianceError, InsufficientDataError
from .functionals import evaluate, v_prime_functional, TestFunction, Term
from .pathsim import integrate_on_fine_grid
from .sampling import SampleGrid, estimate_duration_stats

QUADRATURE_NODES = 21
QUADRATURE_MAX_K = 3
MC_SAMPLES = 1_000_000
MC_SEED = 20240607
NEGATIVE_TOLERANCE = 1e-10
MAX_SIGMA_NODES = 64
PATH_MC_SAMPLES = 100_000


@dataclass(frozen=True)
class LimitEstimate:
    value: float
    method: str
    std_error: Optional[float] = None


@dataclass
class LimitQuantities:
    rho_integral: float
    rprime_integral: float
    M: float
    method: str
    mc_std_error: Optional[float] = None
    warnings: List[str] = field(default_factory=list)


@lru_cache(maxsize=None)
def gaussian_moment(signed_power, abs_power=0.0):
    """E[U^a |U|^b] for U ~ N(0,1); zero when a is odd."""
    a = int(signed_power)
    if a % 2:
        return 0.0
    total = a + abs_power
    if total == int(total) and int(total) % 2 == 0:
        # (p-1)!!, exact for even integer p
        return float(math.prod(range(int(total) - 1, 0, -2)))
    return 2.0 ** (total / 2.0) * gamma_fn((total + 1.0) / 2.0) / math.sqrt(math.pi)


def _check_sigma2(sigma2):
    if sigma2 < 0:
        raise ParameterError(f"sigma2 must be >= 0, got {sigma2}")


def _term_moment(term):
    out = float(term.coefficient)
    for p, is_abs in zip(term.exponents, term.abs_flags):
        out *= gaussian_moment(0, p) if is_abs else gaussian_moment(int(p), 0.0)
    return out


def _rho_coefficients(f):
    """rho(f, s2) = sum_d c_d * s2^(d/2), as {d: c_d}."""
    coeffs = {}
    for term in f.terms:
        m = _term_moment(term)
        if m != 0.0:
            coeffs[term.degree] = coeffs.get(term.degree, 0.0) + m
    return coeffs


def _overlap_coefficients(f):
    """sum over lags of E[f(window) f(shifted window)] as {degree: coefficient}."""
    k = f.k
    coeffs = {}
    for lag in range(-k + 1, k):
        for a in f.terms:
            for b in f.terms:
                # U index -> (signed power, abs power); window a sits at 0..k-1, b at lag..lag+k-1
                powers = {}
                for j in range(k):
                    for index, exponent, is_abs in ((j, a.exponents[j], a.abs_flags[j]),
                                                    (j + lag, b.exponents[j], b.abs_flags[j])):
                        signed, absolute = powers.get(index, (0, 0.0))
                        if is_abs:
                            absolute += exponent
                        else:
                            signed += int(exponent)
                        powers[index] = (signed, absolute)
                value = a.coefficient * b.coefficient
                for signed, absolute in powers.values():
                    value *= gaussian_moment(signed, absolute)
                    if value == 0.0:
                        break
                if value != 0.0:
                    degree = a.degree + b.degree
                    coeffs[degree] = coeffs.get(degree, 0.0) + value
    return coeffs


def _eval_scaling(coeffs, sigma2):
    sigma2 = np.asarray(sigma2, dtype=float)
    out = np.zeros_like(sigma2)
    for degree, c in coeffs.items():
        out = out + c * sigma2 ** (degree / 2.0)
    return out


def _standard_normals(size, dim, seed):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((size, dim))


def _hermite_rho(f, sigma2, nodes):
    x, w = np.polynomial.hermite_e.hermegauss(nodes)
    w = w / math.sqrt(2.0 * math.pi)
    grids = np.meshgrid(*([x] * f.k), indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=1) * math.sqrt(sigma2)
    weights = np.ones(points.shape[0])
    for g in np.meshgrid(*([w] * f.k), indexing="ij"):
        weights = weights * g.ravel()
    return float(np.dot(weights, evaluate(f, points)))


def rho_estimate(f, sigma2, method=None, samples=MC_SAMPLES, seed=MC_SEED, nodes=QUADRATURE_NODES):
    """rho(f, sigma2) with the method used and, for Monte Carlo, its standard error."""
    _check_sigma2(sigma2)
    if method is None:
        if f.is_monomial_sum:
            method = "closed_form"
        elif f.k <= QUADRATURE_MAX_K:
            method = "quadrature"
        else:
            method = "monte_carlo"
    if method == "closed_form":
        if not f.is_monomial_sum:
            raise ParameterError("closed form needs a monomial-sum test function")
        return LimitEstimate(float(_eval_scaling(_rho_coefficients(f), sigma2)), method)
    if method == "quadrature":
        if f.k > QUADRATURE_MAX_K:
            raise ParameterError(f"tensor quadrature is limited to k <= {QUADRATURE_MAX_K}")
        # difference to a coarser rule as the accuracy estimate
        fine = _hermite_rho(f, sigma2, nodes)
        coarse = _hermite_rho(f, sigma2, max(nodes - 4, 2))
        return LimitEstimate(fine, method, abs(fine - coarse))
    if method == "monte_carlo":
        u = _standard_normals(samples, f.k, seed) * math.sqrt(sigma2)
        values = evaluate(f, u)
        return LimitEstimate(float(values.mean()), method, float(values.std(ddof=1) / math.sqrt(samples)))
    raise ParameterError(f"unknown method '{method}'")


def rho(f, sigma2):
    """E f(X), X ~ N(0, sigma2 I_k)."""
    return rho_estimate(f, sigma2).value


def r_plain_estimate(f, sigma2, method=None, samples=MC_SAMPLES, seed=MC_SEED):
    """R(f, sigma2) with the method used and a Monte Carlo standard error when sampled."""
    _check_sigma2(sigma2)
    if method is None:
        method = "closed_form" if f.is_monomial_sum else "monte_carlo"
    k = f.k
    if method == "closed_form":
        if not f.is_monomial_sum:
            raise ParameterError("closed form needs a monomial-sum test function")
        overlap = float(_eval_scaling(_overlap_coefficients(f), sigma2))
        r = rho(f, sigma2)
        return LimitEstimate(overlap - (2 * k - 1) * r * r, method)
    if method != "monte_carlo":
        raise ParameterError(f"unknown method '{method}'")
    u = _standard_normals(samples, 3 * k - 2, seed) * math.sqrt(sigma2)
    base = evaluate(f, u[:, k - 1:2 * k - 1])
    overlap = np.zeros(samples)
    for lag in range(-k + 1, k):
        start = k - 1 + lag
        overlap = overlap + base * evaluate(f, u[:, start:start + k])
    r = base.mean() if not f.is_monomial_sum else rho(f, sigma2)
    value = float(overlap.mean() - (2 * k - 1) * r * r)
    return LimitEstimate(value, method, float(overlap.std(ddof=1) / math.sqrt(samples)))


def r_plain(f, sigma2):
    """The CLT variance density for deterministic sampling."""
    return r_plain_estimate(f, sigma2).value


def r_prime(f, sigma2, M):
    """R(f, sigma2) + M rho^2; M = Var(tau) / Delta_n^2."""
    if M < 0:
        raise ParameterError(f"M must be >= 0, got {M}")
    r = rho(f, sigma2)
    return r_plain(f, sigma2) + M * r * r


class _Densities:
    """rho and R' as vectorized functions of sigma^2 along a path."""

    def __init__(self, f, M, sigma2_values):
        self.method = "closed_form" if f.is_monomial_sum else None
        self.std_error = None
        if f.is_monomial_sum:
            rho_c = _rho_coefficients(f)
            overlap_c = _overlap_coefficients(f)
            k = f.k

            def rho_fn(s2):
                return _eval_scaling(rho_c, s2)

            def rprime_fn(s2):
                r = _eval_scaling(rho_c, s2)
                return _eval_scaling(overlap_c, s2) - (2 * k - 1 - M) * r * r

            self.rho, self.rprime = rho_fn, rprime_fn
            return

        # general f: exact at up to MAX_SIGMA_NODES levels, linear in between
        levels = np.unique(np.asarray(sigma2_values, dtype=float))
        if levels.size > MAX_SIGMA_NODES:
            levels = np.unique(np.quantile(levels, np.linspace(0.0, 1.0, MAX_SIGMA_NODES)))
        rho_est = [rho_estimate(f, s2, samples=PATH_MC_SAMPLES) for s2 in levels]
        r_est = [r_plain_estimate(f, s2, samples=PATH_MC_SAMPLES) for s2 in levels]
        rho_vals = np.array([e.value for e in rho_est])
        rprime_vals = np.array([e.value for e in r_est]) + M * rho_vals ** 2
        self.method = r_est[0].method if r_est[0].method == "monte_carlo" else rho_est[0].method
        errors = [e.std_error for e in rho_est + r_est if e.std_error is not None]
        self.std_error = max(errors) if errors else None
        self.rho = lambda s2: np.interp(s2, levels, rho_vals)
        self.rprime = lambda s2: np.interp(s2, levels, rprime_vals)


def limit_integrals(f, path, M):
    """Integrals over [0, t_N] of rho and R' along the simulated volatility path."""
    if M < 0:
        raise ParameterError(f"M must be >= 0, got {M}")
    densities = _Densities(f, M, path.fine_sigma2)
    rho_integral = integrate_on_fine_grid(path, densities.rho)
    rprime_integral = integrate_on_fine_grid(path, densities.rprime)

    warnings = []
    spot = densities.rprime(path.fine_sigma2)
    scale = max(1.0, float(np.max(np.abs(spot))) if spot.size else 1.0)
    negative = int(np.sum(spot < -NEGATIVE_TOLERANCE * scale))
    if negative:
        message = f"R' negative beyond tolerance at {negative} fine-grid points (min {float(spot.min()):.3e})"
        logging.warning(message)
        warnings.append(message)
    return LimitQuantities(rho_integral=rho_integral, rprime_integral=rprime_integral, M=float(M),
                           method=densities.method, mc_std_error=densities.std_error, warnings=warnings)


def cumulative_rho_integral(f, path):
    """int_0^{t_i} rho du at every sampling time t_i."""
    densities = _Densities(f, 0.0, path.fine_sigma2)
    dt = np.diff(path.fine_times)
    pieces = densities.rho(path.fine_sigma2[:-1]) * dt
    cumulative = np.concatenate(([0.0], np.cumsum(pieces)))
    return cumulative[path.sample_index]


def studentize(v_prime_value, lq, delta_n):
    """[Delta_n V' - int rho] / sqrt(Delta_n int R'), asymptotically N(0,1)."""
    if not delta_n > 0:
        raise ParameterError(f"Delta_n must be positive, got {delta_n}")
    if not lq.rprime_integral > 0:
        raise DegenerateVarianceError(f"variance integral is not positive ({lq.rprime_integral})")
    return (delta_n * v_prime_value - lq.rho_integral) / math.sqrt(delta_n * lq.rprime_integral)


SQUARE = TestFunction(k=1, terms=(Term(1.0, (2.0,), (False,)),), label="x^2")
FOURTH = TestFunction(k=1, terms=(Term(1.0, (4.0,), (False,)),), label="x^4")


@dataclass(frozen=True)
class IntervalEstimate:
    iv_hat: float
    lo: float
    hi: float
    delta_hat: float
    m_hat: float
    quarticity: float
    std_error: float


def feasible_iv_ci(obs, confidence, mean_duration=None):
    """
    Confidence interval for integrated variance from observed (t_i, X_i).

    iv_hat = D V'(x^2), variance = D (2 + M-hat) D V'(x^4) / 3, where D is the
    sample mean duration, or `mean_duration` when the sampling rate is known.
    """
    if not 0.0 < confidence < 1.0:
        raise ParameterError(f"confidence must lie in (0, 1), got {confidence}")
    times = np.asarray(obs.times, dtype=float)
    if times.size < 3:
        raise InsufficientDataError(f"need at least 3 observations, got {times.size}")
    grid = SampleGrid.from_times(times - times[0])
    delta_hat, m_hat = estimate_duration_stats(grid)
    scale = delta_hat if mean_duration is None else float(mean_duration)
    if not scale > 0:
        raise ParameterError(f"mean duration must be positive, got {scale}")

    iv_hat = scale * v_prime_functional(SQUARE, obs).value
    quarticity = scale * v_prime_functional(FOURTH, obs).value / 3.0
    variance = scale * (2.0 + m_hat) * quarticity
    if not variance > 0:
        raise DegenerateVarianceError("quarticity is zero; the price series is constant")
    z = stats.norm.ppf(0.5 * (1.0 + confidence))
    half = z * math.sqrt(variance)
    return IntervalEstimate(iv_hat=iv_hat, lo=iv_hat - half, hi=iv_hat + half, delta_hat=delta_hat,
                            m_hat=m_hat, quarticity=quarticity, std_error=math.sqrt(variance))
