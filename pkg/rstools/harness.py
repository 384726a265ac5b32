"""
Replicated Monte Carlo experiments for the LLN and CLT of V'(f,k).

Each replication draws its grid and its path from separate seed streams
derived from (master_seed, n, rep, stream). Replications run on a thread
pool and are collected in index order, so a report body does not depend on
the number of threads.
"""

import os
import math
import json
import time
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import stats
from scipy.special import kolmogorov

from .errors import ParameterError, InsufficientDataError, ReplicationError, RSToolsError
from .functionals import TestFunction, v_prime_functional, v_prime_partial_sums
from .gaussianlimits import (limit_integrals, studentize, feasible_iv_ci, cumulative_rho_integral)
from .pathsim import ModelSpec, simulate_path, integrated_variance
from .sampling import SamplingScheme, gen_sampling_times, analytic_M

STREAM_GRID = 0
STREAM_PATH = 1
STREAM_MC = 2

MODES = ("lln", "clt", "coverage")
DEFAULT_N_GRID = (500, 1000, 2000, 4000, 8000)
DEFAULT_REPLICATIONS = {"lln": 200, "clt": 2000, "coverage": 2000}
KS_ALPHA = 0.01
HISTOGRAM_BINS = 40
HISTOGRAM_RANGE = (-4.0, 4.0)


def derive_seed(master_seed, n, rep, stream):
    """64-bit seed for one (n, replication, stream) cell."""
    entropy = [int(master_seed) & 0xFFFFFFFFFFFFFFFF, int(n), int(rep), int(stream)]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


def default_threads():
    value = os.getenv('RSCLT_THREADS')
    if value:
        return max(1, int(value))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class ExperimentConfig:
    scheme: SamplingScheme
    model: ModelSpec
    f: TestFunction
    horizon: float = 1.0
    n_grid: Tuple[int, ...] = DEFAULT_N_GRID
    replications: int = 200
    master_seed: int = 42
    mode: str = "lln"
    max_step_frac: float = 0.25
    ucp_checkpoints: int = 0
    bypass: bool = False
    confidence: float = 0.95
    known_rate: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ParameterError(f"unknown mode '{self.mode}', expected one of {MODES}")
        if self.replications < 1:
            raise ParameterError(f"replications must be >= 1, got {self.replications}")
        if not self.horizon > 0:
            raise ParameterError(f"horizon must be positive, got {self.horizon}")
        if not self.n_grid:
            raise ParameterError("n_grid must be nonempty")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])) or min(self.n_grid) < 1:
            raise ParameterError(f"n_grid must be positive and increasing, got {list(self.n_grid)}")
        if not self.max_step_frac > 0:
            raise ParameterError("max_step_frac must be positive")
        if self.ucp_checkpoints < 0:
            raise ParameterError("ucp_checkpoints must be >= 0")

    def scheme_at(self, n):
        return replace(self.scheme, mean_duration=self.horizon / n)

    def describe(self):
        return {
            "mode": self.mode,
            "scheme": self.scheme_at(self.n_grid[0]).describe() | {"mean_duration": "T/n"},
            "model": self.model.describe(),
            "f": str(self.f),
            "k": self.f.k,
            "horizon": self.horizon,
            "n_grid": list(self.n_grid),
            "replications": self.replications,
            "master_seed": self.master_seed,
            "seed_derivation": "SeedSequence([master_seed, n, rep, stream]); streams grid=0 path=1 mc=2",
            "max_step_frac": self.max_step_frac,
            "ucp_checkpoints": self.ucp_checkpoints,
            "bypass": self.bypass,
            "confidence": self.confidence if self.mode == "coverage" else None,
        }


@dataclass
class ReplicationResult:
    value: float
    scaled_error: Optional[float] = None
    rprime_integral: Optional[float] = None
    sup_error: Optional[float] = None
    covered: Optional[bool] = None
    warnings: List[str] = field(default_factory=list)


@dataclass
class PerNStats:
    n: int
    delta_n: float
    values: List[float]
    rms: float
    mean: float
    variance: float
    skewness: Optional[float]
    kurtosis: Optional[float]
    ks: Optional[Dict[str, float]] = None
    histogram: Optional[Dict[str, list]] = None
    scaled_error_variance: Optional[float] = None
    mean_rprime_integral: Optional[float] = None
    sup_rms: Optional[float] = None
    coverage: Optional[float] = None

    def to_dict(self):
        out = {
            "n": self.n,
            "delta_n": self.delta_n,
            "rms": self.rms,
            "mean": self.mean,
            "variance": self.variance,
            "skewness": self.skewness,
            "kurtosis": self.kurtosis,
        }
        for key in ("ks", "histogram", "scaled_error_variance", "mean_rprime_integral", "sup_rms", "coverage"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        out["values"] = self.values
        return out


@dataclass
class ExperimentReport:
    config: dict
    per_n: List[PerNStats]
    ks: Optional[Dict[str, float]] = None
    rate_fit: Optional[Dict[str, float]] = None
    warnings: List[str] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict)

    def body(self):
        """Deterministic content of report.json (timings excluded)."""
        return _json_safe({
            "config": self.config,
            "per_n": [s.to_dict() for s in self.per_n],
            "ks": self.ks,
            "rate_fit": self.rate_fit,
            "warnings": self.warnings,
        })

    def to_json(self):
        return json.dumps(self.body(), indent=2, sort_keys=False)

    def write_json(self, path):
        with open(path, 'w') as f:
            f.write(self.to_json())
            f.write("\n")
        logging.info(f"Report written to {path}")

    def stats_frame(self):
        rows = [(s.n, rep, v) for s in self.per_n for rep, v in enumerate(s.values)]
        return pd.DataFrame(rows, columns=["n", "rep", "value"])

    def write_stats_csv(self, path):
        self.stats_frame().to_csv(path, index=False, float_format="%.17g")
        logging.info(f"Per-replication statistics written to {path}")

    def write_timings(self, path):
        """Wall-clock seconds per n, kept out of report.json."""
        with open(path, 'w') as f:
            json.dump({"timings": self.timings}, f, indent=4)
        logging.info(f"Timings written to {path}")


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def ks_test(samples):
    """
    Kolmogorov-Smirnov test against N(0,1).

    The p-value is Q(lambda) with lambda = (sqrt(m) + 0.12 + 0.11/sqrt(m)) D.
    """
    samples = np.asarray(samples, dtype=float)
    m = samples.size
    if m < 10:
        raise InsufficientDataError(f"KS test needs at least 10 samples, got {m}")
    d = float(stats.kstest(samples, "norm").statistic)
    root = math.sqrt(m)
    lam = (root + 0.12 + 0.11 / root) * d
    p = float(min(max(kolmogorov(lam), 0.0), 1.0))
    return d, p


def rate_fit(pairs):
    """OLS of log(rms) on log(Delta_n): (slope, intercept, r^2)."""
    if len(pairs) < 3:
        raise ParameterError(f"rate fit needs at least 3 (Delta_n, rms) pairs, got {len(pairs)}")
    h = np.array([p[0] for p in pairs], dtype=float)
    e = np.array([p[1] for p in pairs], dtype=float)
    if np.any(h <= 0) or np.any(e <= 0):
        raise ParameterError("rate fit needs strictly positive Delta_n and errors")
    if np.unique(h).size != h.size:
        raise ParameterError("rate fit needs distinct Delta_n values")
    fit = stats.linregress(np.log(h), np.log(e))
    return float(fit.slope), float(fit.intercept), float(fit.rvalue ** 2)


def clt_hypothesis_holds(f):
    """Polynomial and globally even, or even in each argument."""
    polynomial = f.is_monomial_sum and not any(a for t in f.terms for a in t.abs_flags)
    return f.is_even_each or (polynomial and f.is_globally_even)


def _simulate(config, n, rep):
    scheme = config.scheme_at(n)
    grid = gen_sampling_times(scheme, config.horizon, derive_seed(config.master_seed, n, rep, STREAM_GRID))
    path = simulate_path(config.model, grid, config.max_step_frac * scheme.mean_duration,
                         derive_seed(config.master_seed, n, rep, STREAM_PATH))
    return scheme, path


def _lln_replication(config, n, rep):
    scheme, path = _simulate(config, n, rep)
    delta = scheme.mean_duration
    vp = v_prime_functional(config.f, path).value
    lq = limit_integrals(config.f, path, analytic_M(scheme))
    result = ReplicationResult(value=delta * vp - lq.rho_integral, warnings=list(lq.warnings))
    if config.ucp_checkpoints:
        checkpoints = config.horizon * np.arange(1, config.ucp_checkpoints + 1) / config.ucp_checkpoints
        partial = v_prime_partial_sums(config.f, path, checkpoints)
        n_s = np.searchsorted(path.times, checkpoints, side="right") - 1
        integral = cumulative_rho_integral(config.f, path)[n_s]
        result.sup_error = float(np.max(np.abs(delta * partial - integral)))
    return result


def _clt_replication(config, n, rep):
    if config.bypass:
        rng = np.random.default_rng(derive_seed(config.master_seed, n, rep, STREAM_MC))
        return ReplicationResult(value=float(rng.standard_normal()))
    scheme, path = _simulate(config, n, rep)
    delta = scheme.mean_duration
    vp = v_prime_functional(config.f, path).value
    lq = limit_integrals(config.f, path, analytic_M(scheme))
    return ReplicationResult(
        value=studentize(vp, lq, delta),
        scaled_error=(delta * vp - lq.rho_integral) / math.sqrt(delta),
        rprime_integral=lq.rprime_integral,
        warnings=list(lq.warnings),
    )


def _coverage_replication(config, n, rep):
    scheme, path = _simulate(config, n, rep)
    mean_duration = scheme.mean_duration if config.known_rate else None
    ci = feasible_iv_ci(path, config.confidence, mean_duration=mean_duration)
    target = integrated_variance(path)
    return ReplicationResult(value=(ci.iv_hat - target) / ci.std_error, covered=bool(ci.lo <= target <= ci.hi))


_REPLICATIONS = {"lln": _lln_replication, "clt": _clt_replication, "coverage": _coverage_replication}


def _run_replications(config, n, threads):
    fn = _REPLICATIONS[config.mode]

    def task(rep):
        try:
            return fn(config, n, rep)
        except RSToolsError as e:
            grid_seed = derive_seed(config.master_seed, n, rep, STREAM_GRID)
            path_seed = derive_seed(config.master_seed, n, rep, STREAM_PATH)
            raise ReplicationError(n, rep, grid_seed, path_seed, e) from e

    if threads <= 1:
        return [task(rep) for rep in range(config.replications)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        # map yields in submission order
        return list(pool.map(task, range(config.replications)))


def _moments(values):
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    variance = float(arr.var(ddof=1)) if arr.size > 1 else 0.0
    if variance > 0:
        skewness = float(stats.skew(arr))
        kurt = float(stats.kurtosis(arr, fisher=False))
    else:
        skewness, kurt = None, None
    rms = float(np.sqrt(np.mean(arr ** 2)))
    return rms, mean, variance, skewness, kurt


def _summarize(config, n, results):
    values = [r.value for r in results]
    rms, mean, variance, skewness, kurt = _moments(values)
    summary = PerNStats(n=n, delta_n=config.horizon / n, values=values, rms=rms, mean=mean, variance=variance,
                        skewness=skewness, kurtosis=kurt)
    if config.mode == "lln" and config.ucp_checkpoints:
        sup = np.array([r.sup_error for r in results])
        summary.sup_rms = float(np.sqrt(np.mean(sup ** 2)))
    if config.mode in ("clt", "coverage") and len(values) >= 10:
        d, p = ks_test(values)
        summary.ks = {"D": d, "p_value": p}
        counts, edges = np.histogram(values, bins=HISTOGRAM_BINS, range=HISTOGRAM_RANGE)
        summary.histogram = {"edges": edges.tolist(), "counts": counts.tolist()}
    if config.mode == "clt" and not config.bypass:
        scaled = np.array([r.scaled_error for r in results])
        summary.scaled_error_variance = float(scaled.var(ddof=1)) if scaled.size > 1 else 0.0
        summary.mean_rprime_integral = float(np.mean([r.rprime_integral for r in results]))
    if config.mode == "coverage":
        summary.coverage = float(np.mean([r.covered for r in results]))
    return summary


def run_experiment(config, threads=None):
    """Run every n of the grid and assemble the report in index order."""
    threads = default_threads() if threads is None else max(1, int(threads))
    warnings = []
    if config.mode == "clt" and not config.bypass and not clt_hypothesis_holds(config.f):
        message = (f"f = {config.f} is neither a globally even polynomial nor even in each argument; "
                   f"the CLT hypotheses do not hold")
        logging.warning(message)
        warnings.append(message)

    per_n = []
    timings = {}
    for n in config.n_grid:
        start = time.perf_counter()
        logging.info(f"{config.mode}: n={n}, {config.replications} replications on {threads} thread(s)")
        results = _run_replications(config, n, threads)
        for rep, result in enumerate(results):
            for message in result.warnings:
                tagged = f"n={n} rep={rep}: {message}"
                logging.warning(tagged)
                warnings.append(tagged)
        per_n.append(_summarize(config, n, results))
        timings[str(n)] = time.perf_counter() - start
        logging.info(f"{config.mode}: n={n} done in {timings[str(n)]:.2f}s, rms={per_n[-1].rms:.6g}")

    report = ExperimentReport(config=config.describe(), per_n=per_n, warnings=warnings, timings=timings)
    if config.mode in ("clt", "coverage"):
        report.ks = per_n[-1].ks
    if config.mode == "lln" and len(per_n) >= 3:
        pairs = [(s.delta_n, s.rms) for s in per_n]
        if all(rms > 0 for _, rms in pairs):
            slope, intercept, r2 = rate_fit(pairs)
            report.rate_fit = {"slope": slope, "intercept": intercept, "r2": r2}
        else:
            warnings.append("rate fit skipped: zero RMS error at some n")
    return report


def run_lln(config, threads=None):
    """Terminal-time errors Delta_n V'(f,k)_T - int_0^{t_N} rho du per replication."""
    if config.mode != "lln":
        raise ParameterError(f"run_lln needs mode 'lln', got '{config.mode}'")
    return run_experiment(config, threads)


def run_clt(config, threads=None):
    """Studentized statistics with the realized volatility path and analytic M."""
    if config.mode != "clt":
        raise ParameterError(f"run_clt needs mode 'clt', got '{config.mode}'")
    return run_experiment(config, threads)


def run_coverage(config, threads=None):
    """Coverage of feasible integrated-variance intervals."""
    if config.mode != "coverage":
        raise ParameterError(f"run_coverage needs mode 'coverage', got '{config.mode}'")
    return run_experiment(config, threads)


def run_m_ratio(config, reference_kind="deterministic", threads=None):
    """
    Variance of the sqrt(n)-scaled error under config.scheme over the same under
    the reference scheme, with the ratio the limit variances predict.
    """
    if config.mode != "clt":
        raise ParameterError("run_m_ratio needs a clt configuration")
    reference = replace(config, scheme=replace(config.scheme, kind=reference_kind))
    tested = run_clt(config, threads).per_n[-1]
    base = run_clt(reference, threads).per_n[-1]
    return {
        "n": tested.n,
        "variance": tested.scaled_error_variance,
        "reference_variance": base.scaled_error_variance,
        "ratio": tested.scaled_error_variance / base.scaled_error_variance,
        "expected_ratio": tested.mean_rprime_integral / base.mean_rprime_integral,
    }
