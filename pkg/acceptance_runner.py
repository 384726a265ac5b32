"""
Acceptance Suite

Runs the Monte Carlo acceptance criteria of the toolkit with master seed 42
and prints a summary. Exit status 0 only when every criterion passes.

Usage: python acceptance_runner.py [criterion numbers...] [--threads N]
"""

import sys
import time
import logging
import argparse

import numpy as np

from rstools.logs import setup_logging
from rstools.csvio import ObservedPath
from rstools.functionals import (TestFunction, Term, parse_function, v_functional, v_prime_functional,
                                 b_variation)
from rstools.gaussianlimits import rho, rho_estimate, r_plain, r_plain_estimate, r_prime
from rstools.harness import ExperimentConfig, run_lln, run_clt, run_coverage, run_m_ratio, default_threads
from rstools.pathsim import ModelSpec
from rstools.sampling import SamplingScheme

MASTER_SEED = 42
EXACT_TOL = 1e-12


def hand_path():
    """The four-point fixture path used for exact functional values."""
    return ObservedPath(times=np.array([0.0, 0.25, 0.75, 1.0]), x=np.array([0.0, 0.1, -0.2, 0.1]),
                        sigma2=np.full(4, np.nan))


def random_monomial_sums(count, seed):
    """Random monomial sums with k in {1, 2, 3} and exponents up to 2."""
    rng = np.random.default_rng(seed)
    functions = []
    for i in range(count):
        k = int(rng.integers(1, 4))
        terms = []
        for _ in range(int(rng.integers(1, 3))):
            exponents = tuple(float(p) for p in rng.integers(0, 3, size=k))
            abs_flags = tuple(bool(a) for a in rng.integers(0, 2, size=k))
            coefficient = float(np.round(rng.uniform(-2.0, 2.0), 2))
            terms.append(Term(coefficient, exponents, abs_flags))
        functions.append(TestFunction(k=k, terms=tuple(terms), label=f"random_{i}"))
    return functions


def clt_config(**overrides):
    settings = dict(
        scheme=SamplingScheme("exponential", 1.0),
        model=ModelSpec(sigma=1.0),
        f=parse_function("x^2"),
        n_grid=(2000,),
        replications=2000,
        master_seed=MASTER_SEED,
        mode="clt",
    )
    settings.update(overrides)
    return ExperimentConfig(**settings)


def criterion_hand_path(threads):
    path = hand_path()
    checks = {
        "V(x^2)": (v_functional(parse_function("x^2"), path).value, 0.19),
        "V'(x^2)": (v_prime_functional(parse_function("x^2"), path).value, 0.58),
        "V'(x1^2*x2^2)": (v_prime_functional(parse_function("x1^2*x2^2"), path).value, 0.072),
        "B(3)": (b_variation(3.0, path).value, 0.055),
    }
    ok = True
    for name, (value, expected) in checks.items():
        logging.info(f"{name} = {value:.12g} (expected {expected})")
        ok = ok and abs(value - expected) <= EXACT_TOL
    return ok


def criterion_oracle(threads):
    ok = True
    for f in random_monomial_sums(24, MASTER_SEED):
        for name, closed, sampled in (
                ("rho", rho_estimate(f, 1.0), rho_estimate(f, 1.0, method="monte_carlo")),
                ("R", r_plain_estimate(f, 1.0), r_plain_estimate(f, 1.0, method="monte_carlo"))):
            gap = abs(closed.value - sampled.value)
            within = gap <= 3.0 * sampled.std_error + EXACT_TOL
            if not within:
                logging.warning(f"{name}({f.terms}) closed {closed.value:.6g} vs MC {sampled.value:.6g} "
                                f"+- {sampled.std_error:.3g}")
            ok = ok and within
    spot = [
        (rho(parse_function("x^4"), 1.0), 3.0),
        (r_prime(parse_function("x^2"), 1.0, 1.0), 3.0),
        (r_prime(parse_function("x^4"), 1.0, 0.0), 96.0),
        (r_plain(parse_function("x1^2*x2^2"), 1.0), 12.0),
    ]
    for value, expected in spot:
        logging.info(f"spot value {value:.12g} (expected {expected})")
        ok = ok and abs(value - expected) <= EXACT_TOL
    return ok


def criterion_lln(threads):
    config = clt_config(mode="lln", n_grid=(500, 1000, 2000, 4000, 8000), replications=200)
    report = run_lln(config, threads)
    at_5000 = run_lln(clt_config(mode="lln", n_grid=(5000,), replications=200), threads).per_n[0]
    slope = report.rate_fit["slope"]
    logging.info(f"LLN rms at n=5000: {at_5000.rms:.6g}; rate slope {slope:.4f}")
    return at_5000.rms <= 0.05 and 0.35 <= slope <= 0.65


def criterion_clt(threads):
    stats = run_clt(clt_config(), threads).per_n[0]
    logging.info(f"CLT KS p={stats.ks['p_value']:.4g}, variance={stats.variance:.4f}")
    return stats.ks["p_value"] > 0.01 and 0.85 <= stats.variance <= 1.15


def criterion_m_ratio(threads):
    result = run_m_ratio(clt_config(replications=5000), threads=threads)
    logging.info(f"M ratio {result['ratio']:.4f}, limit {result['expected_ratio']:.4f}")
    return abs(result["ratio"] / 1.5 - 1.0) <= 0.10


def criterion_two_increments(threads):
    config = clt_config(scheme=SamplingScheme("deterministic", 1.0), f=parse_function("x1^2*x2^2"),
                        replications=5000)
    stats = run_clt(config, threads).per_n[0]
    logging.info(f"k=2 scaled error variance {stats.scaled_error_variance:.4f} (limit 12)")
    return abs(stats.scaled_error_variance / 12.0 - 1.0) <= 0.15


def criterion_stochastic_vol(threads):
    model = ModelSpec(vol_kind="cir", kappa=2.0, theta=1.0, xi=0.5, v0=1.0)
    stats = run_clt(clt_config(model=model), threads).per_n[0]
    logging.info(f"CIR KS p={stats.ks['p_value']:.4g}")
    return stats.ks["p_value"] > 0.01


def criterion_coverage(threads):
    config = clt_config(mode="coverage", n_grid=(5000,), replications=2000)
    stats = run_coverage(config, threads).per_n[0]
    logging.info(f"Coverage {stats.coverage:.4f}")
    return 0.93 <= stats.coverage <= 0.97


def criterion_determinism(threads):
    single = run_clt(clt_config(), 1).to_json()
    many = run_clt(clt_config(), 8).to_json()
    return single == many


CRITERIA = [
    {"name": "Hand-path exactness", "function": criterion_hand_path},
    {"name": "Limit-quantity oracle", "function": criterion_oracle},
    {"name": "LLN error and rate", "function": criterion_lln},
    {"name": "CLT normality", "function": criterion_clt},
    {"name": "M-term isolation", "function": criterion_m_ratio},
    {"name": "Two-increment functional", "function": criterion_two_increments},
    {"name": "Stochastic volatility", "function": criterion_stochastic_vol},
    {"name": "Feasible CI coverage", "function": criterion_coverage},
    {"name": "Thread determinism", "function": criterion_determinism},
]


def run_all(selected=None, threads=None):
    """Run the selected criteria (1-based), all by default"""
    threads = threads or default_threads()
    chosen = [(i, c) for i, c in enumerate(CRITERIA, start=1) if not selected or i in selected]
    results = {}

    print(f"\n===== Acceptance Suite =====")
    print(f"\nRunning {len(chosen)} criteria on {threads} thread(s)...\n")

    for i, criterion in chosen:
        name = criterion["name"]
        print(f"Criterion {i}: {name}...")
        start_time = time.time()
        try:
            success = bool(criterion["function"](threads))
        except Exception as e:
            logging.error(f"Error in criterion '{name}': {str(e)}")
            success = False
        duration = time.time() - start_time
        results[name] = {"success": success, "duration": duration}
        print(f"  {'PASSED' if success else 'FAILED'} ({duration:.2f} seconds)\n")

    print("\n===== Acceptance Summary =====")
    passed = sum(1 for r in results.values() if r["success"])
    print(f"Total: {len(results)}")
    print(f"Passed: {passed}")
    print(f"Failed: {len(results) - passed}")
    for name, result in results.items():
        status = "PASSED" if result["success"] else "FAILED"
        print(f"  {name}: {status} ({result['duration']:.2f} seconds)")
    return passed == len(results)


def main():
    parser = argparse.ArgumentParser(description="Run the Monte Carlo acceptance criteria")
    parser.add_argument("criteria", nargs="*", type=int, help="criterion numbers (default: all)")
    parser.add_argument("--threads", type=int)
    args = parser.parse_args()
    log_file = setup_logging("acceptance")
    logging.info(f"Log file: {log_file}")
    sys.exit(0 if run_all(set(args.criteria), args.threads) else 1)


if __name__ == "__main__":
    main()
