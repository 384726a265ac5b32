"""
rsclt command line: sampling grids, path simulation, functionals,
LLN/CLT experiments and feasible volatility intervals from tick data.

Exit status: 0 success, 1 data/parameter/usage error, 2 internal error.
"""

import os
import sys
import logging
import argparse
import traceback

from dotenv import load_dotenv

from rstools.errors import RSToolsError, UsageError, ParameterError
from rstools.logs import setup_logging
from rstools.profiles import ProfileStore, read_config_file, merge_settings
from rstools.sampling import (SamplingScheme, gen_sampling_times, check_regularity, estimate_duration_stats,
                              scheme_for_rate)
from rstools.pathsim import (ModelSpec, simulate_path, parse_vol_model, parse_drift, parse_vol_jumps,
                             default_max_step)
from rstools.functionals import parse_function, v_functional, v_prime_functional, b_variation
from rstools.gaussianlimits import feasible_iv_ci
from rstools.harness import (ExperimentConfig, run_experiment, derive_seed, default_threads, STREAM_GRID,
                             STREAM_PATH, DEFAULT_N_GRID, DEFAULT_REPLICATIONS)
from rstools.ticks import ingest_ticks
from rstools.csvio import write_grid_csv, write_path_csv, read_path_csv

EXIT_OK = 0
EXIT_DATA = 1
EXIT_INTERNAL = 2

COMMANDS = ("sample-times", "simulate", "functional", "lln", "clt", "coverage", "ci", "check")


def _bool(value):
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ParameterError(f"expected a boolean, got '{value}'")


def _int_list(value):
    if isinstance(value, (list, tuple)):
        return tuple(int(v) for v in value)
    if isinstance(value, int):
        return (value,)
    return tuple(int(v) for v in str(value).split(",") if v.strip())


# key -> (converter, built-in default)
SETTINGS = {
    "scheme": (str, "exponential"),
    "mean_duration": (float, None),
    "n": (_int_list, None),
    "horizon": (float, 1.0),
    "shape": (float, 1.0),
    "half_width": (float, 0.0),
    "seed": (int, 42),
    "sigma": (str, "const:1"),
    "drift": (str, "const:0"),
    "x0": (float, 0.0),
    "leverage": (float, 0.0),
    "vol_jumps": (str, None),
    "truncate": (_bool, True),
    "max_step": (float, None),
    "max_step_frac": (float, 0.25),
    "reps": (int, None),
    "f": (str, "x^2"),
    "k": (int, None),
    "out": (str, None),
    "stats": (str, None),
    "checkpoints": (int, 0),
    "confidence": (float, 0.95),
    "bypass": (_bool, False),
    "known_rate": (_bool, True),
    "threads": (int, None),
    "kind": (str, "vprime"),
    "p": (float, 2.0),
    "path": (str, None),
    "ticks": (str, None),
}


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting with status 2."""

    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage()}")


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--profile", help="experiment profile name (experiment_profiles/<name>.json)")
    common.add_argument("--config", help="key=value config file; flags take precedence")
    common.add_argument("--quiet", action="store_true", help="only warnings on stdout")
    common.add_argument("--no-log-file", action="store_true", help="do not write logs/ files")

    sampling = _Parser(add_help=False)
    sampling.add_argument("--scheme", choices=["deterministic", "exponential", "gamma", "uniform"])
    sampling.add_argument("--mean-duration", type=float, help="Delta_n; defaults to horizon / n")
    sampling.add_argument("--n", help="nominal rate n, or a comma list for experiments")
    sampling.add_argument("--horizon", type=float)
    sampling.add_argument("--shape", type=float, help="gamma shape")
    sampling.add_argument("--half-width", type=float, help="uniform half width as a fraction of Delta_n")
    sampling.add_argument("--seed", type=int)

    model = _Parser(add_help=False)
    model.add_argument("--sigma", help="const:s | linear:a,b | cir:kappa,theta,xi,v0 | lognormal:kappa,theta,xi,s0")
    model.add_argument("--drift", help="const:c | sin:a,omega")
    model.add_argument("--x0", type=float)
    model.add_argument("--leverage", type=float)
    model.add_argument("--vol-jumps", help="intensity[,log_mean[,log_sd]]")
    model.add_argument("--no-truncate", dest="truncate", action="store_const", const=False)

    function = _Parser(add_help=False)
    function.add_argument("--f", help="test function, e.g. 'x^2', '|x|^3', 'x1^2*x2^2'")
    function.add_argument("--k", type=int)

    parser = _Parser(prog="rsclt", description="Random-sampling LLN/CLT toolkit")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("sample-times", parents=[common, sampling], help="emit a grid CSV (i,t,tau)")
    p.add_argument("--out")

    p = sub.add_parser("simulate", parents=[common, sampling, model], help="emit a path CSV (time,x,sigma2)")
    p.add_argument("--out")
    p.add_argument("--max-step", type=float, help="largest fine-grid step (default Delta_n / 4)")

    p = sub.add_parser("functional", parents=[common, function], help="V, V' or B on a path or tick file")
    p.add_argument("--kind", choices=["v", "vprime", "b"])
    p.add_argument("--p", type=float, help="power for B(p)")
    source = p.add_mutually_exclusive_group()
    source.add_argument("--path")
    source.add_argument("--ticks")

    for name, text in (("lln", "law of large numbers experiment"), ("clt", "central limit theorem experiment"),
                       ("coverage", "feasible interval coverage experiment")):
        p = sub.add_parser(name, parents=[common, sampling, model, function], help=text)
        p.add_argument("--reps", type=int)
        p.add_argument("--out", help="report.json path")
        p.add_argument("--stats", help="stats.csv path")
        p.add_argument("--threads", type=int)
        p.add_argument("--max-step-frac", type=float, help="fine-grid step as a fraction of Delta_n")
        if name == "lln":
            p.add_argument("--checkpoints", type=int, help="u.c.p. checkpoints (0 = terminal time only)")
        if name == "clt":
            p.add_argument("--bypass", action="store_const", const=True, help="i.i.d. N(0,1) statistics")
        if name == "coverage":
            p.add_argument("--confidence", type=float)
            p.add_argument("--estimated-rate", dest="known_rate", action="store_const", const=False)

    p = sub.add_parser("ci", parents=[common], help="feasible integrated-variance interval from ticks")
    p.add_argument("--ticks")
    p.add_argument("--confidence", type=float)
    p.add_argument("--mean-duration", type=float, help="known mean duration instead of the sample mean")

    p = sub.add_parser("check", parents=[common], help="sampling regularity diagnostics for ticks")
    p.add_argument("--ticks")
    p.add_argument("--n", help="nominal rate; defaults to the tick count")
    return parser


def resolve_settings(args):
    """Merge built-in defaults, profile, config file and explicit flags."""
    defaults = {key: default for key, (_, default) in SETTINGS.items()}
    profile = ProfileStore().load_profile(args.profile) if args.profile else {}
    config = read_config_file(args.config) if args.config else {}
    flags = {k: v for k, v in vars(args).items() if k in SETTINGS}
    merged = merge_settings(defaults, profile, config, flags)
    unknown = sorted(set(merged) - set(SETTINGS))
    if unknown:
        raise UsageError(f"unknown setting(s): {', '.join(unknown)}")
    out = {}
    for key, value in merged.items():
        convert = SETTINGS[key][0]
        try:
            out[key] = None if value is None else convert(value)
        except (TypeError, ValueError) as e:
            raise ParameterError(f"bad value for {key}: {value!r} ({e})")
    return out


def _single_n(s, fallback=1000):
    values = s["n"] or (fallback,)
    if len(values) != 1:
        raise ParameterError("this command takes a single --n")
    return values[0]


def build_scheme(s):
    if s["mean_duration"] is not None:
        return SamplingScheme(kind=s["scheme"], mean_duration=s["mean_duration"], shape=s["shape"],
                              half_width_frac=s["half_width"])
    return scheme_for_rate(s["scheme"], s["horizon"], _single_n(s), shape=s["shape"],
                           half_width_frac=s["half_width"])


def build_model(s):
    params = {}
    params.update(parse_vol_model(s["sigma"]))
    params.update(parse_drift(s["drift"]))
    if s["vol_jumps"]:
        params["vol_jumps"] = parse_vol_jumps(s["vol_jumps"])
    return ModelSpec(x0=s["x0"], leverage=s["leverage"], truncate=s["truncate"], **params)


def _fmt(value):
    return f"{value:.12g}"


def _emit(**pairs):
    for key, value in pairs.items():
        print(f"{key}={_fmt(value) if isinstance(value, float) else value}")


def cmd_sample_times(s):
    scheme = build_scheme(s)
    n = round(s["horizon"] / scheme.mean_duration)
    grid = gen_sampling_times(scheme, s["horizon"], derive_seed(s["seed"], n, 0, STREAM_GRID))
    write_grid_csv(grid, s["out"] or "grid.csv")
    _emit(count=grid.count)
    return EXIT_OK


def cmd_simulate(s):
    scheme = build_scheme(s)
    model = build_model(s)
    n = round(s["horizon"] / scheme.mean_duration)
    grid = gen_sampling_times(scheme, s["horizon"], derive_seed(s["seed"], n, 0, STREAM_GRID))
    max_step = s["max_step"] or default_max_step(grid)
    path = simulate_path(model, grid, max_step, derive_seed(s["seed"], n, 0, STREAM_PATH))
    write_path_csv(path, s["out"] or "path.csv")
    _emit(count=grid.count)
    return EXIT_OK


def _load_observations(s):
    if s["path"]:
        return read_path_csv(s["path"])
    if s["ticks"]:
        return ingest_ticks(s["ticks"])
    raise UsageError("one of --path or --ticks is required")


def cmd_functional(s):
    obs = _load_observations(s)
    kind = s["kind"]
    if kind == "b":
        result = b_variation(s["p"], obs)
    else:
        f = parse_function(s["f"], k=s["k"])
        result = v_functional(f, obs) if kind == "v" else v_prime_functional(f, obs)
    _emit(value=result.value, terms_used=result.terms_used)
    return EXIT_OK


def cmd_experiment(s, mode, threads):
    scheme = build_scheme({**s, "n": None, "mean_duration": 1.0})
    n_grid = s["n"] or DEFAULT_N_GRID
    config = ExperimentConfig(
        scheme=scheme,
        model=build_model(s),
        f=parse_function(s["f"], k=s["k"]),
        horizon=s["horizon"],
        n_grid=tuple(n_grid),
        replications=s["reps"] or DEFAULT_REPLICATIONS[mode],
        master_seed=s["seed"],
        mode=mode,
        max_step_frac=s["max_step_frac"],
        ucp_checkpoints=s["checkpoints"],
        bypass=s["bypass"],
        confidence=s["confidence"],
        known_rate=s["known_rate"],
    )
    report = run_experiment(config, threads=threads)
    out = s["out"] or "report.json"
    stats_path = s["stats"] or os.path.join(os.path.dirname(out), "stats.csv")
    report.write_json(out)
    report.write_stats_csv(stats_path)
    report.write_timings(os.path.splitext(out)[0] + ".timings.json")
    for stats in report.per_n:
        line = f"n={stats.n} rms={_fmt(stats.rms)} mean={_fmt(stats.mean)} variance={_fmt(stats.variance)}"
        if stats.ks:
            line += f" ks_D={_fmt(stats.ks['D'])} ks_p={_fmt(stats.ks['p_value'])}"
        if stats.coverage is not None:
            line += f" coverage={_fmt(stats.coverage)}"
        print(line)
    if report.rate_fit:
        _emit(slope=report.rate_fit["slope"], intercept=report.rate_fit["intercept"], r2=report.rate_fit["r2"])
    return EXIT_OK


def cmd_ci(s):
    if not s["ticks"]:
        raise UsageError("--ticks is required")
    ticks = ingest_ticks(s["ticks"])
    ci = feasible_iv_ci(ticks, s["confidence"], mean_duration=s["mean_duration"])
    _emit(iv_hat=ci.iv_hat, lo=ci.lo, hi=ci.hi, delta_hat=ci.delta_hat, m_hat=ci.m_hat)
    return EXIT_OK


def cmd_check(s):
    if not s["ticks"]:
        raise UsageError("--ticks is required")
    grid = ingest_ticks(s["ticks"]).to_grid()
    n = _single_n(s, fallback=max(grid.count, 1))
    diagnostics = check_regularity(grid, n)
    _emit(**{key: float(value) for key, value in diagnostics.items()})
    if grid.count >= 2:
        delta_hat, m_hat = estimate_duration_stats(grid)
        _emit(delta_hat=delta_hat, m_hat=m_hat)
    return EXIT_OK


def dispatch(argv):
    """Parse argv, run one subcommand and return its exit status."""
    load_dotenv()
    try:
        args = build_parser().parse_args(argv)
        if args.command not in COMMANDS:
            raise UsageError(f"expected a subcommand: {', '.join(COMMANDS)}")
        setup_logging("rsclt", log_to_file=not args.no_log_file, quiet=args.quiet)
        s = resolve_settings(args)
        logging.info(f"Running '{args.command}'")
        if args.command == "sample-times":
            return cmd_sample_times(s)
        if args.command == "simulate":
            return cmd_simulate(s)
        if args.command == "functional":
            return cmd_functional(s)
        if args.command in ("lln", "clt", "coverage"):
            threads = s["threads"] or default_threads()
            return cmd_experiment(s, args.command, threads)
        if args.command == "ci":
            return cmd_ci(s)
        return cmd_check(s)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_DATA
    except RSToolsError as e:
        logging.error(f"{type(e).__name__}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:
        logging.error(f"Internal error: {str(e)}")
        logging.error(traceback.format_exc())
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


def main():
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
