"""Command-line experiment runner.

Three subcommands share one INI-style configuration format::

    rlalm run-lasso --config lasso.ini --out results/lasso
    rlalm run-ct --config ct.ini --out results/ct --seed 3
    rlalm analyze-spectral --config spectral.ini --out results/spectral

Sections:

``[experiment]``
    ``seed`` (int), ``record_time`` (bool, adds wall-clock seconds to records).
``[scenario]``
    LASSO: ``rows``, ``cols``, ``sparsity``, ``noise_var``, ``lam``.
    CT: ``nx``, ``ny``, ``num_views``, ``i0``, ``beta``, ``delta``, ``pixel_size``.
``[reference]``
    ``iterations`` of the restarted FGM used for the saddle point or ``x*``.
``[solver NAME]`` (one or more)
    ``method``, ``alpha``, ``rho`` (``continuation`` or a number),
    ``subsets``, ``iterations``, ``d_psi_mode``.
``[spectral]``
    ``ratios``, ``alphas``, ``rhos`` (comma-separated), ``L_A``.

Without ``--config`` a built-in default grid is used.  All outputs go under
``--out``.  Failures print a single ``rlalm: error: <Type>: <message>`` line
on stderr and exit nonzero.
"""

import argparse
import configparser
import csv
import logging
import math
import os
import sys

import numpy as np

from . import __version__
from .analysis import (
    critical_rho,
    critical_rho_numeric,
    damping_frequency,
    estimate_saddle_point,
    gap_curves,
    bound_terms,
    lasso_instance,
    transition_matrix,
)
from .ct import build_ct_problem, make_ct_scenario, write_pgm, write_raw, DEFAULT_BETA, DEFAULT_DELTA
from .errors import ConfigurationError, DivergenceError, NumericalError, RegimeError, ShapeError
from .solvers import (
    ConvergenceRecord,
    SolverConfig,
    fgm_restart_run,
    initial_state,
    os_relaxed_lalm_run,
    os_simple_relaxed_lalm_run,
    os_sqs_run,
    run_steps,
)

__all__ = [
    "main",
    "load_config",
    "run_lasso_experiment",
    "run_ct_experiment",
    "analyze_spectral",
    "LASSO_METHODS",
    "CT_METHODS",
]

log = logging.getLogger(__name__)

# method name -> (step form, bound kind)
LASSO_METHODS = {
    "simple": ("simple", "simple"),
    "proposed": ("practical", "proposed"),
    "practical": ("practical", "proposed"),
    "literal": ("literal", "proposed"),
}
CT_METHODS = {
    "os-lalm": os_relaxed_lalm_run,
    "os-lalm-simple": os_simple_relaxed_lalm_run,
    "os-sqs": os_sqs_run,
}

DEFAULT_LASSO = """
[experiment]
seed = 0
[scenario]
rows = 100
cols = 400
sparsity = 20
noise_var = 0.1
lam = 1.0
[reference]
iterations = 20000
[solver simple-a1.999-rho0.1]
method = simple
alpha = 1.999
rho = 0.1
iterations = 500
[solver proposed-a1-rho0.1]
method = proposed
alpha = 1.0
rho = 0.1
iterations = 500
[solver proposed-a1.999-rho0.1]
method = proposed
alpha = 1.999
rho = 0.1
iterations = 500
"""

DEFAULT_CT = f"""
[experiment]
seed = 0
[scenario]
nx = 64
ny = 64
num_views = 90
i0 = 1e5
beta = {DEFAULT_BETA!r}
delta = {DEFAULT_DELTA!r}
pixel_size = 6.25
[reference]
iterations = 5000
[solver unrelaxed]
method = os-lalm
alpha = 1.0
rho = continuation
subsets = 4
iterations = 20
[solver relaxed]
method = os-lalm
alpha = 1.999
rho = continuation
subsets = 4
iterations = 20
"""

DEFAULT_SPECTRAL = """
[spectral]
ratios = 0.5, 0.1, 0.01, 0.001
alphas = 1.0, 1.5, 1.999
rhos = 0.01, 0.1, 1.0
L_A = 1.0
"""

BOUND_STEPS = (1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000, 5000)


# ---------------------------------------------------------------------------
# configuration


def load_config(path=None, default=""):
    """Parse an INI file (or the given default text) into a ConfigParser."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        if path is None:
            parser.read_string(default)
        else:
            with open(path) as fh:
                parser.read_file(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from exc
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {' '.join(str(exc).split())}") from exc
    return parser


def _get(parser, section, key, kind, fallback):
    if not parser.has_section(section) or not parser.has_option(section, key):
        return fallback
    raw = parser.get(section, key)
    try:
        if kind is bool:
            return parser.getboolean(section, key)
        return kind(raw)
    except ValueError as exc:
        raise ConfigurationError(f"[{section}] {key} = {raw!r} is not a valid {kind.__name__}") from exc


def _float_list(parser, section, key, fallback):
    if not parser.has_option(section, key):
        return list(fallback)
    raw = parser.get(section, key)
    try:
        return [float(s) for s in raw.split(",") if s.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"[{section}] {key} must be a comma-separated list of numbers") from exc


def _solver_sections(parser, methods):
    specs = []
    for section in parser.sections():
        if not section.startswith("solver"):
            continue
        name = section[len("solver") :].strip()
        if not name:
            raise ConfigurationError(f"solver section [{section}] needs a name")
        method = parser.get(section, "method", fallback="").strip()
        if method not in methods:
            raise ConfigurationError(
                f"unknown solver method {method!r} in [{section}]; valid names: {', '.join(sorted(methods))}"
            )
        rho_raw = parser.get(section, "rho", fallback="continuation").strip()
        if rho_raw == "continuation":
            rho = None
        else:
            try:
                rho = float(rho_raw)
            except ValueError as exc:
                raise ConfigurationError(f"[{section}] rho must be a number or 'continuation'") from exc
        specs.append(
            dict(
                name=name,
                method=method,
                alpha=_get(parser, section, "alpha", float, 1.999),
                rho=rho,
                subsets=_get(parser, section, "subsets", int, 1),
                iterations=_get(parser, section, "iterations", int, 20),
                d_psi_mode=parser.get(section, "d_psi_mode", fallback="huber").strip(),
            )
        )
    if not specs:
        raise ConfigurationError("config lists no [solver NAME] sections")
    return specs


def _safe_name(name):
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)


def _seed(parser, override):
    return override if override is not None else _get(parser, "experiment", "seed", int, 0)


# ---------------------------------------------------------------------------
# experiments


def run_lasso_experiment(parser, out_dir, seed=None):
    """Run the configured LASSO solver grid; returns ``{name: ConvergenceRecord}``.

    Writes ``<name>.csv`` (one row per iteration with both gaps) and
    ``<name>_bounds.csv`` (``K, gap, bound, ratio``) per solver.
    """
    specs = _solver_sections(parser, LASSO_METHODS)
    inst = lasso_instance(
        m=_get(parser, "scenario", "rows", int, 100),
        n=_get(parser, "scenario", "cols", int, 400),
        sparsity=_get(parser, "scenario", "sparsity", int, 20),
        noise_var=_get(parser, "scenario", "noise_var", float, 0.1),
        lam=_get(parser, "scenario", "lam", float, 1.0),
        seed=_seed(parser, seed),
    )
    problem = inst.problem
    saddle = estimate_saddle_point(problem, _get(parser, "reference", "iterations", int, 20000), x0=inst.x0)
    os.makedirs(out_dir, exist_ok=True)
    records = {}
    for spec in specs:
        form, kind = LASSO_METHODS[spec["method"]]
        rho = spec["rho"]
        if rho is None:
            raise ConfigurationError(f"[solver {spec['name']}] LASSO runs need a fixed numeric rho")
        SolverConfig(alpha=spec["alpha"], rho=rho, iterations=spec["iterations"])  # validates
        start = initial_state(problem, inst.x0, form, u0=inst.u0, mu0=inst.mu0)
        states = run_steps(problem, form, start, spec["alpha"], rho, spec["iterations"])
        ergodic, nonergodic = gap_curves(problem, states, saddle)
        rec = ConvergenceRecord(spec["name"], 1)
        rec.append(0, rho=rho, cost=problem.cost(states[0].x))
        for k in range(1, len(states)):
            rec.append(
                k,
                rho=rho,
                cost=problem.cost(states[k].x),
                ergodic_gap=ergodic[k - 1],
                nonergodic_gap=nonergodic[k - 1],
            )
        name = _safe_name(spec["name"])
        rec.to_csv(os.path.join(out_dir, f"{name}.csv"))
        a_t, b_t, c_t = bound_terms(
            inst.x0, inst.u0, inst.mu0, saddle, problem.d_psi, problem.d_a, rho, spec["alpha"], problem
        )
        const = a_t + (b_t if kind == "simple" else b_t / spec["alpha"]) + c_t
        with open(os.path.join(out_dir, f"{name}_bounds.csv"), "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("K", "gap", "bound", "ratio"))
            for K in BOUND_STEPS:
                if K > len(ergodic):
                    break
                bound = const / K
                writer.writerow((K, repr(float(ergodic[K - 1])), repr(bound), repr(float(ergodic[K - 1]) / bound)))
        records[spec["name"]] = rec
    return records


def run_ct_experiment(parser, out_dir, seed=None):
    """Run the configured CT solver grid; returns ``{name: ConvergenceRecord}``.

    Writes the reference, initial and per-solver final images (PGM windowed
    800..1200 HU plus raw float64), difference images windowed -50..50 HU,
    the sinogram and one CSV record per solver.
    """
    specs = _solver_sections(parser, CT_METHODS)
    record_time = _get(parser, "experiment", "record_time", bool, False)
    scenario = make_ct_scenario(
        nx=_get(parser, "scenario", "nx", int, 64),
        ny=_get(parser, "scenario", "ny", int, 64),
        num_views=_get(parser, "scenario", "num_views", int, 90),
        i0=_get(parser, "scenario", "i0", float, 1e5),
        seed=_seed(parser, seed),
        beta=_get(parser, "scenario", "beta", float, DEFAULT_BETA),
        delta=_get(parser, "scenario", "delta", float, DEFAULT_DELTA),
        pixel_size=_get(parser, "scenario", "pixel_size", float, 6.25),
    )
    configs = {
        spec["name"]: SolverConfig(
            alpha=spec["alpha"],
            rho=spec["rho"],
            subsets=spec["subsets"],
            iterations=spec["iterations"],
            d_psi_mode=spec["d_psi_mode"],
            record_time=record_time,
        )
        for spec in specs
    }
    problem = build_ct_problem(scenario)
    x0 = scenario.initial_image
    ref = fgm_restart_run(problem, _get(parser, "reference", "iterations", int, 5000), x0=x0)
    shape = scenario.image_shape
    g = scenario.geometry
    os.makedirs(out_dir, exist_ok=True)
    write_raw(os.path.join(out_dir, "sinogram.raw"), scenario.sinogram.reshape(g.num_views, g.num_bins))
    for label, img in (("reference", ref), ("initial", x0), ("truth", scenario.x_true)):
        write_pgm(os.path.join(out_dir, f"{label}.pgm"), img.reshape(shape))
        write_raw(os.path.join(out_dir, f"{label}.raw"), img.reshape(shape))
    records = {}
    for spec in specs:
        run = CT_METHODS[spec["method"]]
        name = _safe_name(spec["name"])
        try:
            x, rec = run(problem, scenario, configs[spec["name"]], x0=x0, reference=ref)
        except DivergenceError as exc:
            if exc.record is not None:
                exc.record.to_csv(os.path.join(out_dir, f"{name}.csv"))
            raise
        rec.label = spec["name"]
        rec.to_csv(os.path.join(out_dir, f"{name}.csv"))
        write_pgm(os.path.join(out_dir, f"{name}.pgm"), x.reshape(shape))
        write_raw(os.path.join(out_dir, f"{name}.raw"), x.reshape(shape))
        write_pgm(os.path.join(out_dir, f"{name}_diff.pgm"), (x - ref).reshape(shape), window=(-50.0, 50.0))
        records[spec["name"]] = rec
    return records


def analyze_spectral(parser, out_dir):
    """Tabulate the modal recursion for the configured grid.

    ``spectral.csv`` has one row per ``(ratio, alpha)`` with the closed-form
    and numeric critical penalties, the damping frequency and its small-ratio
    approximation ``alpha * sqrt(ratio)`` (empty when the mode does not
    oscillate).  ``modes.csv`` lists ``|lambda(T)|`` for every ``rho``.
    """
    if not parser.has_section("spectral"):
        raise ConfigurationError("config needs a [spectral] section")
    ratios = _float_list(parser, "spectral", "ratios", ())
    if not ratios:
        raise ConfigurationError("[spectral] ratios must list at least one value")
    alphas = _float_list(parser, "spectral", "alphas", (1.0, 1.5, 1.999))
    rhos = _float_list(parser, "spectral", "rhos", (0.1,))
    L_A = _get(parser, "spectral", "L_A", float, 1.0)
    os.makedirs(out_dir, exist_ok=True)
    rows, modes = [], []
    for ratio in ratios:
        lam = ratio * L_A
        rc = critical_rho(lam, L_A)
        for alpha in alphas:
            try:
                rc_num = repr(critical_rho_numeric(lam, L_A, alpha))
            except RegimeError:
                rc_num = ""
            try:
                omega = repr(damping_frequency(lam, L_A, alpha))
            except RegimeError:
                omega = ""
            rows.append((repr(ratio), repr(alpha), repr(rc), rc_num, omega, repr(alpha * math.sqrt(ratio))))
            for rho in rhos:
                ev = np.sort(np.abs(transition_matrix(lam, L_A, rho, alpha).eigenvalues()))[::-1]
                modes.append((repr(ratio), repr(alpha), repr(rho), repr(float(ev[0])), repr(float(ev[1]))))
    with open(os.path.join(out_dir, "spectral.csv"), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("ratio", "alpha", "critical_rho", "critical_rho_numeric", "damping_frequency", "alpha_sqrt_ratio"))
        writer.writerows(rows)
    with open(os.path.join(out_dir, "modes.csv"), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("ratio", "alpha", "rho", "abs_lambda1", "abs_lambda2"))
        writer.writerows(modes)
    return rows, modes


# ---------------------------------------------------------------------------
# entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigurationError(message)


def _build_parser():
    parser = _Parser(prog="rlalm", description="Relaxed linearized AL experiments.")
    parser.add_argument("--version", action="version", version=f"rlalm {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name, help_text in (
        ("run-lasso", "LASSO gap curves and bound tables"),
        ("run-ct", "CT reconstruction convergence curves and images"),
        ("analyze-spectral", "critical penalty, damping and modal contraction tables"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", metavar="PATH", help="INI experiment file (built-in defaults if omitted)")
        p.add_argument("--out", metavar="DIR", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="override [experiment] seed")
    return parser


def main(argv=None):
    """Console entry point; returns the process exit code."""
    try:
        args = _build_parser().parse_args(argv)
        if args.command is None:
            raise ConfigurationError("missing subcommand (run-lasso, run-ct or analyze-spectral)")
        if args.command == "run-lasso":
            run_lasso_experiment(load_config(args.config, DEFAULT_LASSO), args.out, args.seed)
        elif args.command == "run-ct":
            run_ct_experiment(load_config(args.config, DEFAULT_CT), args.out, args.seed)
        else:
            analyze_spectral(load_config(args.config, DEFAULT_SPECTRAL), args.out)
    except (ConfigurationError, ShapeError) as exc:
        _report(exc)
        return 2
    except (NumericalError, DivergenceError) as exc:
        _report(exc)
        return 3
    except OSError as exc:
        _report(exc)
        return 4
    return 0


def _report(exc):
    message = " ".join(str(exc).split())
    print(f"rlalm: error: {type(exc).__name__}: {message}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
