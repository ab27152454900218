"""Command-line interface.

Commands: ``simulate``, ``fit``, ``select``, ``verify-bound``, ``mc-study``.
Every command is deterministic given its flags and ``--seed``; repeated runs
write byte-identical data files.  Exit codes: 0 success, 2 invalid input or
configuration, 3 I/O failure, 4 numerical or fit failure.
"""

from __future__ import annotations

import csv
import functools
import io as _io
import logging
import sys
import time

import click
import numpy as np

from . import __version__
from ._validation import GENERATOR_ID, generator
from .errors import (
    FitError,
    ModelValidationError,
    NoStationaryDistributionError,
    NumericalError,
)
from .estimation import multistart_fit
from .io import (
    RunMetadata,
    atomic_write_text,
    em_config_from_dict,
    fmt,
    load_model_config,
    load_study_config,
    penalty_config_from_dict,
    read_trajectory_csv,
    save_model_config,
    write_metadata,
    write_trajectory_csv,
)
from .mixture import PriorConfig, verify_bound
from .model import ModelSpec, ParameterBounds, RegimeParams, simulate, validate_model
from .selection import mc_consistency_study, select_order

EXIT_INVALID = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4

logger = logging.getLogger(__name__)


def _handle_errors(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ModelValidationError as exc:
            click.echo(f"invalid model: {exc}", err=True)
            for violation in exc.violations:
                click.echo(f"  {violation.name}: {violation.message}", err=True)
            sys.exit(EXIT_INVALID)
        except (ValueError, NoStationaryDistributionError) as exc:
            click.echo(f"invalid input: {exc}", err=True)
            sys.exit(EXIT_INVALID)
        except OSError as exc:
            click.echo(f"i/o failure: {exc}", err=True)
            sys.exit(EXIT_IO)
        except (FitError, NumericalError) as exc:
            click.echo(f"numerical failure: {exc}", err=True)
            sys.exit(EXIT_NUMERICAL)

    return wrapper


def _echo(quiet: bool, message: str) -> None:
    if not quiet:
        click.echo(message)


@click.group()
@click.version_option(version=__version__, prog_name="regime-select")
def main() -> None:
    """Switching AR simulation, fitting, and state-count selection."""
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")


@main.command("simulate")
@click.option("--config", "config_path", required=True, type=click.Path(), help="Model config (YAML).")
@click.option("--n", required=True, type=int, help="Number of observations after t=0.")
@click.option("--y0", default=0.0, show_default=True, type=float, help="Conditioning value at t=0.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path(), help="Trajectory CSV path.")
@click.option("--quiet", is_flag=True, default=False)
@_handle_errors
def cmd_simulate(config_path, n, y0, seed, out_path, quiet):
    """Simulate a trajectory (with its hidden path) from a model config."""
    start = time.perf_counter()
    spec, bounds = load_model_config(config_path)
    report = validate_model(spec, bounds)
    if report:
        raise ModelValidationError("model config failed validation", violations=report)
    traj = simulate(spec, n, y0=y0, seed=seed)
    write_trajectory_csv(traj, out_path)
    write_metadata(
        out_path,
        RunMetadata(
            command="simulate",
            config={"model": config_path, "n": n, "y0": y0},
            seed=seed,
            generator=GENERATOR_ID,
            version=__version__,
            duration_seconds=time.perf_counter() - start,
        ),
    )
    _echo(quiet, f"wrote {traj.n + 1} rows to {out_path}")


def _em_options(func):
    options = [
        click.option("--tol", default=1e-7, show_default=True, type=float),
        click.option("--max-iter", default=500, show_default=True, type=int),
        click.option("--restarts", default=10, show_default=True, type=int),
        click.option("--variance-floor", default=1e-4, show_default=True, type=float),
        click.option("--transition-floor", default=1e-6, show_default=True, type=float),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _build_em_config(tol, max_iter, restarts, variance_floor, transition_floor):
    return em_config_from_dict(
        {
            "tolerance": tol,
            "max_iterations": max_iter,
            "restarts": restarts,
            "variance_floor": variance_floor,
            "transition_floor": transition_floor,
        }
    )


@main.command("fit")
@click.option("--data", "data_path", required=True, type=click.Path(), help="Trajectory CSV.")
@click.option("--states", "m", required=True, type=int, help="Number of hidden states.")
@_em_options
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path(), help="Fitted model YAML.")
@click.option("--quiet", is_flag=True, default=False)
@_handle_errors
def cmd_fit(data_path, m, tol, max_iter, restarts, variance_floor, transition_floor, seed, out_path, quiet):
    """Fit an m-state model by EM with multistart."""
    start = time.perf_counter()
    if m < 1:
        raise ValueError("--states must be at least 1")
    traj = read_trajectory_csv(data_path)
    config = _build_em_config(tol, max_iter, restarts, variance_floor, transition_floor)
    result = multistart_fit(traj, m, config, seed=seed)
    save_model_config(result.spec, out_path, config.bounds)
    write_metadata(
        out_path,
        RunMetadata(
            command="fit",
            config={"data": data_path, "states": m, "restarts": restarts},
            seed=seed,
            generator=GENERATOR_ID,
            version=__version__,
            duration_seconds=time.perf_counter() - start,
        ),
    )
    _echo(quiet, f"loglik: {fmt(result.loglik)}")
    _echo(quiet, f"iterations: {result.n_iter}")
    _echo(quiet, f"converged: {result.converged}")
    _echo(quiet, f"restart: {result.restart_index}")
    _echo(quiet, f"wrote model to {out_path}")


@main.command("select")
@click.option("--data", "data_path", required=True, type=click.Path(), help="Trajectory CSV.")
@click.option("--m-max", default="auto", show_default=True,
              help="Largest candidate order, or 'auto'.")
@click.option("--rho", default=3.0, show_default=True, type=float)
@click.option("--phi", default="log", show_default=True,
              type=click.Choice(["sqrt", "log", "constant"]))
@click.option("--phi-constant", default=1.0, show_default=True, type=float)
@click.option("--tau2", default=1.0, show_default=True, type=float)
@_em_options
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path(), help="Criterion table CSV.")
@click.option("--model-out", "model_out", default=None, type=click.Path(),
              help="Optional YAML path for the selected model.")
@click.option("--quiet", is_flag=True, default=False)
@_handle_errors
def cmd_select(data_path, m_max, rho, phi, phi_constant, tau2, tol, max_iter, restarts,
               variance_floor, transition_floor, seed, out_path, model_out, quiet):
    """Select the number of states by penalized maximum likelihood."""
    start = time.perf_counter()
    if rho <= 2:
        raise ValueError("rho must exceed 2")
    traj = read_trajectory_csv(data_path)
    em_config = _build_em_config(tol, max_iter, restarts, variance_floor, transition_floor)
    pen_config = penalty_config_from_dict(
        {"rho": rho, "phi": phi, "phi_constant": phi_constant, "tau2": tau2}
    )
    m_max_arg: int | str = m_max if m_max == "auto" else int(m_max)
    result = select_order(traj, m_max=m_max_arg, em_config=em_config, pen_config=pen_config, seed=seed)

    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["m", "loglik", "penalty", "criterion"])
    for row in result.rows:
        writer.writerow(
            [
                row.m,
                fmt(row.loglik) if row.loglik is not None else "",
                fmt(row.penalty) if row.penalty is not None else "",
                fmt(row.criterion) if row.criterion is not None else "",
            ]
        )
    atomic_write_text(out_path, buf.getvalue())
    if model_out is not None:
        best = result.row(result.m_hat)
        save_model_config(best.fit.spec, model_out, em_config.bounds)
    write_metadata(
        out_path,
        RunMetadata(
            command="select",
            config={"data": data_path, "m_max": str(m_max), "rho": rho, "phi": phi, "tau2": tau2},
            seed=seed,
            generator=GENERATOR_ID,
            version=__version__,
            duration_seconds=time.perf_counter() - start,
        ),
    )
    click.echo(f"m_hat = {result.m_hat}")


@main.command("verify-bound")
@click.option("--trials", default=200, show_default=True, type=int)
@click.option("--n-min", default=4, show_default=True, type=int)
@click.option("--n-max", default=8, show_default=True, type=int)
@click.option("--m-min", default=1, show_default=True, type=int)
@click.option("--m-max", default=2, show_default=True, type=int)
@click.option("--tau2", default=1.0, show_default=True, type=float)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path(), help="Slack table CSV.")
@click.option("--quiet", is_flag=True, default=False)
@_handle_errors
def cmd_verify_bound(trials, n_min, n_max, m_min, m_max, tau2, seed, out_path, quiet):
    """Check the likelihood-vs-mixture envelope on random instances."""
    start = time.perf_counter()
    if trials < 0:
        raise ValueError("--trials must be non-negative")
    if not (1 <= m_min <= m_max):
        raise ValueError("need 1 <= m-min <= m-max")
    if not (4 <= n_min <= n_max):
        raise ValueError("need 4 <= n-min <= n-max")
    if m_max**n_max > 100_000:
        raise ValueError("instance sizes exceed the enumeration guard")
    prior = PriorConfig(tau2=tau2)

    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["trial", "n", "m", "lhs", "leading", "c_term", "d_term", "e_term", "ratio_term",
         "rhs_total", "slack"]
    )
    min_slack = None
    for trial in range(trials):
        spec, traj = _random_bound_instance(seed, trial, n_min, n_max, m_min, m_max)
        check = verify_bound(spec, traj, prior)
        terms = check.terms
        writer.writerow(
            [trial, traj.n, spec.m, fmt(check.lhs), fmt(terms.leading), fmt(terms.c_term),
             fmt(terms.d_term), fmt(terms.e_term), fmt(terms.ratio_term), fmt(terms.total),
             fmt(check.slack)]
        )
        if min_slack is None or check.slack < min_slack:
            min_slack = check.slack
    atomic_write_text(out_path, buf.getvalue())
    write_metadata(
        out_path,
        RunMetadata(
            command="verify-bound",
            config={"trials": trials, "n": [n_min, n_max], "m": [m_min, m_max], "tau2": tau2},
            seed=seed,
            generator=GENERATOR_ID,
            version=__version__,
            duration_seconds=time.perf_counter() - start,
        ),
    )
    if min_slack is None:
        _echo(quiet, "no trials requested; wrote an empty table")
    else:
        _echo(quiet, f"min slack = {fmt(min_slack)} over {trials} trials")


def _random_bound_instance(seed, trial, n_min, n_max, m_min, m_max):
    """Random admissible model and short simulated trajectory."""
    rng = generator(seed, trial)
    m = int(rng.integers(m_min, m_max + 1))
    n = int(rng.integers(n_min, n_max + 1))
    signs = rng.choice([-1.0, 1.0], size=m)
    slopes = signs * rng.uniform(0.05, 0.9, size=m)
    regimes = [
        RegimeParams(
            b=float(rng.uniform(-2.0, 2.0)),
            alpha=float(slopes[i]),
            sigma2=float(rng.uniform(0.25, 4.0)),
        )
        for i in range(m)
    ]
    A = rng.dirichlet(np.full(m, 5.0), size=m)
    spec = ModelSpec(regimes, A)
    traj = simulate(spec, n, y0=float(rng.normal()), seed=int(rng.integers(0, 2**31)))
    return spec, traj


@main.command("mc-study")
@click.option("--config", "config_path", required=True, type=click.Path(), help="Study config YAML.")
@click.option("--out-dir", "out_dir", required=True, type=click.Path(), help="Output directory.")
@click.option("--quiet", is_flag=True, default=False)
@_handle_errors
def cmd_mc_study(config_path, out_dir, quiet):
    """Run the simulate-and-select consistency study from a config file."""
    import pathlib

    start = time.perf_counter()
    study = load_study_config(config_path)
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = mc_consistency_study(
        study.spec,
        study.n_grid,
        study.replications,
        em_config=study.em,
        pen_config=study.pen,
        base_seed=study.base_seed,
        m_max=study.m_max,
        y0=study.y0,
    )

    detail = _io.StringIO()
    writer = csv.writer(detail, lineterminator="\n")
    header = ["n", "replication", "m_hat"]
    header += [f"loglik_{m}" for m in range(1, study.m_max + 1)]
    header += [f"pen_{m}" for m in range(1, study.m_max + 1)]
    writer.writerow(header)
    for row in result.rows:
        record = [row.n, row.replication, "" if row.m_hat is None else row.m_hat]
        record += [fmt(v) if v is not None else "" for v in row.logliks]
        record += [fmt(v) if v is not None else "" for v in row.penalties]
        writer.writerow(record)
    detail_path = out / "detail.csv"
    atomic_write_text(detail_path, detail.getvalue())

    summary = _io.StringIO()
    writer = csv.writer(summary, lineterminator="\n")
    writer.writerow(["n", "P_under", "P_exact", "P_over", "P_fail"])
    for s in result.summaries:
        writer.writerow([s.n, fmt(s.p_under), fmt(s.p_exact), fmt(s.p_over), fmt(s.p_fail)])
    summary_path = out / "summary.csv"
    atomic_write_text(summary_path, summary.getvalue())

    meta = RunMetadata(
        command="mc-study",
        config={"study": str(config_path), "n_grid": study.n_grid,
                "replications": study.replications, "m_max": study.m_max},
        seed=study.base_seed,
        generator=GENERATOR_ID,
        version=__version__,
        duration_seconds=time.perf_counter() - start,
    )
    write_metadata(detail_path, meta)
    write_metadata(summary_path, meta)

    failures = sum(1 for row in result.rows if row.error is not None)
    if failures == len(result.rows):
        raise FitError("every replication failed")
    _echo(quiet, f"wrote {detail_path} and {summary_path} ({failures} failed replications)")


if __name__ == "__main__":
    main()
