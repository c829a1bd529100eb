"""Command-line front end: ``exk <command> --config <path> [--key value ...]``.

Exit codes: 0 success, 1 numerical or convergence failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .config import COMMANDS, InitSpec, RunConfig, config_hash, parse_config
from .errors import ConfigError, ConvergenceError, NumericalError
from .exchange import measure_contraction, steady_state
from .hydro import TRANSIENT_EXCHANGES
from .kinetic import PopulationState, simulate
from .measures import Ensemble, Exponential, Uniform, make_rng, sample_from, write_ensemble_csv
from .output import write_manifest, write_plot_data, write_table

EXIT_OK, EXIT_NUMERICAL, EXIT_CONFIG = 0, 1, 2


class _Run:
    """Per-run context: resolved config, output directory, written files."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.output_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files: list[Path] = []
        self._u1_bar = None

    def add(self, *paths):
        for p in paths:
            self.files.extend(p if isinstance(p, list) else [p])

    def path(self, name) -> Path:
        return self.out / name

    def u1_bar(self) -> Ensemble:
        """Mean-one exchange steady state, computed once per run."""
        if self._u1_bar is None:
            c = self.cfg
            self._u1_bar = steady_state(
                1.0,
                c.B,
                c.numerics.n_particles,
                make_rng(c.seed, ex.REFERENCE_STREAM),
                tol=c.numerics.tol,
                max_iter=c.numerics.max_iter,
                oversample=c.numerics.oversample,
            )
        return self._u1_bar

    def initial(self, spec: InitSpec, run_id: int) -> Ensemble:
        n = self.cfg.numerics.n_particles
        if spec.law is not None:
            return sample_from(spec.law, n, make_rng(self.cfg.seed, ex.INIT_STREAM, run_id))
        return self.u1_bar().scaled(spec.steady_Z)


# --- commands ------------------------------------------------------------


def _steady(run: _Run):
    c = run.cfg
    trace: list = []
    try:
        u = steady_state(
            c.Z,
            c.B,
            c.numerics.n_particles,
            make_rng(c.seed, ex.REFERENCE_STREAM),
            tol=c.numerics.tol,
            max_iter=c.numerics.max_iter,
            trace=trace,
            oversample=c.numerics.oversample,
        )
    finally:
        run.add(write_table(run.path("diagnostics.csv"), ["iter", "w2_gap", "mean", "m2"], trace))
    run.add(write_ensemble_csv(u, run.path("ensemble.csv")))
    run.add(write_plot_data(run.path("plot_w2_gap.csv"), [(it, gap) for it, gap, _, _ in trace]))
    x = u.samples
    run.add(
        write_table(
            run.path("summary.csv"),
            ["Z", "mean", "m2", "iterations", "final_gap"],
            [(c.Z, float(np.mean(x)), float(np.mean(x * x)), len(trace), trace[-1][1])],
        )
    )
    return f"steady state: {len(trace)} iterations, final gap {trace[-1][1]:.3e}"


def _contraction(run: _Run):
    c = run.cfg
    n = c.numerics.n_particles
    law1 = c.init.law if c.init else Uniform(0.0, 2.0)
    law2 = c.init2.law if c.init2 else Exponential(1.0)
    if law1 is None or law2 is None:
        raise ConfigError("exchange-contraction needs parametric init laws", key="init")
    rows = []
    for k in range(c.pairs):
        u1 = sample_from(law1, n, make_rng(c.seed, ex.INIT_STREAM, 2 * k))
        u2 = sample_from(law2, n, make_rng(c.seed, ex.INIT_STREAM, 2 * k + 1))
        rep = measure_contraction(u1, u2, c.B, c.p, make_rng(c.seed, ex.RUN_STREAM, k))
        row = rep.as_row()
        rows.append([k] + list(row.values()))
        header = ["pair"] + list(row.keys())
    run.add(write_table(run.path("contraction.csv"), header, rows))
    factors = [r[2] for r in rows]
    theo = rows[0][3]
    run.add(
        write_table(
            run.path("summary.csv"),
            ["p", "pairs", "max_factor", "mean_factor", "factor_theoretical"],
            [(c.p, c.pairs, max(factors), float(np.mean(factors)), theo)],
        )
    )
    return f"W{c.p} contraction: max factor {max(factors):.4f} over {c.pairs} pairs"


def _pure_exchange(run: _Run):
    c = run.cfg
    nm = c.numerics
    if c.init is not None and c.init.law is None:
        raise ConfigError("pure-exchange needs a parametric init law", key="init")
    res = ex.relaxation_experiment(
        c.B,
        c.Z,
        nm.n_particles,
        nm.t_end,
        nm.dt,
        nm.replicates,
        c.seed,
        cadence=nm.cadence,
        initial=c.init.law if c.init else None,
        threads=c.effective_threads,
        tol=nm.tol,
        max_iter=nm.max_iter,
    )
    for k, tr in enumerate(res.trajectories):
        tr.metadata.update(seed=c.seed, replicate=k, Z=c.Z)
        run.add(tr.write_csv(run.path(f"trajectory_{k}.csv")))
    run.add(write_plot_data(run.path("plot_w2sq.csv"), res.series))
    f = res.fit
    run.add(
        write_table(
            run.path("summary.csv"),
            ["fitted_rate", "r_squared", "t_start", "t_stop", "floor", "c", "two_c", "flagged", "replicates"],
            [(f.fitted_rate, f.r_squared, *f.window, f.floor, f.predictions["c"], f.predictions["2c"], f.flagged, nm.replicates)],
        )
    )
    return f"relaxation: fitted rate {f.fitted_rate:.4f} (c = {f.predictions['c']:.4f}), r^2 {f.r_squared:.4f}"


def _kinetic(run: _Run):
    c = run.cfg
    nm = c.numerics
    init = PopulationState(0.0, c.N0, run.initial(c.init, 1))
    last = {}

    def keep(state):
        last["state"] = state

    tr = simulate(c.params, init, nm.t_end, nm.dt, nm.cadence, make_rng(c.seed, ex.RUN_STREAM, 1), on_tick=keep, scheme=c.scheme)
    tr.metadata.update(seed=c.seed)
    run.add(tr.write_csv(run.path("trajectory.csv")))
    run.add(write_ensemble_csv(last["state"].tilde_n, run.path("ensemble_final.csv")))
    t = tr.column("t")
    run.add(write_plot_data(run.path("plot_N.csv"), zip(t, tr.column("N"))))
    run.add(write_plot_data(run.path("plot_Z.csv"), zip(t, tr.column("Z"))))
    s = last["state"]
    x = s.tilde_n.samples
    run.add(write_table(run.path("summary.csv"), ["t", "N", "Z", "m2"], [(s.t, s.N, float(np.mean(x)), float(np.mean(x * x)))]))
    return f"kinetic: N({s.t:g}) = {s.N:.6g}, Z = {float(np.mean(x)):.6g}"


def _sweep(run: _Run, gammas):
    c = run.cfg
    nm = c.numerics
    init = PopulationState(0.0, c.N0, run.initial(c.init, 1))
    points = ex.gamma_sweep(
        c.params,
        gammas,
        init,
        nm.t_end,
        nm.dt,
        nm.dt_macro,
        nm.cadence,
        nm.replicates,
        c.seed,
        run.u1_bar(),
        threads=c.effective_threads,
    )
    run.add(
        write_table(
            run.path("summary.csv"), ["gamma", "sup_error", "replicates"], [(p.gamma, p.sup_error, len(p.reports)) for p in points]
        )
    )
    run.add(
        write_table(
            run.path("components.csv"),
            ["gamma", "sup_w2", "sup_n", "sup_error_se", "transient_end"],
            [(p.gamma, p.sup_w2, p.sup_n, p.sup_error_se, TRANSIENT_EXCHANGES / p.gamma) for p in points],
        )
    )
    rows = []
    for p in points:
        for k, rep in enumerate(p.reports):
            rep.trajectory.metadata.update(seed=c.seed, replicate=k)
            run.add(rep.trajectory.write_csv(run.path(f"trajectory_gamma_{p.gamma:g}_rep_{k}.csv")))
        # replicate-averaged per-tick terms
        arr = np.mean([np.array(r.rows) for r in p.reports], axis=0)
        rows.extend((p.gamma, *map(float, row)) for row in arr)
        run.add(write_plot_data(run.path(f"plot_total_gamma_{p.gamma:g}.csv"), arr[:, [0, 3]]))
    run.add(write_table(run.path("hydro.csv"), ["gamma", "t", "w2_term", "n_term", "total"], rows))
    return "sup_error by gamma: " + ", ".join(f"{p.gamma:g}: {p.sup_error:.4g}" for p in points)


def _hydro(run: _Run):
    return _sweep(run, [run.cfg.params.gamma])


def _gamma_sweep(run: _Run):
    return _sweep(run, list(run.cfg.gammas))


def _longtime(run: _Run):
    c = run.cfg
    nm = c.numerics
    s1 = PopulationState(0.0, c.N0, run.initial(c.init, 1))
    s2 = PopulationState(0.0, c.N0_2, run.initial(c.init2, 2))
    rep = ex.longtime_experiment(c.params, s1, s2, nm.t_end, nm.dt, c.seed, coupling=c.coupling, cadence=nm.cadence)
    for k, tr in enumerate(rep.trajectories, start=1):
        run.add(tr.write_csv(run.path(f"trajectory_{k}.csv")))
    run.add(write_plot_data(run.path("plot_w1.csv"), rep.w1_series))
    run.add(
        write_table(
            run.path("summary.csv"),
            [
                "kappa_predicted", "kappa_statement", "fitted_rate", "r_squared", "n_limit_1", "n_limit_2",
                "n_bar_gap", "n_bar_predicted", "floor", "coupling",
            ],  # fmt: skip
            [
                (
                    rep.kappa_predicted, rep.kappa_statement, rep.fitted_rate, rep.r_squared, *rep.n_limit,
                    rep.n_bar_gap, rep.n_bar_predicted, rep.floor, c.coupling,
                )  # fmt: skip
            ],
        )
    )
    return f"longtime: fitted rate {rep.fitted_rate:.4f} (kappa {rep.kappa_predicted:.4f}), N -> {rep.n_limit}"


HANDLERS = {
    "steady": _steady,
    "exchange-contraction": _contraction,
    "pure-exchange": _pure_exchange,
    "kinetic": _kinetic,
    "hydro": _hydro,
    "longtime": _longtime,
    "gamma-sweep": _gamma_sweep,
}


def run(cfg: RunConfig, echo=print) -> int:
    """Dispatch ``cfg``, write outputs and the manifest, return the exit code."""
    try:
        r = _Run(cfg)
        message = None
        status = EXIT_OK
        try:
            message = HANDLERS[cfg.command](r)
        except (ConvergenceError, NumericalError, FloatingPointError) as exc:
            status, message = EXIT_NUMERICAL, f"numerical failure: {exc}"
        write_manifest(r.out, r.files, cfg.document, config_hash(cfg.document), cfg.seed, {"exit_code": status})
    except ConfigError as exc:
        echo(f"config error [{exc.key}]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        echo(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    echo(message, file=sys.stderr if status else sys.stdout)
    return status


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="exk", description="Protein-exchange population model simulations.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON run configuration")
    args, rest = parser.parse_known_args(argv)
    try:
        cfg = parse_config(args.config, rest, command=args.command)
    except ConfigError as exc:
        print(f"config error [{exc.key}]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
