"""Verification campaigns: relaxation rate, gamma sweep, two-solution decay."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError
from .exchange import FractionLaw, relaxation_constant, steady_state
from .hydro import HydroReport, hydro_compare
from .kinetic import KineticParams, PopulationState, Trajectory, simulate_pure_exchange, step
from .measures import Ensemble, TraitDistribution, Uniform, make_rng, noise_floor, sample_from, wasserstein

__all__ = [
    "RateFit",
    "fit_decay_rate",
    "relaxation_experiment",
    "RelaxationResult",
    "LongTimeReport",
    "longtime_experiment",
    "SweepPoint",
    "gamma_sweep",
    "run_pool",
    "default_threads",
]

# stream ids under the master seed
REFERENCE_STREAM = 0
FLOOR_STREAM = 1
RUN_STREAM = 100
INIT_STREAM = 200


def default_threads() -> int:
    env = os.environ.get("EXK_THREADS")
    if env:
        return max(int(env), 1)
    return os.cpu_count() or 1


def run_pool(fn, items, threads: int | None = None) -> list:
    """Map ``fn`` over ``items`` on a thread pool; results keep input order."""
    items = list(items)
    threads = default_threads() if threads is None else max(int(threads), 1)
    if threads == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))


# --- rate fitting --------------------------------------------------------


@dataclass
class RateFit:
    times: np.ndarray
    log_distances: np.ndarray
    fitted_rate: float
    r_squared: float
    window: tuple[float, float]
    floor: float
    predictions: dict = field(default_factory=dict)

    @property
    def flagged(self) -> bool:
        return not (self.r_squared >= 0.9)


def fit_decay_rate(times, values, floor: float, skip_efolds: float = 1.0, min_efolds: float = 3.0) -> RateFit:
    """Least-squares slope of log(values) against t over the clean window.

    The window opens once the signal has dropped by ``skip_efolds``
    e-foldings and closes at the first point below three times ``floor``.
    Fails when the signal cannot fall ``min_efolds`` e-foldings before
    hitting that threshold.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.size < 3 or v[0] <= 0:
        raise NumericalError("insufficient dynamic range; increase n")
    cut = 3.0 * floor
    if math.log(v[0] / max(cut, 1e-300)) < min_efolds:
        raise NumericalError("insufficient dynamic range; increase n")
    below = np.flatnonzero(v < cut)
    stop = below[0] if below.size else v.size
    opened = np.flatnonzero(v <= v[0] * math.exp(-skip_efolds))
    start = opened[0] if opened.size else v.size
    sel = np.arange(start, stop)
    if sel.size < 3:
        raise NumericalError("insufficient dynamic range; increase n")
    ts, ls = t[sel], np.log(v[sel])
    slope, intercept = np.polyfit(ts, ls, 1)
    resid = ls - (slope * ts + intercept)
    ss_tot = float(np.sum((ls - ls.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 0.0
    return RateFit(
        times=ts,
        log_distances=ls,
        fitted_rate=float(-slope),
        r_squared=r2,
        window=(float(ts[0]), float(ts[-1])),
        floor=float(floor),
    )


# --- relaxation of the pure exchange flow --------------------------------


@dataclass
class RelaxationResult:
    fit: RateFit
    series: list  # (t, mean W2^2 over replicates)
    trajectories: list
    reference: Ensemble


def relaxation_experiment(
    B: FractionLaw,
    Z: float,
    n: int,
    t_end: float,
    dt: float,
    replicates: int,
    master_seed: int,
    cadence: float = 0.1,
    initial: TraitDistribution | None = None,
    threads: int | None = None,
    tol: float = 1e-3,
    max_iter: int = 200,
) -> RelaxationResult:
    """Decay rate of W2^2(u(t), steady state) for the pure exchange flow.

    The series is averaged over replicates before fitting; predictions
    ``c = l1 - l2`` and ``2c`` are attached to the fit.
    """
    if not Z > 0:
        raise ConfigError("Z must be > 0", key="Z")
    initial = Uniform(0.0, 2.0 * Z) if initial is None else initial
    ref = steady_state(Z, B, n, make_rng(master_seed, REFERENCE_STREAM), tol=tol, max_iter=max_iter)

    def one(rep):
        u0 = sample_from(initial, n, make_rng(master_seed, INIT_STREAM, rep))
        return simulate_pure_exchange(u0, B, t_end, dt, cadence, make_rng(master_seed, RUN_STREAM, rep), reference=ref)

    trajs = run_pool(one, range(int(replicates)), threads)
    t = trajs[0].column("t")
    w2sq = np.mean([tr.column("w2_ref") ** 2 for tr in trajs], axis=0)
    floor = noise_floor(ref, make_rng(master_seed, FLOOR_STREAM), p=2, repeats=5) ** 2
    fit = fit_decay_rate(t, w2sq, floor)
    c = relaxation_constant(B)
    fit.predictions = {"c": c, "2c": 2 * c}
    return RelaxationResult(fit=fit, series=list(zip(t.tolist(), w2sq.tolist())), trajectories=trajs, reference=ref)


# --- long-time behaviour of the full model -------------------------------


@dataclass
class LongTimeReport:
    kappa_predicted: float
    kappa_statement: float
    fitted_rate: float
    r_squared: float
    w1_series: list  # (t, W1)
    n_limit: tuple[float, float]
    n_bar_gap: float
    n_bar_predicted: float
    floor: float
    trajectories: tuple = ()

    @property
    def fit_ok(self) -> bool:
        return math.isfinite(self.fitted_rate) and self.r_squared >= 0.9


def longtime_experiment(
    params: KineticParams,
    init1: PopulationState,
    init2: PopulationState,
    t_end: float,
    dt: float,
    master_seed: int,
    coupling: str = "common_rng",
    cadence: float = 0.1,
) -> LongTimeReport:
    """Two kinetic runs from different data; tracks W1 between their profiles.

    ``common_rng`` drives both runs from one stream (same exchange events,
    partners, fractions, birth decisions and newborn traits);
    ``independent`` gives each its own stream.  Identical coupled data give
    a zero series and no fitted rate.
    """
    if coupling not in ("common_rng", "independent"):
        raise ConfigError(f"unknown coupling {coupling!r}", key="coupling")
    if init1.tilde_n.count != init2.tilde_n.count:
        raise ConfigError("both runs need the same particle count", key="init")
    params.check_dt(dt)
    rng1 = make_rng(master_seed, RUN_STREAM, 1)
    rng2 = make_rng(master_seed, RUN_STREAM, 1 if coupling == "common_rng" else 2)

    n_steps = int(round(t_end / dt))
    every = int(round(cadence / dt))
    if every < 1 or abs(n_steps * dt - t_end) > 1e-9 * max(t_end, 1) or abs(every * dt - cadence) > 1e-9:
        raise ConfigError("t_end and cadence must be integer multiples of dt", key="dt")
    meta = {"params": params.to_dict(), "dt": dt, "coupling": coupling, "seed": master_seed, "scheme": "pairwise"}
    tr1, tr2 = Trajectory(metadata=dict(meta, run=1)), Trajectory(metadata=dict(meta, run=2))
    s1, s2 = init1, init2
    series = [(0.0, wasserstein(s1.tilde_n, s2.tilde_n, 1))]
    tr1.append(0.0, s1.N, s1.tilde_n)
    tr2.append(0.0, s2.N, s2.tilde_n)
    for k in range(1, n_steps + 1):
        s1 = step(s1, params, dt, rng1)
        s2 = step(s2, params, dt, rng2)
        if k % every == 0:
            t = k * dt
            series.append((t, wasserstein(s1.tilde_n, s2.tilde_n, 1)))
            tr1.append(t, s1.N, s1.tilde_n)
            tr2.append(t, s2.N, s2.tilde_n)

    alpha = params.alpha
    z1, z2, zb = float(np.mean(init1.tilde_n.samples)), float(np.mean(init2.tilde_n.samples)), params.n_b.mean
    c1 = 4.0 * zb + z1 + z2
    m_bound = max(zb, z1, z2)
    kappa = params.r + alpha.min_value - c1 * alpha.lipschitz
    kappa_stmt = params.r + alpha.min_value - 6.0 * m_bound * alpha.lipschitz

    floor = noise_floor(s1.tilde_n, make_rng(master_seed, FLOOR_STREAM), p=1, repeats=5)
    ts = np.array([s[0] for s in series])
    ws = np.array([s[1] for s in series])
    try:
        fit = fit_decay_rate(ts, ws, floor)
        rate, r2 = fit.fitted_rate, fit.r_squared
    except NumericalError:
        rate, r2 = math.nan, math.nan
    pooled = np.concatenate([s1.tilde_n.samples, s2.tilde_n.samples])
    n_bar = (params.r + float(np.mean(alpha(pooled)))) / params.beta
    return LongTimeReport(
        kappa_predicted=kappa,
        kappa_statement=kappa_stmt,
        fitted_rate=rate,
        r_squared=r2,
        w1_series=series,
        n_limit=(s1.N, s2.N),
        n_bar_gap=wasserstein(s1.tilde_n, s2.tilde_n, 1),
        n_bar_predicted=n_bar,
        floor=floor,
        trajectories=(tr1, tr2),
    )


# --- hydrodynamic sweep --------------------------------------------------


@dataclass
class SweepPoint:
    gamma: float
    reports: list  # one HydroReport per replicate

    @property
    def sup_error(self) -> float:
        return float(np.mean([r.sup_error for r in self.reports]))

    @property
    def sup_w2(self) -> float:
        return float(np.mean([r.sup_w2 for r in self.reports]))

    @property
    def sup_n(self) -> float:
        return float(np.mean([r.sup_n for r in self.reports]))

    @property
    def sup_error_se(self) -> float:
        vals = [r.sup_error for r in self.reports]
        return float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else math.nan


def gamma_sweep(
    params_base: KineticParams,
    gammas,
    init: PopulationState,
    t_end: float,
    dt: float,
    dt_macro: float,
    cadence: float,
    replicates: int,
    master_seed: int,
    u1_bar: Ensemble,
    threads: int | None = None,
) -> list[SweepPoint]:
    """``hydro_compare`` at each gamma; replicate ``k`` uses the same stream at every gamma."""
    gammas = [float(g) for g in gammas]
    if not gammas:
        raise ConfigError("empty gamma sweep", key="gammas")
    if any(g < 1 for g in gammas) or any(b <= a for a, b in zip(gammas, gammas[1:])):
        raise ConfigError("gammas must be strictly increasing and >= 1", key="gammas")
    from dataclasses import replace

    jobs = [(g, k) for g in gammas for k in range(int(replicates))]

    def one(job) -> HydroReport:
        g, k = job
        return hydro_compare(
            replace(params_base, gamma=g), init, t_end, dt, dt_macro, cadence, u1_bar, make_rng(master_seed, RUN_STREAM, k)
        )

    reports = run_pool(one, jobs, threads)
    return [SweepPoint(g, [rep for (gg, _), rep in zip(jobs, reports) if gg == g]) for g in gammas]
