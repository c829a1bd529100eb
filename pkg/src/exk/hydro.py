"""Macroscopic limit for large exchange rates.

When exchanges dominate, the trait profile is slaved to the pure-exchange
steady state with the current mean, and (N, Z) follow

    N' = (r + A(Z) - beta N) N
    Z' = (r + A(Z)) (Z_b - Z)

where A(Z) is the mean of alpha under the steady state of mean Z and Z_b
is the mean birth trait.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError
from .exchange import steady_state_scaled
from .kinetic import FitnessFunction, KineticParams, PopulationState, Trajectory, simulate
from .measures import Ensemble, moments, wasserstein

__all__ = [
    "MacroState",
    "HydroReport",
    "alpha_mean_at",
    "integrate_macro",
    "macro_at",
    "hydro_compare",
    "TRANSIENT_EXCHANGES",
]

# ticks with t < TRANSIENT_EXCHANGES / gamma are excluded from the sup
TRANSIENT_EXCHANGES = 5.0


@dataclass(frozen=True)
class MacroState:
    t: float
    N_bar: float
    Z_bar: float

    def __post_init__(self):
        if not (self.N_bar > 0 and self.Z_bar >= 0):
            raise NumericalError(f"macro state left its domain: N={self.N_bar}, Z={self.Z_bar}")


@dataclass
class HydroReport:
    gamma: float
    sup_error: float
    # (t, w2_term, n_term, total) per cadence tick
    rows: list = field(default_factory=list)
    trajectory: Trajectory | None = None

    @property
    def sup_w2(self) -> float:
        return max((r[1] for r in self._window()), default=math.nan)

    @property
    def sup_n(self) -> float:
        return max((r[2] for r in self._window()), default=math.nan)

    def _window(self):
        t0 = TRANSIENT_EXCHANGES / self.gamma
        return [r for r in self.rows if r[0] >= t0 - 1e-12]


def alpha_mean_at(Z: float, alpha: FitnessFunction, u1_bar: Ensemble) -> float:
    """Mean of alpha under the mean-Z steady state, read off Z * u1_bar."""
    return float(np.mean(alpha(Z * u1_bar.samples)))


def _rhs(state, params, Zb, u1_bar):
    N, Z = state
    lam = params.r + alpha_mean_at(max(Z, 0.0), params.alpha, u1_bar)
    return np.array([(lam - params.beta * N) * N, lam * (Zb - Z)])


def integrate_macro(
    params: KineticParams, init: MacroState, t_end: float, dt: float, u1_bar: Ensemble
) -> list[MacroState]:
    """Classical RK4 with a fixed step; returns the state after every step."""
    if dt <= 0 or t_end < 0:
        raise ConfigError("need dt > 0 and t_end >= 0", key="dt")
    n_steps = int(round(t_end / dt))
    if abs(n_steps * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ConfigError("t_end must be an integer multiple of the macro dt", key="dt")
    Zb = params.n_b.mean
    y = np.array([init.N_bar, init.Z_bar], dtype=float)
    out = [MacroState(init.t, y[0], y[1])]
    for k in range(1, n_steps + 1):
        k1 = _rhs(y, params, Zb, u1_bar)
        k2 = _rhs(y + 0.5 * dt * k1, params, Zb, u1_bar)
        k3 = _rhs(y + 0.5 * dt * k2, params, Zb, u1_bar)
        k4 = _rhs(y + dt * k3, params, Zb, u1_bar)
        y = y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise NumericalError(f"non-finite macro state at t={init.t + k * dt}")
        out.append(MacroState(init.t + k * dt, y[0], y[1]))
    return out


def macro_at(path: list[MacroState], t: float) -> MacroState:
    """State on a uniform macro grid at time ``t`` (must be a grid point)."""
    dt = path[1].t - path[0].t if len(path) > 1 else 1.0
    k = int(round((t - path[0].t) / dt))
    if not 0 <= k < len(path) or abs(path[k].t - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"t={t} is not on the macro grid")
    return path[k]


def hydro_compare(
    params: KineticParams,
    init: PopulationState,
    t_end: float,
    dt_kinetic: float,
    dt_macro: float,
    cadence: float,
    u1_bar: Ensemble,
    rng,
) -> HydroReport:
    """Kinetic run against the macro ODE from the same initial data.

    Per tick: w2_term = W2(tilde_n(t), Zbar(t) * u1_bar), n_term = |N - Nbar|.
    """
    if params.gamma < 1:
        raise ConfigError("the hydrodynamic comparison is a large-gamma statement; need gamma >= 1", key="gamma")
    every = cadence / dt_macro
    if abs(every - round(every)) > 1e-9:
        raise ConfigError("cadence must be an integer multiple of the macro dt", key="cadence")
    m0 = moments(init.tilde_n)
    path = integrate_macro(params, MacroState(init.t, init.N, m0.mean), t_end, dt_macro, u1_bar)

    rows = []

    def record(state: PopulationState):
        mac = macro_at(path, state.t)
        w2 = wasserstein(state.tilde_n, steady_state_scaled(mac.Z_bar, u1_bar), 2)
        dn = abs(state.N - mac.N_bar)
        rows.append((state.t, w2, dn, w2 + dn))

    traj = simulate(params, init, t_end, dt_kinetic, cadence, rng, on_tick=record)
    report = HydroReport(gamma=params.gamma, sup_error=math.nan, rows=rows, trajectory=traj)
    window = report._window()
    if not window:
        raise ConfigError("no cadence tick falls after the transient; increase t_end", key="t_end")
    report.sup_error = max(r[3] for r in window)
    return report
