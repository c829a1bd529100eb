"""Particle simulation of the birth / death / exchange population model.

The population is split into its size ``N(t)`` and its normalised trait
profile, carried by a fixed number of particles.  Death is trait blind, so
it only enters the scalar equation

    N' = (r + <alpha>(t) - beta N) N,

while the profile relaxes toward the birth law at rate ``r + <alpha>`` and
exchanges at rate ``gamma``.  One time step is a Lie splitting of

    (i)   exchanges, each particle w.p. 1 - exp(-gamma dt), values read
          from the pre-step snapshot; by default the selected particles
          are paired and both partners update (total trait conserved;
          an odd count borrows one idle particle),
          ``scheme="one_sided"`` updates only the focal particle;
    (ii)  births, each particle w.p. 1 - exp(-lam dt) replaced by a draw
          from the birth law, lam = r + <alpha> frozen over the step;
    (iii) the exact logistic flow of N with lam frozen.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ConfigError, NumericalError
from .exchange import FractionLaw, exchange_arrays
from .measures import Ensemble, TraitDistribution, wasserstein

__all__ = [
    "FitnessFunction",
    "ConstantFitness",
    "AffineClippedFitness",
    "SaturatingFitness",
    "KineticParams",
    "PopulationState",
    "Trajectory",
    "STABILITY_BOUND",
    "logistic_flow",
    "step",
    "simulate",
    "simulate_pure_exchange",
]

STABILITY_BOUND = 0.2


# --- fitness -------------------------------------------------------------


class FitnessFunction:
    """Trait-dependent extra birth rate alpha(x) >= 0 on [0, inf)."""

    kind = "abstract"

    def __call__(self, x):
        raise NotImplementedError

    @property
    def lipschitz(self) -> float:
        raise NotImplementedError

    @property
    def min_value(self) -> float:
        raise NotImplementedError

    @property
    def max_value(self) -> float:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantFitness(FitnessFunction):
    a: float
    kind = "constant"

    def __post_init__(self):
        if not (0 <= self.a < math.inf):
            raise ConfigError(f"constant fitness must be finite and >= 0, got {self.a}")

    def __call__(self, x):
        return np.full_like(np.asarray(x, dtype=float), float(self.a))

    lipschitz = property(lambda self: 0.0)
    min_value = property(lambda self: float(self.a))
    max_value = property(lambda self: float(self.a))

    def to_dict(self):
        return {"kind": self.kind, "a": self.a}


@dataclass(frozen=True)
class AffineClippedFitness(FitnessFunction):
    """alpha(x) = a + b * min(x, xmax)."""

    a: float
    b: float
    xmax: float
    kind = "affine_clipped"

    def __post_init__(self):
        if not (0 < self.xmax < math.inf):
            raise ConfigError("affine fitness needs 0 < xmax < inf")
        if min(self.a, self.a + self.b * self.xmax) < 0:
            raise ConfigError("affine fitness must stay >= 0 on [0, xmax]")

    def __call__(self, x):
        return self.a + self.b * np.minimum(np.asarray(x, dtype=float), self.xmax)

    @property
    def lipschitz(self):
        return abs(float(self.b))

    @property
    def min_value(self):
        return float(min(self.a, self.a + self.b * self.xmax))

    @property
    def max_value(self):
        return float(max(self.a, self.a + self.b * self.xmax))

    def to_dict(self):
        return {"kind": self.kind, "a": self.a, "b": self.b, "xmax": self.xmax}


@dataclass(frozen=True)
class SaturatingFitness(FitnessFunction):
    """alpha(x) = a x / (h + x); steepest at the origin, where alpha' = a / h."""

    a: float
    h: float
    kind = "saturating"

    def __post_init__(self):
        if not (0 <= self.a < math.inf and 0 < self.h < math.inf):
            raise ConfigError("saturating fitness needs a >= 0 and h > 0")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.a * x / (self.h + x)

    @property
    def lipschitz(self):
        return float(self.a) / float(self.h)

    min_value = property(lambda self: 0.0)
    max_value = property(lambda self: float(self.a))

    def to_dict(self):
        return {"kind": self.kind, "a": self.a, "h": self.h}


# --- parameters and state ------------------------------------------------


@dataclass(frozen=True)
class KineticParams:
    r: float
    beta: float
    gamma: float
    alpha: FitnessFunction
    n_b: TraitDistribution
    B: FractionLaw

    def __post_init__(self):
        for name in ("r", "beta", "gamma"):
            v = getattr(self, name)
            if not (0 < v < math.inf):
                raise ConfigError(f"{name} must be > 0", key=name)
        if not math.isfinite(self.n_b.m2):
            raise ConfigError("birth law must have a finite second moment", key="n_b")

    @property
    def max_rate(self) -> float:
        return self.gamma + self.r + self.alpha.max_value

    def check_dt(self, dt: float):
        if not (dt > 0):
            raise ConfigError("dt must be > 0", key="dt")
        if dt * self.max_rate > STABILITY_BOUND + 1e-12:
            raise ConfigError(
                f"dt * (gamma + r + max alpha) = {dt * self.max_rate:.4g} exceeds {STABILITY_BOUND}; "
                f"need dt <= {STABILITY_BOUND / self.max_rate:.4g}",
                key="dt",
            )

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "beta": self.beta,
            "gamma": self.gamma,
            "alpha": self.alpha.to_dict(),
            "n_b": self.n_b.to_dict(),
            "B": self.B.to_dict(),
        }


@dataclass(frozen=True)
class PopulationState:
    t: float
    N: float
    tilde_n: Ensemble

    def __post_init__(self):
        if not (self.N > 0 and math.isfinite(self.N)):
            raise NumericalError(f"population size must be finite and > 0, got {self.N}")


@dataclass
class Trajectory:
    """Cadence-sampled summaries of a run; ``w2_ref`` is None when untracked."""

    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def has_reference(self) -> bool:
        return bool(self.rows) and self.rows[0][4] is not None

    def column(self, name: str) -> np.ndarray:
        k = ("t", "N", "Z", "m2", "w2_ref").index(name)
        return np.array([row[k] for row in self.rows], dtype=float)

    def append(self, t, N, u: Ensemble, w2_ref=None):
        if self.rows and not t > self.rows[-1][0]:
            raise ValueError("trajectory times must increase strictly")
        x = u.samples
        self.rows.append((float(t), float(N), float(np.mean(x)), float(np.mean(x * x)), w2_ref))

    def write_csv(self, path) -> list[Path]:
        """Write ``<path>`` and its ``.meta.json`` sidecar; returns both paths."""
        path = Path(path)
        ref = self.has_reference
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "N", "Z", "m2"] + (["w2_ref"] if ref else []))
            for row in self.rows:
                vals = row[:4] + ((row[4],) if ref else ())
                w.writerow([format(v, ".17g") for v in vals])
        meta = path.with_suffix(".meta.json")
        meta.write_text(json.dumps(self.metadata, indent=2, sort_keys=True) + "\n")
        return [path, meta]


# --- dynamics ------------------------------------------------------------


def logistic_flow(N0: float, lam: float, beta: float, dt: float) -> float:
    """Exact solution at time dt of N' = (lam - beta N) N from N0."""
    x = lam * dt
    # (e^x - 1) / lam, by series where the quotient would lose precision
    growth = dt * (1.0 + 0.5 * x + x * x / 6.0) if abs(x) < 1e-5 else math.expm1(x) / lam
    return N0 * math.exp(x) / (1.0 + beta * N0 * growth)


def _exchange_substep(x, rate, dt, B, rng, scheme="pairwise"):
    n = x.size
    hit = rng.random(n) < -math.expm1(-rate * dt)
    k = int(np.count_nonzero(hit))
    out = x.copy()
    if not k:
        return out
    if scheme == "one_sided":
        partners = rng.integers(0, n, k)
        y1 = B.sample(rng, k)
        y2 = B.sample(rng, k)
        # x is the pre-step snapshot, so updates within the step do not interact
        out[hit] = exchange_arrays(x[hit], x[partners], y1, y2)
        return out
    if scheme != "pairwise":
        raise ConfigError(f"unknown exchange scheme {scheme!r}", key="scheme")
    # hit particles are paired at random; both members update with the same
    # (Y1, Y2), so each pair conserves x1 + x2 and each member's law is K
    idx = np.flatnonzero(hit)
    if k % 2 and k < n:
        # odd one out is matched with a uniformly chosen idle particle
        idle = np.flatnonzero(~hit)
        idx = np.append(idx, idle[rng.integers(0, idle.size)])
    k2 = idx.size // 2 * 2
    idx = idx[rng.permutation(idx.size)][:k2]
    h = k2 // 2
    y1 = B.sample(rng, h)
    y2 = B.sample(rng, h)
    a, b = idx[:h], idx[h:]
    out[a] = exchange_arrays(x[a], x[b], y1, y2)
    out[b] = exchange_arrays(x[b], x[a], y2, y1)
    return out


def step(
    state: PopulationState, params: KineticParams, dt: float, rng, scheme: str = "pairwise"
) -> PopulationState:
    params.check_dt(dt)
    x = state.tilde_n.samples
    n = x.size
    lam = params.r + float(np.mean(params.alpha(x)))
    x = _exchange_substep(x, params.gamma, dt, params.B, rng, scheme)
    # draw the full birth vector so coupled runs stay stream-aligned when lam differs
    u = rng.random(n)
    fresh = params.n_b.sample(rng, n)
    born = u < -math.expm1(-lam * dt)
    x[born] = fresh[born]
    N = logistic_flow(state.N, lam, params.beta, dt)
    return PopulationState(t=state.t + dt, N=N, tilde_n=Ensemble(x))


Reference = Ensemble | Callable[[float], Ensemble] | None


def _ticks(t_end, dt, cadence):
    if t_end < 0:
        raise ConfigError("t_end must be >= 0", key="t_end")
    if cadence <= 0:
        raise ConfigError("cadence must be > 0", key="cadence")
    n_steps = int(round(t_end / dt))
    every = int(round(cadence / dt))
    if abs(n_steps * dt - t_end) > 1e-9 * max(1.0, t_end) or every < 1 or abs(every * dt - cadence) > 1e-9 * cadence:
        raise ConfigError("t_end and cadence must be integer multiples of dt", key="dt")
    return n_steps, every


def _ref_distance(reference: Reference, t, u):
    if reference is None:
        return None
    ref = reference(t) if callable(reference) else reference
    return wasserstein(u, ref, 2)


def simulate(
    params: KineticParams,
    init: PopulationState,
    t_end: float,
    dt: float,
    cadence: float,
    rng,
    reference: Reference = None,
    on_tick: Callable[[PopulationState], None] | None = None,
    scheme: str = "pairwise",
) -> Trajectory:
    """Advance ``init`` to ``t_end``, recording a row every ``cadence``.

    ``reference`` adds a ``w2_ref`` column; a callable is evaluated at each
    tick time.  ``on_tick`` sees every recorded state.
    """
    params.check_dt(dt)
    n_steps, every = _ticks(t_end, dt, cadence)
    traj = Trajectory(metadata={"params": params.to_dict(), "dt": dt, "scheme": scheme, "splitting": "lie"})
    state = init
    traj.append(state.t, state.N, state.tilde_n, _ref_distance(reference, state.t, state.tilde_n))
    if on_tick:
        on_tick(state)
    t0 = init.t
    for k in range(1, n_steps + 1):
        state = step(state, params, dt, rng, scheme)
        state = replace(state, t=t0 + k * dt)
        if k % every == 0:
            traj.append(state.t, state.N, state.tilde_n, _ref_distance(reference, state.t, state.tilde_n))
            if on_tick:
                on_tick(state)
    return traj


def simulate_pure_exchange(
    u0: Ensemble,
    B: FractionLaw,
    t_end: float,
    dt: float,
    cadence: float,
    rng,
    reference: Reference = None,
    scheme: str = "pairwise",
) -> Trajectory:
    """Exchange-only flow at unit rate; N is reported as 1."""
    if not (0 < dt <= STABILITY_BOUND):
        raise ConfigError(f"dt must lie in (0, {STABILITY_BOUND}] for the pure exchange flow", key="dt")
    n_steps, every = _ticks(t_end, dt, cadence)
    traj = Trajectory(metadata={"B": B.to_dict(), "dt": dt, "scheme": scheme, "flow": "exchange-only"})
    u = u0
    traj.append(0.0, 1.0, u, _ref_distance(reference, 0.0, u))
    for k in range(1, n_steps + 1):
        u = Ensemble(_exchange_substep(u.samples, 1.0, dt, B, rng, scheme))
        if k % every == 0:
            t = k * dt
            traj.append(t, 1.0, u, _ref_distance(reference, t, u))
    return traj
