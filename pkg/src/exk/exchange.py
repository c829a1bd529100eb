"""Exchange kernel, the quadratic exchange operator and its fixed points.

In one exchange a cell holding ``x1`` gives away the fraction ``Y1`` of its
proteins and receives the fraction ``Y2`` of its partner's ``x2``, with
``Y1, Y2`` drawn independently from a fraction law on [0, 1]:

    x1' = x1 * (1 - Y1) + x2 * Y2

Only the focal cell is updated (one-sided scheme); the partner is read,
not written.  ``apply_T`` pushes a whole ensemble through one round.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ConvergenceError
from .measures import Ensemble, quantile_resample, wasserstein

__all__ = [
    "FractionLaw",
    "UniformFraction",
    "BetaFraction",
    "PointFraction",
    "TriangularFraction",
    "fraction_moments",
    "contraction_constant",
    "relaxation_constant",
    "exchange_once",
    "exchange_arrays",
    "apply_T",
    "ContractionReport",
    "measure_contraction",
    "steady_state",
    "steady_state_scaled",
]


class FractionLaw:
    """Law of the donated fraction, supported on [0, 1] with no atom at 0 or 1."""

    kind = "abstract"

    def moments(self) -> tuple[float, float]:
        raise NotImplementedError

    def sample(self, rng, size) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def _check(self):
        l1, l2 = self.moments()
        if not (0.0 < l1 < 1.0) or not (l2 < l1):
            raise ConfigError(f"{self.kind}: fraction moments violate 0 < l2 < l1 < 1 ({l1}, {l2})")


@dataclass(frozen=True)
class UniformFraction(FractionLaw):
    kind = "uniform01"

    def moments(self):
        return 0.5, 1.0 / 3.0

    def sample(self, rng, size):
        return rng.random(size)

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class BetaFraction(FractionLaw):
    a: float
    b: float
    kind = "beta"

    def __post_init__(self):
        if not (0 < self.a < math.inf and 0 < self.b < math.inf):
            raise ConfigError(f"beta fraction law needs finite a, b > 0, got ({self.a}, {self.b})")
        self._check()

    def moments(self):
        a, b = self.a, self.b
        return a / (a + b), a * (a + 1) / ((a + b) * (a + b + 1))

    def sample(self, rng, size):
        return rng.beta(self.a, self.b, size)

    def to_dict(self):
        return {"kind": self.kind, "a": self.a, "b": self.b}


@dataclass(frozen=True)
class PointFraction(FractionLaw):
    theta: float
    kind = "point_mass"

    def __post_init__(self):
        # an atom at 0 or 1 would put mass outside the open interval
        if not (0.0 < self.theta < 1.0):
            raise ConfigError(f"point-mass fraction needs 0 < theta < 1, got {self.theta}")

    def moments(self):
        return float(self.theta), float(self.theta) ** 2

    def sample(self, rng, size):
        return np.full(size, float(self.theta))

    def to_dict(self):
        return {"kind": self.kind, "theta": self.theta}


@dataclass(frozen=True)
class TriangularFraction(FractionLaw):
    """Triangular density on [0, 1] with the given mode."""

    mode: float
    kind = "triangular"

    def __post_init__(self):
        if not (0.0 <= self.mode <= 1.0):
            raise ConfigError(f"triangular mode must lie in [0, 1], got {self.mode}")

    def moments(self):
        c = float(self.mode)
        return (1.0 + c) / 3.0, (1.0 + c + c * c) / 6.0

    def sample(self, rng, size):
        return rng.triangular(0.0, self.mode, 1.0, size)

    def to_dict(self):
        return {"kind": self.kind, "mode": self.mode}


def fraction_moments(B: FractionLaw) -> tuple[float, float]:
    """First and second moments (lambda1, lambda2) of the fraction law."""
    return B.moments()


def contraction_constant(B: FractionLaw) -> float:
    """W2 Lipschitz constant of T on a fixed-mean slice: sqrt(1 + 2 l2 - 2 l1)."""
    l1, l2 = B.moments()
    return math.sqrt(1.0 + 2.0 * l2 - 2.0 * l1)


def relaxation_constant(B: FractionLaw) -> float:
    """c = int x (1 - x) B(x) dx = l1 - l2."""
    l1, l2 = B.moments()
    return l1 - l2


def exchange_arrays(x1, x2, y1, y2):
    # both terms are >= 0, so the result is >= 0 with no cancellation
    return x1 * (1.0 - y1) + x2 * y2


def exchange_once(x1: float, x2: float, B: FractionLaw, rng) -> float:
    """One draw from the post-exchange law of a cell at ``x1`` meeting ``x2``."""
    if x1 < 0 or x2 < 0:
        raise ValueError(f"traits must be >= 0, got ({x1}, {x2})")
    y = B.sample(rng, 2)
    return float(exchange_arrays(float(x1), float(x2), y[0], y[1]))


def _draw_round(n_in, n_out, B, rng):
    i = rng.integers(0, n_in, n_out)
    j = rng.integers(0, n_in, n_out)
    y1 = B.sample(rng, n_out)
    y2 = B.sample(rng, n_out)
    return i, j, y1, y2


def _push(x, draws, symmetric):
    i, j, y1, y2 = draws
    if not symmetric:
        return exchange_arrays(x[i], x[j], y1, y2)
    # pairs (i_k, j_k) both update with the same (Y1, Y2); x1 + x2 is conserved
    half = (len(i) + 1) // 2
    a, b = x[i[:half]], x[j[:half]]
    u1, u2 = y1[:half], y2[:half]
    out = np.concatenate([exchange_arrays(a, b, u1, u2), exchange_arrays(b, a, u2, u1)])
    return out[: len(i)]


def apply_T(u: Ensemble, out_count: int, B: FractionLaw, rng, symmetric: bool = False) -> Ensemble:
    """One synchronous exchange round: ``out_count`` i.i.d. draws from T(u)."""
    if out_count < 1:
        raise ValueError("out_count must be >= 1")
    draws = _draw_round(u.count, int(out_count), B, rng)
    return Ensemble(_push(u.samples, draws, symmetric))


@dataclass(frozen=True)
class ContractionReport:
    factor_empirical: float
    factor_theoretical: float | None
    samples: int
    pair_means: tuple[float, float]
    p: int = 2
    equal_means: bool = True

    def as_row(self) -> dict:
        return {
            "p": self.p,
            "factor_empirical": self.factor_empirical,
            "factor_theoretical": math.nan if self.factor_theoretical is None else self.factor_theoretical,
            "samples": self.samples,
            "z1": self.pair_means[0],
            "z2": self.pair_means[1],
            "equal_means": int(self.equal_means),
        }


def measure_contraction(u1: Ensemble, u2: Ensemble, B: FractionLaw, p: int, rng) -> ContractionReport:
    """Ratio W_p(T u1, T u2) / W_p(u1, u2) under common random numbers.

    Both inputs are sorted, so reusing the same draw indices on each pairs
    them through the monotone coupling; the same fractions Y1, Y2 are used
    on both sides.
    """
    if p not in (1, 2):
        raise ValueError(f"unsupported order {p!r}")
    before = wasserstein(u1, u2, p)
    if before < 1e-12:
        raise ValueError("identical inputs")
    n = max(u1.count, u2.count)
    x1 = quantile_resample(u1, n)
    x2 = quantile_resample(u2, n)
    draws = _draw_round(n, n, B, rng)
    after = wasserstein(Ensemble(_push(x1, draws, False)), Ensemble(_push(x2, draws, False)), p)
    z1, z2 = float(np.mean(x1)), float(np.mean(x2))
    equal = abs(z1 - z2) <= 1e-6 * max(abs(z1), abs(z2), 1e-300)
    theo = contraction_constant(B) if p == 2 else None
    return ContractionReport(
        factor_empirical=after / before,
        factor_theoretical=theo,
        samples=n,
        pair_means=(z1, z2),
        p=p,
        equal_means=equal if p == 2 else True,
    )


def steady_state(
    Z: float,
    B: FractionLaw,
    n: int,
    rng,
    tol: float = 1e-3,
    max_iter: int = 200,
    trace: list | None = None,
    oversample: int = 16,
) -> Ensemble:
    """Fixed point of T with mean ``Z`` by Banach iteration from the point mass at Z.

    The exchange draws (partner indices and fractions) are sampled once and
    reused every iteration, so the iteration is a deterministic contraction
    on sorted vectors and the W2 gap between iterates falls below the Monte
    Carlo resolution of a single round.  Each iterate is rescaled to mean
    exactly ``Z`` (T preserves the mean in law, not per sample).

    Freezing the draws makes the fixed point noisier than an i.i.d. sample
    of the same size (errors are fed back through the contraction), so the
    iteration runs on ``oversample * n`` points and returns their ``n``
    midpoint quantiles.

    ``trace``, if given, receives ``(iter, w2_gap, mean, m2)`` tuples.
    """
    if not (Z >= 0 and math.isfinite(Z)):
        raise ValueError(f"Z must be finite and >= 0, got {Z}")
    if tol <= 0:
        raise ValueError("tol must be > 0")
    n = int(n)
    if n < 2 or oversample < 1:
        raise ValueError("need n >= 2 and oversample >= 1")
    if Z == 0:
        u = Ensemble(np.zeros(n))
        if trace is not None:
            trace.append((0, 0.0, 0.0, 0.0))
        return u
    # rank k reads its own value as x1 and a uniformly drawn partner
    m = n * int(oversample)
    i = np.arange(m)
    j = rng.integers(0, m, m)
    y1 = B.sample(rng, m)
    y2 = B.sample(rng, m)
    x = np.full(m, float(Z))
    gap = math.inf
    for it in range(1, int(max_iter) + 1):
        v = exchange_arrays(x[i], x[j], y1, y2)
        v *= Z / np.mean(v)
        v.sort()
        d = v - x
        gap = float(math.sqrt(np.mean(d * d)))
        x = v
        if trace is not None:
            trace.append((it, gap, float(np.mean(x)), float(np.mean(x * x))))
        if gap < tol:
            out = quantile_resample(Ensemble(x), n)
            # restore the exact mean lost to quantile thinning
            return Ensemble(out * (Z / np.mean(out)))
    raise ConvergenceError(
        f"steady state did not reach W2 gap < {tol} in {max_iter} iterations (last gap {gap:.3e})",
        last_gap=gap,
        iterations=int(max_iter),
    )


def steady_state_scaled(Z: float, u1_bar: Ensemble) -> Ensemble:
    """Steady state with mean Z from the mean-one steady state.

    The kernel is homogeneous of degree one, so Z times a fixed point with
    mean one is a fixed point with mean Z.
    """
    if Z < 0:
        raise ValueError("Z must be >= 0")
    return Ensemble(u1_bar.samples * float(Z))
