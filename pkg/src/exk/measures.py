"""Empirical probability measures on the half line.

A measure is stored as an equal-weight sample vector kept in ascending
order.  In one dimension the optimal transport plan between two such
measures pairs order statistics, so Wasserstein distances reduce to an
L^p distance between sorted vectors.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError

__all__ = [
    "Ensemble",
    "MomentSummary",
    "moments",
    "standard_errors",
    "wasserstein",
    "quantile_resample",
    "noise_floor",
    "make_rng",
    "TraitDistribution",
    "PointMass",
    "Uniform",
    "Exponential",
    "ScaledBeta",
    "sample_from",
    "write_ensemble_csv",
    "read_ensemble_csv",
]


def make_rng(seed, *keys):
    """Independent generator for ``(seed, *keys)``; same inputs give the same stream."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Equal-weight empirical measure on [0, inf), samples sorted ascending.

    The backing array is copied, sorted and frozen at construction.
    """

    samples: np.ndarray

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.float64, copy=True).ravel()
        if x.size == 0:
            raise ValueError("empty measure")
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite trait value")
        x.sort()
        if x[0] < 0.0:
            raise ValueError(f"negative trait value {x[0]!r}")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)

    @property
    def count(self) -> int:
        return int(self.samples.size)

    def __len__(self):
        return self.count

    def scaled(self, factor: float) -> "Ensemble":
        if factor < 0:
            raise ValueError("scale factor must be >= 0")
        return Ensemble(self.samples * factor)

    def same_as(self, other: "Ensemble") -> bool:
        return self.count == other.count and bool(np.array_equal(self.samples, other.samples))


@dataclass(frozen=True)
class MomentSummary:
    mean: float
    m2: float
    count: int

    @property
    def variance(self) -> float:
        return max(self.m2 - self.mean**2, 0.0)


def moments(u: Ensemble) -> MomentSummary:
    x = u.samples
    if x.size == 0:
        raise ValueError("empty measure")
    mean = float(np.mean(x))
    m2 = float(np.mean(x * x))
    # rounding can put m2 a hair under mean**2 for point masses
    m2 = max(m2, mean * mean)
    return MomentSummary(mean=mean, m2=m2, count=x.size)


def standard_errors(u: Ensemble) -> tuple[float, float]:
    """Standard errors of the sample mean and the sample second moment."""
    x = u.samples
    n = x.size
    if n < 2:
        return math.inf, math.inf
    return float(np.std(x, ddof=1) / math.sqrt(n)), float(np.std(x * x, ddof=1) / math.sqrt(n))


def quantile_resample(u: Ensemble, m: int) -> np.ndarray:
    """Empirical quantiles of ``u`` at the midpoint grid (i - 1/2)/m, i = 1..m.

    For ``m == u.count`` this returns the samples unchanged.
    """
    n = u.count
    if m == n:
        return u.samples
    idx = np.ceil((np.arange(m) + 0.5) * (n / m)).astype(np.int64) - 1
    np.clip(idx, 0, n - 1, out=idx)
    return u.samples[idx]


def wasserstein(u: Ensemble, v: Ensemble, p: int = 2) -> float:
    """Exact W_p between empirical measures via the monotone (quantile) coupling."""
    if p not in (1, 2):
        raise ValueError(f"unsupported order {p!r}")
    if u.count < 2 or v.count < 2:
        raise ValueError("distance needs at least 2 samples per measure")
    n, m = u.count, v.count
    if n == m:
        d = np.abs(u.samples - v.samples)
        w = None
    else:
        # both quantile functions are constant between consecutive points of
        # {i/n} and {j/m}; breakpoints scaled by n*m to stay in integers
        br = np.union1d(np.arange(1, n + 1, dtype=np.int64) * m, np.arange(1, m + 1, dtype=np.int64) * n)
        w = np.diff(br, prepend=0) / (n * m)
        d = np.abs(u.samples[(br + m - 1) // m - 1] - v.samples[(br + n - 1) // n - 1])
    if p == 1:
        return float(np.mean(d) if w is None else np.dot(w, d))
    return float(math.sqrt(np.mean(d * d) if w is None else np.dot(w, d * d)))


def noise_floor(ref: Ensemble, rng, p: int = 2, count: int | None = None, repeats: int = 1) -> float:
    """W_p between two independent samples of the law of ``ref``.

    Sets the resolution limit of empirical distances at sample size ``count``
    (default ``ref.count``).  With ``repeats > 1`` the median over that many
    independent pairs is returned; single draws are tail dominated.
    """
    m = ref.count if count is None else int(count)
    vals = []
    for _ in range(max(int(repeats), 1)):
        a = Ensemble(rng.choice(ref.samples, size=m, replace=True))
        b = Ensemble(rng.choice(ref.samples, size=m, replace=True))
        vals.append(wasserstein(a, b, p))
    return float(np.median(vals))


# --- trait distributions -------------------------------------------------


class TraitDistribution:
    """Parametric law on [0, inf) with closed-form first two moments."""

    kind = "abstract"

    @property
    def mean(self) -> float:
        raise NotImplementedError

    @property
    def m2(self) -> float:
        raise NotImplementedError

    def sample(self, rng, size: int) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class PointMass(TraitDistribution):
    z: float
    kind = "point_mass"

    def __post_init__(self):
        if not (math.isfinite(self.z) and self.z >= 0):
            raise ConfigError(f"point mass location must be finite and >= 0, got {self.z}")

    @property
    def mean(self):
        return float(self.z)

    @property
    def m2(self):
        return float(self.z) ** 2

    def sample(self, rng, size):
        return np.full(size, float(self.z))

    def to_dict(self):
        return {"kind": self.kind, "z": self.z}


@dataclass(frozen=True)
class Uniform(TraitDistribution):
    lo: float
    hi: float
    kind = "uniform"

    def __post_init__(self):
        if not (0 <= self.lo < self.hi < math.inf):
            raise ConfigError(f"uniform needs 0 <= lo < hi < inf, got ({self.lo}, {self.hi})")

    @property
    def mean(self):
        return 0.5 * (self.lo + self.hi)

    @property
    def m2(self):
        return (self.lo**2 + self.lo * self.hi + self.hi**2) / 3.0

    def sample(self, rng, size):
        return rng.uniform(self.lo, self.hi, size)

    def to_dict(self):
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class Exponential(TraitDistribution):
    scale: float  # the mean
    kind = "exponential"

    def __post_init__(self):
        if not (0 < self.scale < math.inf):
            raise ConfigError(f"exponential mean must be > 0, got {self.scale}")

    @property
    def mean(self):
        return float(self.scale)

    @property
    def m2(self):
        return 2.0 * self.scale**2

    def sample(self, rng, size):
        return rng.exponential(self.scale, size)

    def to_dict(self):
        return {"kind": self.kind, "mean": self.scale}


@dataclass(frozen=True)
class ScaledBeta(TraitDistribution):
    a: float
    b: float
    scale: float
    kind = "beta_scaled"

    def __post_init__(self):
        if not (0 < self.a < math.inf and 0 < self.b < math.inf and 0 < self.scale < math.inf):
            raise ConfigError("scaled beta needs finite a, b, scale > 0")

    @property
    def mean(self):
        return self.scale * self.a / (self.a + self.b)

    @property
    def m2(self):
        a, b = self.a, self.b
        return self.scale**2 * a * (a + 1) / ((a + b) * (a + b + 1))

    def sample(self, rng, size):
        return self.scale * rng.beta(self.a, self.b, size)

    def to_dict(self):
        return {"kind": self.kind, "a": self.a, "b": self.b, "scale": self.scale}


def sample_from(dist: TraitDistribution, n: int, rng) -> Ensemble:
    if n < 1:
        raise ConfigError(f"sample size must be >= 1, got {n}")
    return Ensemble(dist.sample(rng, int(n)))


def write_ensemble_csv(u: Ensemble, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trait"])
        for x in u.samples:
            w.writerow([format(float(x), ".17g")])
    return path


def read_ensemble_csv(path) -> Ensemble:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["trait"]:
        raise ValueError(f"{path}: expected header 'trait'")
    return Ensemble(np.array([float(r[0]) for r in rows[1:]]))
