"""Run configuration: a flat JSON document plus ``--key value`` overrides.

Top-level keys (all others are rejected):

    command      steady | exchange-contraction | pure-exchange | kinetic |
                 hydro | longtime | gamma-sweep
    seed         unsigned 64-bit integer, required
    output_dir   default "out"
    threads      worker count, default machine parallelism; EXK_THREADS wins
    r beta gamma rates (> 0)
    gammas       strictly increasing list, each >= 1 (gamma-sweep)
    alpha        {"kind": "constant", "a"} | {"kind": "affine_clipped", "a", "b", "xmax"}
                 | {"kind": "saturating", "a", "h"}
    n_b          trait law, see below
    B            {"kind": "uniform01"} | {"kind": "beta", "a", "b"}
                 | {"kind": "point_mass", "theta"} | {"kind": "triangular", "mode"}
    Z            target mean for steady / pure-exchange
    n_particles  (alias n) default 100000, >= 100
    dt cadence t_end dt_macro tol max_iter replicates oversample
    init N0      initial trait law and size (kinetic default: n_b and 1.0);
                 init2 N0_2 for the second run
    coupling     common_rng | independent
    scheme       pairwise | one_sided
    p pairs      order and pair count for exchange-contraction

Trait laws: {"kind": "point_mass", "z"}, {"kind": "uniform", "lo", "hi"},
{"kind": "exponential", "mean"}, {"kind": "beta_scaled", "a", "b", "scale"},
and, for initial data only, {"kind": "steady_state", "Z"} (Z times the
mean-one exchange steady state).
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .exchange import BetaFraction, FractionLaw, PointFraction, TriangularFraction, UniformFraction
from .kinetic import (
    STABILITY_BOUND,
    AffineClippedFitness,
    ConstantFitness,
    FitnessFunction,
    KineticParams,
    SaturatingFitness,
)
from .measures import Exponential, PointMass, ScaledBeta, TraitDistribution, Uniform

__all__ = [
    "COMMANDS",
    "DEFAULTS",
    "Numerics",
    "RunConfig",
    "InitSpec",
    "parse_config",
    "load_document",
    "apply_overrides",
    "build_config",
    "parse_trait_law",
    "parse_fraction_law",
    "parse_fitness",
    "config_hash",
]

COMMANDS = ("steady", "exchange-contraction", "pure-exchange", "kinetic", "hydro", "longtime", "gamma-sweep")

DEFAULTS = {
    "output_dir": "out",
    "threads": None,
    "n_particles": 100_000,
    "dt": 0.01,
    "cadence": 0.1,
    "tol": 1e-3,
    "max_iter": 200,
    "replicates": 1,
    "oversample": 16,
    "coupling": "common_rng",
    "scheme": "pairwise",
    "p": 2,
    "pairs": 20,
    "dt_macro": None,
}

KNOWN_KEYS = set(DEFAULTS) | {
    "command", "seed", "r", "beta", "gamma", "gammas", "alpha", "n_b", "B", "Z", "n",
    "t_end", "init", "N0", "init2", "N0_2",
}  # fmt: skip

_KINETIC = ("r", "beta", "alpha", "n_b", "B", "t_end")
REQUIRED = {
    "steady": ("B", "Z"),
    "exchange-contraction": ("B",),
    "pure-exchange": ("B", "Z", "t_end"),
    "kinetic": _KINETIC + ("gamma",),
    "hydro": _KINETIC + ("gamma",),
    "longtime": _KINETIC + ("gamma", "init2", "N0_2"),
    "gamma-sweep": _KINETIC + ("gammas",),
}


# --- primitive checks ----------------------------------------------------


def _number(doc, key, positive=False, nonneg=False):
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key} must be a number, got {type(v).__name__}", key=key)
    v = float(v)
    if not math.isfinite(v):
        raise ConfigError(f"{key} must be finite", key=key)
    if positive and not v > 0:
        raise ConfigError(f"{key} must be > 0", key=key)
    if nonneg and v < 0:
        raise ConfigError(f"{key} must be >= 0", key=key)
    return v


def _integer(doc, key, minimum=None):
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, int):
        if isinstance(v, float) and v.is_integer():
            v = int(v)
        else:
            raise ConfigError(f"{key} must be an integer, got {v!r}", key=key)
    if minimum is not None and v < minimum:
        raise ConfigError(f"{key} must be >= {minimum}", key=key)
    return int(v)


def _law_doc(doc, key):
    d = doc[key]
    if not isinstance(d, dict) or "kind" not in d:
        raise ConfigError(f"{key} must be an object with a 'kind' field", key=key)
    return d


def _build(key, d, table):
    kind = d["kind"]
    if kind not in table:
        raise ConfigError(f"{key}: unknown kind {kind!r}; expected one of {sorted(table)}", key=f"{key}.kind")
    cls, fields_ = table[kind]
    extra = set(d) - {"kind"} - set(fields_)
    if extra:
        raise ConfigError(f"{key}: unknown field(s) {sorted(extra)}", key=f"{key}.{sorted(extra)[0]}")
    args = []
    for f in fields_:
        if f not in d:
            raise ConfigError(f"{key}: missing required key '{f}'", key=f"{key}.{f}")
        args.append(_number(d, f))
    try:
        return cls(*args)
    except ConfigError as exc:
        raise ConfigError(f"{key}: {exc}", key=exc.key or key) from None


_TRAIT_LAWS = {
    "point_mass": (PointMass, ("z",)),
    "uniform": (Uniform, ("lo", "hi")),
    "exponential": (Exponential, ("mean",)),
    "beta_scaled": (ScaledBeta, ("a", "b", "scale")),
}
_FRACTION_LAWS = {
    "uniform01": (UniformFraction, ()),
    "beta": (BetaFraction, ("a", "b")),
    "point_mass": (PointFraction, ("theta",)),
    "triangular": (TriangularFraction, ("mode",)),
}
_FITNESS = {
    "constant": (ConstantFitness, ("a",)),
    "affine_clipped": (AffineClippedFitness, ("a", "b", "xmax")),
    "saturating": (SaturatingFitness, ("a", "h")),
}


def parse_trait_law(d: dict, key: str = "n_b") -> TraitDistribution:
    return _build(key, _law_doc({key: d}, key), _TRAIT_LAWS)


def parse_fraction_law(d: dict, key: str = "B") -> FractionLaw:
    return _build(key, _law_doc({key: d}, key), _FRACTION_LAWS)


def parse_fitness(d: dict, key: str = "alpha") -> FitnessFunction:
    return _build(key, _law_doc({key: d}, key), _FITNESS)


@dataclass(frozen=True)
class InitSpec:
    """Initial trait data: a parametric law, or ``Z`` times the mean-one steady state."""

    law: TraitDistribution | None = None
    steady_Z: float | None = None

    def to_dict(self):
        if self.law is not None:
            return self.law.to_dict()
        return {"kind": "steady_state", "Z": self.steady_Z}


def parse_init(d, key="init") -> InitSpec:
    d = _law_doc({key: d}, key)
    if d["kind"] == "steady_state":
        extra = set(d) - {"kind", "Z"}
        if extra:
            raise ConfigError(f"{key}: unknown field(s) {sorted(extra)}", key=f"{key}.{sorted(extra)[0]}")
        if "Z" not in d:
            raise ConfigError(f"{key}: missing required key 'Z'", key=f"{key}.Z")
        return InitSpec(steady_Z=_number(d, "Z", positive=True))
    return InitSpec(law=parse_trait_law(d, key))


# --- the run configuration -----------------------------------------------


@dataclass(frozen=True)
class Numerics:
    n_particles: int
    dt: float
    t_end: float | None
    cadence: float
    tol: float
    max_iter: int
    replicates: int
    oversample: int
    dt_macro: float


@dataclass(frozen=True)
class RunConfig:
    command: str
    seed: int
    output_dir: Path
    numerics: Numerics
    threads: int | None = None
    params: KineticParams | None = None
    B: FractionLaw | None = None
    Z: float | None = None
    gammas: tuple = ()
    init: InitSpec | None = None
    N0: float | None = None
    init2: InitSpec | None = None
    N0_2: float | None = None
    coupling: str = "common_rng"
    scheme: str = "pairwise"
    p: int = 2
    pairs: int = 20
    # resolved document (defaults filled) for the manifest echo
    document: dict = field(default_factory=dict)

    @property
    def effective_threads(self) -> int:
        env = os.environ.get("EXK_THREADS")
        if env:
            try:
                return max(int(env), 1)
            except ValueError:
                raise ConfigError(f"EXK_THREADS must be an integer, got {env!r}", key="threads") from None
        if self.threads is not None:
            return self.threads
        return os.cpu_count() or 1


def load_document(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}", key="config")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})", key="config") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object", key="config")
    return doc


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(doc: dict, overrides) -> dict:
    """Apply ``[("--gamma", "40"), ...]`` or a flat ``--k v`` list; dotted keys reach into objects."""
    doc = copy.deepcopy(doc)
    items = list(overrides)
    if items and isinstance(items[0], str):
        if len(items) % 2:
            raise ConfigError(f"override {items[-1]!r} has no value", key=items[-1].lstrip("-"))
        items = list(zip(items[::2], items[1::2]))
    for flag, text in items:
        if not flag.startswith("--") or len(flag) < 3:
            raise ConfigError(f"expected --key, got {flag!r}", key=flag)
        path = flag[2:].replace("-", "_").split(".")
        target = doc
        for part in path[:-1]:
            if not isinstance(target.get(part), dict):
                raise ConfigError(f"cannot set {flag[2:]}: {part} is not an object", key=flag[2:])
            target = target[part]
        target[path[-1]] = _parse_value(text)
    return doc


# keys that cannot change any output value
_UNHASHED = ("output_dir", "threads")


def config_hash(document: dict) -> str:
    body = {k: v for k, v in document.items() if k not in _UNHASHED}
    blob = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def build_config(doc: dict, command: str | None = None) -> RunConfig:
    doc = dict(doc)
    unknown = sorted(set(doc) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown key '{unknown[0]}'", key=unknown[0])
    if "n" in doc:
        if "n_particles" in doc:
            raise ConfigError("give either n or n_particles, not both", key="n")
        doc["n_particles"] = doc.pop("n")
    if command is not None:
        if "command" in doc and doc["command"] != command:
            raise ConfigError(f"command {command!r} does not match config command {doc['command']!r}", key="command")
        doc["command"] = command
    if "command" not in doc:
        raise ConfigError("missing required key 'command'", key="command")
    cmd = doc["command"]
    if cmd not in COMMANDS:
        raise ConfigError(f"unknown command {cmd!r}", key="command")
    if "seed" not in doc:
        raise ConfigError("missing required key 'seed'", key="seed")
    for key in REQUIRED[cmd]:
        if key not in doc or doc[key] is None:
            raise ConfigError(f"missing required key '{key}'", key=key)
    if "r" in REQUIRED[cmd]:
        # kinetic runs start from the birth law at unit size unless told otherwise
        doc.setdefault("init", doc["n_b"])
        doc.setdefault("N0", 1.0)
    for k, v in DEFAULTS.items():
        doc.setdefault(k, v)

    seed = _integer(doc, "seed", minimum=0)
    if seed >= 2**64:
        raise ConfigError("seed must fit in 64 bits", key="seed")
    if not isinstance(doc["output_dir"], str):
        raise ConfigError("output_dir must be a string", key="output_dir")
    threads = None if doc["threads"] is None else _integer(doc, "threads", minimum=1)

    n = _integer(doc, "n_particles", minimum=100)
    dt = _number(doc, "dt", positive=True)
    t_end = _number(doc, "t_end", nonneg=True) if "t_end" in doc else None
    cadence = _number(doc, "cadence", positive=True)
    tol = _number(doc, "tol", positive=True)
    max_iter = _integer(doc, "max_iter", minimum=1)
    replicates = _integer(doc, "replicates", minimum=1)
    oversample = _integer(doc, "oversample", minimum=1)
    dt_macro = dt if doc["dt_macro"] is None else _number(doc, "dt_macro", positive=True)
    doc["dt_macro"] = dt_macro
    numerics = Numerics(n, dt, t_end, cadence, tol, max_iter, replicates, oversample, dt_macro)

    if doc["coupling"] not in ("common_rng", "independent"):
        raise ConfigError(f"coupling must be common_rng or independent, got {doc['coupling']!r}", key="coupling")
    if doc["scheme"] not in ("pairwise", "one_sided"):
        raise ConfigError(f"scheme must be pairwise or one_sided, got {doc['scheme']!r}", key="scheme")
    p = _integer(doc, "p")
    if p not in (1, 2):
        raise ConfigError("p must be 1 or 2", key="p")
    pairs = _integer(doc, "pairs", minimum=1)

    B = parse_fraction_law(doc["B"]) if "B" in doc else None
    Z = None
    if "Z" in doc:
        Z = _number(doc, "Z", nonneg=True)
        if cmd == "pure-exchange" and Z == 0:
            raise ConfigError("Z must be > 0", key="Z")
    init = parse_init(doc["init"], "init") if "init" in doc else None
    init2 = parse_init(doc["init2"], "init2") if "init2" in doc else None
    N0 = _number(doc, "N0", positive=True) if "N0" in doc else None
    N0_2 = _number(doc, "N0_2", positive=True) if "N0_2" in doc else None

    gammas: tuple = ()
    if "gammas" in doc:
        g = doc["gammas"]
        if not isinstance(g, list) or not g:
            raise ConfigError("gammas must be a non-empty list", key="gammas")
        gammas = tuple(_number({"gammas": x}, "gammas", positive=True) for x in g)
        if any(x < 1 for x in gammas) or any(b <= a for a, b in zip(gammas, gammas[1:])):
            raise ConfigError("gammas must be strictly increasing and >= 1", key="gammas")

    params = None
    if cmd in ("kinetic", "hydro", "longtime", "gamma-sweep"):
        for key in ("r", "beta"):
            _number(doc, key, positive=True)
        gamma = gammas[-1] if cmd == "gamma-sweep" else _number(doc, "gamma", positive=True)
        params = KineticParams(
            r=float(doc["r"]),
            beta=float(doc["beta"]),
            gamma=gamma,
            alpha=parse_fitness(doc["alpha"]),
            n_b=parse_trait_law(doc["n_b"]),
            B=B,
        )
        # checked at the largest gamma for a sweep
        params.check_dt(dt)
        if cmd in ("hydro", "gamma-sweep") and gamma < 1:
            raise ConfigError("gamma must be >= 1 for the hydrodynamic comparison", key="gamma")
    elif cmd == "pure-exchange" and dt > STABILITY_BOUND:
        raise ConfigError(f"dt must be <= {STABILITY_BOUND} for the pure exchange flow", key="dt")

    return RunConfig(
        command=cmd,
        seed=seed,
        output_dir=Path(doc["output_dir"]),
        numerics=numerics,
        threads=threads,
        params=params,
        B=B,
        Z=Z,
        gammas=gammas,
        init=init,
        N0=N0,
        init2=init2,
        N0_2=N0_2,
        coupling=doc["coupling"],
        scheme=doc["scheme"],
        p=p,
        pairs=pairs,
        document=doc,
    )


def parse_config(file, overrides=(), command: str | None = None) -> RunConfig:
    """Load ``file``, apply overrides, validate.  Raises ConfigError with the offending key."""
    return build_config(apply_overrides(load_document(file), overrides), command)
