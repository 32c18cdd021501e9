"""JSON run configuration and deterministic initial ensembles."""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

import numpy as np

from . import rng
from .convergence import format_rational, parse_rational
from .energy import EnergySpec
from .ensemble import ParticleEnsemble, read_ensemble_csv
from .errors import ConfigError, PlanError, WGFlowError
from .steppers import InnerSolverConfig, SchemeConfig

INIT_KINDS = ("gaussian_blob", "two_blobs", "ring", "file")
INIT_PARAMS = {
    "gaussian_blob": {"center", "std"},
    "two_blobs": {"c1", "c2", "std"},
    "ring": {"radius", "std"},
    "file": {"path"},
}
TOP_KEYS = {"dimension", "particles", "energy", "scheme", "lambda", "L", "output"}


def _vector(value, dim: int, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        arr = np.full(dim, float(arr[0]))
    if arr.shape != (dim,):
        raise ConfigError(f"{name} must be a scalar or a length-{dim} list, got {value!r}")
    return arr


def generate_initial(init: dict[str, Any], seed: int, count: int, dimension: int, base_dir: Path | None = None) -> ParticleEnsemble:
    """Initial ensemble for ``init``; particle ``i`` depends only on (kind, params, seed, i, dimension).

    Kinds: ``gaussian_blob{center, std}``, ``two_blobs{c1, c2, std}`` (even
    indices around ``c1``, odd around ``c2``), ``ring{radius, std}`` (uniform
    direction, Gaussian radial jitter; centred at the origin) and
    ``file{path}`` (a snapshot CSV).
    """
    if not isinstance(init, dict) or init.get("kind") not in INIT_KINDS:
        raise ConfigError(f"particles.init.kind must be one of {INIT_KINDS}")
    kind = init["kind"]
    params = {k: v for k, v in init.items() if k != "kind"}
    unknown = set(params) - INIT_PARAMS[kind]
    if unknown:
        raise ConfigError(f"init kind {kind!r} takes no parameter(s) {sorted(unknown)}")
    if count < 1 or dimension < 1:
        raise ConfigError("particle count and dimension must be >= 1")

    if kind == "file":
        path = Path(params["path"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        if not path.exists():
            raise ConfigError(f"initial ensemble file not found: {path}")
        ens = read_ensemble_csv(path)
        if ens.count != count or ens.dimension != dimension:
            raise ConfigError(
                f"{path}: has {ens.count} particles in dimension {ens.dimension}, config asks for {count} in {dimension}"
            )
        return ens

    std = float(params.get("std", 0.0))
    if std < 0:
        raise ConfigError("std must be nonnegative")
    pos = np.empty((count, dimension))
    if kind == "gaussian_blob":
        center = _vector(params.get("center", 0.0), dimension, "center")
        for i in range(count):
            pos[i] = center + std * rng.normals(seed, rng.INITIAL, i, dimension)
    elif kind == "two_blobs":
        c1 = _vector(params.get("c1", -1.0), dimension, "c1")
        c2 = _vector(params.get("c2", 1.0), dimension, "c2")
        for i in range(count):
            pos[i] = (c1 if i % 2 == 0 else c2) + std * rng.normals(seed, rng.INITIAL, i, dimension)
    else:
        radius = float(params.get("radius", 1.0))
        for i in range(count):
            z = rng.normals(seed, rng.INITIAL, i, dimension + 1)
            direction = z[:dimension]
            norm = math.sqrt(float(direction @ direction))
            if dimension == 1:
                direction = np.array([1.0 if z[0] >= 0 else -1.0])
            elif norm > 0:
                direction = direction / norm
            else:
                direction = np.eye(dimension)[0]
            pos[i] = (radius + std * z[dimension]) * direction
    return ParticleEnsemble(pos)


@dataclass
class RunConfig:
    dimension: int
    count: int
    init: dict[str, Any]
    seed: int
    energy: EnergySpec
    scheme: SchemeConfig
    lam: float | None = None
    L: float | None = None
    save_every: int = 1
    out_dir: str | None = None
    base_dir: Path | None = field(default=None, compare=False)

    @classmethod
    def from_dict(cls, doc: dict[str, Any], base_dir: Path | None = None) -> RunConfig:
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(doc) - TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown top-level config keys {sorted(unknown)}")
        try:
            dimension = int(doc["dimension"])
            particles = doc["particles"]
            count = int(particles["count"])
            init = copy.deepcopy(particles["init"])
            seed = int(particles.get("seed", 0))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad particles section: {exc}") from None
        if count < 1 or dimension < 1:
            raise ConfigError("particles.count and dimension must be >= 1")
        if not -(2**63) <= seed < 2**64:
            raise ConfigError("seed must fit in 64 bits")
        energy = EnergySpec.from_dict(doc.get("energy", {}))
        lam = doc.get("lambda")
        L = doc.get("L")
        scheme = _scheme_from(doc.get("scheme", {}), None if lam is None else float(lam))
        output = doc.get("output", {}) or {}
        try:
            return cls(
                dimension=dimension,
                count=count,
                init=init,
                seed=seed,
                energy=energy,
                scheme=scheme,
                lam=None if lam is None else float(lam),
                L=None if L is None else float(L),
                save_every=int(output.get("save_every", 1)),
                out_dir=output.get("out_dir"),
                base_dir=base_dir,
            )
        except WGFlowError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict[str, Any]:
        inner = self.scheme.inner
        doc = {
            "dimension": self.dimension,
            "particles": {"count": self.count, "init": copy.deepcopy(self.init), "seed": self.seed},
            "energy": self.energy.to_dict(),
            "scheme": {
                "kind": self.scheme.kind,
                "tau": _rational_text(self.scheme.tau),
                "t_final": _rational_text(self.scheme.t_final),
                "inner": {
                    "kind": inner.kind,
                    "tol": inner.tol,
                    "max_iters": inner.max_iters,
                    "descent_rate": inner.descent_rate,
                },
            },
            "lambda": self.lam,
            "L": self.L,
            "output": {"save_every": self.save_every},
        }
        if self.out_dir is not None:
            doc["output"]["out_dir"] = self.out_dir
        return doc

    def canonical(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def initial_ensemble(self) -> ParticleEnsemble:
        return generate_initial(self.init, self.seed, self.count, self.dimension, self.base_dir)


def _rational_text(value) -> str | float:
    if isinstance(value, Fraction):
        return format_rational(value)
    return float(value)


def _scheme_from(doc: dict[str, Any], lam: float | None) -> SchemeConfig:
    inner_doc = dict(doc.get("inner", {}) or {})
    try:
        rate = inner_doc.get("descent_rate", "auto")
        inner = InnerSolverConfig(
            kind=inner_doc.get("kind", "fixed_point"),
            tol=float(inner_doc.get("tol", 1e-10)),
            max_iters=int(inner_doc.get("max_iters", 10000)),
            descent_rate=rate if rate == "auto" else float(rate),
        )
        return SchemeConfig(
            kind=doc.get("kind", "trapezoid"),
            tau=_time_value(doc.get("tau", "1/10")),
            t_final=_time_value(doc.get("t_final", "1")),
            inner=inner,
            lam=lam,
        )
    except WGFlowError as exc:
        raise ConfigError(str(exc)) from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad scheme section: {exc}") from None


def _time_value(value):
    if isinstance(value, float):
        return value
    try:
        return parse_rational(value)
    except PlanError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return RunConfig.from_dict(doc, base_dir=path.parent)


def ensemble_digest(ensemble: ParticleEnsemble) -> str:
    data = np.ascontiguousarray(ensemble.positions, dtype="<f8").tobytes()
    shape = f"{ensemble.count}x{ensemble.dimension}".encode()
    return hashlib.sha256(shape + data).hexdigest()[:16]
