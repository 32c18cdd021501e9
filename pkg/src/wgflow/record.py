"""Per-step trajectory log and its CSV form.

Row ``n`` (1-based) describes the state after step ``n``. The initial energy
and gradient norm live in the metadata, so ``energies``/``grad_norms`` expose
the full ``n = 0..N`` sequences that the stability checks consume.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ensemble import format_float
from .errors import ConfigError

COLUMNS = ("step", "t", "energy", "grad_norm", "step_displacement", "residual", "inner_iterations")


@dataclass
class TrajectoryRecord:
    tau: float
    scheme: str
    energy0: float
    grad_norm0: float
    spec_digest: str = ""
    lam: float | None = None
    L: float | None = None
    tol: float | None = None
    complete: bool = True
    descent_rate: float | None = None
    steps: list[int] = field(default_factory=list)
    times: list[float] = field(default_factory=list)
    energy: list[float] = field(default_factory=list)
    grad_norm: list[float] = field(default_factory=list)
    step_displacement: list[float] = field(default_factory=list)
    residual: list[float] = field(default_factory=list)
    inner_iterations: list[int] = field(default_factory=list)

    def append(self, step, t, energy, grad_norm, displacement, residual, iterations) -> None:
        self.steps.append(int(step))
        self.times.append(float(t))
        self.energy.append(float(energy))
        self.grad_norm.append(float(grad_norm))
        self.step_displacement.append(float(displacement))
        self.residual.append(float(residual))
        self.inner_iterations.append(int(iterations))

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def energies(self) -> np.ndarray:
        """phi_0 .. phi_N."""
        return np.array([self.energy0] + self.energy)

    @property
    def grad_norms(self) -> np.ndarray:
        """gamma_0 .. gamma_N."""
        return np.array([self.grad_norm0] + self.grad_norm)

    @property
    def displacements(self) -> np.ndarray:
        """delta_0 .. delta_{N-1}, delta_j = |X_{j+1} - X_j|."""
        return np.array(self.step_displacement)

    @property
    def gradient_drop(self) -> np.ndarray:
        """gamma_n^2 - gamma_{n+1}^2 per step."""
        g2 = self.grad_norms**2
        return g2[:-1] - g2[1:]

    def metadata(self) -> dict[str, str]:
        meta = {
            "tau": format_float(self.tau),
            "scheme": self.scheme,
            "spec_digest": self.spec_digest,
            "energy0": format_float(self.energy0),
            "grad_norm0": format_float(self.grad_norm0),
            "complete": "true" if self.complete else "false",
        }
        for key, value in (("lambda", self.lam), ("L", self.L), ("tol", self.tol)):
            if value is not None:
                meta[key] = format_float(value)
        return meta

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            for key, value in self.metadata().items():
                fh.write(f"# {key}={value}\n")
            fh.write(",".join(COLUMNS) + "\n")
            for k in range(len(self)):
                fh.write(
                    ",".join(
                        [
                            str(self.steps[k]),
                            format_float(self.times[k]),
                            format_float(self.energy[k]),
                            format_float(self.grad_norm[k]),
                            format_float(self.step_displacement[k]),
                            format_float(self.residual[k]),
                            str(self.inner_iterations[k]),
                        ]
                    )
                    + "\n"
                )

    @classmethod
    def from_csv(cls, path: str | Path) -> TrajectoryRecord:
        meta: dict[str, str] = {}
        rows: list[list[str]] = []
        header = None
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    key, _, value = line[1:].strip().partition("=")
                    meta[key.strip()] = value.strip()
                elif header is None:
                    header = tuple(line.split(","))
                else:
                    rows.append(line.split(","))
        if header != COLUMNS:
            raise ConfigError(f"{path}: expected header {','.join(COLUMNS)}")
        missing = {"tau", "scheme", "energy0", "grad_norm0"} - set(meta)
        if missing:
            raise ConfigError(f"{path}: missing metadata {sorted(missing)}")

        def opt(key):
            return float(meta[key]) if key in meta else None

        rec = cls(
            tau=float(meta["tau"]),
            scheme=meta["scheme"],
            energy0=float(meta["energy0"]),
            grad_norm0=float(meta["grad_norm0"]),
            spec_digest=meta.get("spec_digest", ""),
            lam=opt("lambda"),
            L=opt("L"),
            tol=opt("tol"),
            complete=meta.get("complete", "true") == "true",
        )
        for lineno, r in enumerate(rows):
            if len(r) != len(COLUMNS):
                raise ConfigError(f"{path}: data row {lineno + 1} has {len(r)} fields")
            rec.append(int(r[0]), float(r[1]), float(r[2]), float(r[3]), float(r[4]), float(r[5]), int(r[6]))
        return rec
