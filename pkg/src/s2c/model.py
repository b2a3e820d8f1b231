"""Plant and specification data types, problem-file I/O, and D2C conversion."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np

# Conversion errors out above this 2-norm condition number of (A_d + I)
# rather than silently degrading.
D2C_COND_CAP = 1e8

# 2% settling of a first-order envelope: 1 - exp(-a*t) = 0.98 at t = 3.9/a.
SETTLING_TO_DECAY = 3.9


class PlantError(ValueError):
    """Malformed, inconsistent, or out-of-domain plant data."""


class SpecError(ValueError):
    """Specification values violate their invariants."""


class Priority(str, Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"
    CRITICAL = "critical"


_PRIORITY_ORDER = {p: i for i, p in enumerate(Priority)}


def priority_rank(p: Priority) -> int:
    return _PRIORITY_ORDER[p]


def _as_matrix(rows, name: str) -> np.ndarray:
    try:
        M = np.array(rows, dtype=float)
    except (TypeError, ValueError) as exc:
        raise PlantError(f"{name} is not a numeric matrix: {exc}") from None
    if M.ndim != 2:
        raise PlantError(f"{name} must be a 2-D matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise PlantError(f"{name} contains non-finite entries")
    M.setflags(write=False)
    return M


@dataclass(frozen=True)
class PlantModel:
    """State-space plant with disturbance and regulated-output channels.

    Continuous dynamics: dx = A x + B u + E w, z = Cz x + Dz u.
    E is also known as B1, Cz as C1, and Dz as D12 in benchmark
    nomenclature. `Cy` is an optional measured-output map used only by
    output-feedback analysis.
    """

    name: str
    A: np.ndarray
    B: np.ndarray
    E: np.ndarray
    Cz: np.ndarray
    Dz: np.ndarray
    domain: str = "continuous"
    Ts: Optional[float] = None
    Cy: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "A", _as_matrix(self.A, "A"))
        object.__setattr__(self, "B", _as_matrix(self.B, "B"))
        object.__setattr__(self, "E", _as_matrix(self.E, "E"))
        object.__setattr__(self, "Cz", _as_matrix(self.Cz, "Cz"))
        object.__setattr__(self, "Dz", _as_matrix(self.Dz, "Dz"))
        if self.Cy is not None:
            object.__setattr__(self, "Cy", _as_matrix(self.Cy, "Cy"))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise PlantError(f"A must be square, got {self.A.shape}")
        if self.B.shape[0] != n:
            raise PlantError(f"B has {self.B.shape[0]} rows, expected {n}")
        if self.E.shape[0] != n:
            raise PlantError(f"E has {self.E.shape[0]} rows, expected {n}")
        if self.Cz.shape[1] != n:
            raise PlantError(f"Cz has {self.Cz.shape[1]} cols, expected {n}")
        if self.Dz.shape != (self.Cz.shape[0], self.B.shape[1]):
            raise PlantError(
                f"Dz shape {self.Dz.shape} inconsistent with Cz/B "
                f"({self.Cz.shape[0]}x{self.B.shape[1]} expected)"
            )
        if self.Cy is not None and self.Cy.shape[1] != n:
            raise PlantError(f"Cy has {self.Cy.shape[1]} cols, expected {n}")
        if self.B.shape[1] < 1 or self.E.shape[1] < 1 or self.Cz.shape[0] < 1:
            raise PlantError("B, E, and Cz must each have at least one channel")
        if self.domain not in ("continuous", "discrete"):
            raise PlantError(f"unknown domain {self.domain!r}")
        if self.domain == "discrete":
            if self.Ts is None or not (self.Ts > 0):
                raise PlantError("discrete plant requires Ts > 0")
        elif self.Ts is not None:
            raise PlantError("Ts only applies to discrete plants")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def w(self) -> int:
        return self.E.shape[1]

    @property
    def z(self) -> int:
        return self.Cz.shape[0]


@dataclass(frozen=True)
class SpecEntry:
    """A single performance specification: target value, slack, priority."""

    target: float
    slack: float = 0.0
    priority: Priority = Priority.MEDIUM

    def __post_init__(self):
        if not np.isfinite(self.target):
            raise SpecError("spec target must be finite")
        if not (self.slack >= 0):
            raise SpecError("spec slack must be nonnegative")
        object.__setattr__(self, "priority", Priority(self.priority))


@dataclass(frozen=True)
class SpecSet:
    """Named performance specifications plus the gamma floor.

    `hinf_min` is the guardrail floor on the certified gamma; it starts at
    zero and is only ever raised (capped at 0.9 * hinf.target).
    """

    hinf: SpecEntry
    settling_time: SpecEntry
    overshoot: SpecEntry
    hinf_min: float = 0.0
    decay_rate: Optional[float] = None

    def __post_init__(self):
        if not (self.hinf.target > 0):
            raise SpecError("hinf target must be positive")
        if not (self.settling_time.target > 0):
            raise SpecError("settling time target must be positive")
        if not (0 <= self.overshoot.target < 1):
            raise SpecError("overshoot target must lie in [0, 1)")
        if not (0 <= self.hinf_min <= 0.9 * self.hinf.target + 1e-12):
            raise SpecError(
                f"gamma floor {self.hinf_min} outside [0, 0.9*{self.hinf.target}]"
            )
        if self.decay_rate is not None and not (self.decay_rate >= 0):
            raise SpecError("decay rate must be nonnegative")

    @property
    def alpha(self) -> float:
        """Decay-rate bound: explicit override, else derived from settling."""
        if self.decay_rate is not None:
            return self.decay_rate
        return SETTLING_TO_DECAY / self.settling_time.target

    def with_floor(self, floor: float) -> "SpecSet":
        return replace(self, hinf_min=floor)


def alias_matrices(p: PlantModel) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return the (E, Cz, Dz) triple used by synthesis (B1, C1, D12 aliases)."""
    return p.E, p.Cz, p.Dz


def tustin_d2c(p: PlantModel) -> PlantModel:
    """Convert a discrete plant to continuous time by the bilinear map.

    A_c = (2/Ts)(A_d - I)(A_d + I)^-1, B_c = (2/Ts)(A_d + I)^-1 B_d,
    C_c = C_d (A_d + I)^-1, D_c = D_d - C_d (A_d + I)^-1 B_d.
    Both input channels (B and E) get the B_c transform; Cz/Dz get the
    output-side transforms. Raises PlantError when cond(A_d + I) exceeds
    the cap (ill-conditioned conversion).
    """
    if p.domain != "discrete":
        raise PlantError("tustin_d2c requires a discrete plant")
    n = p.n
    Ad = p.A
    M = Ad + np.eye(n)
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[-1] <= 0 or sv[0] / sv[-1] > D2C_COND_CAP:
        cond = np.inf if sv[-1] <= 0 else sv[0] / sv[-1]
        raise PlantError(
            f"(A_d + I) is near-singular: cond = {cond:.3e} exceeds cap {D2C_COND_CAP:.0e}"
        )
    Minv = np.linalg.inv(M)
    Ts = p.Ts
    Ac = (2.0 / Ts) * (Ad - np.eye(n)) @ Minv
    Bc = (2.0 / Ts) * Minv @ p.B
    Ec = (2.0 / Ts) * Minv @ p.E
    Czc = p.Cz @ Minv
    Dzc = p.Dz - p.Cz @ Minv @ p.B
    Cyc = p.Cy @ Minv if p.Cy is not None else None
    return PlantModel(
        name=p.name, A=Ac, B=Bc, E=Ec, Cz=Czc, Dz=Dzc,
        domain="continuous", Ts=None, Cy=Cyc,
    )


def plant_to_dict(p: PlantModel) -> dict:
    d = {
        "name": p.name,
        "domain": p.domain,
        "A": p.A.tolist(),
        "B": p.B.tolist(),
        "E": p.E.tolist(),
        "Cz": p.Cz.tolist(),
        "Dz": p.Dz.tolist(),
    }
    if p.Ts is not None:
        d["Ts"] = p.Ts
    if p.Cy is not None:
        d["Cy"] = p.Cy.tolist()
    return d


def plant_from_dict(d: dict) -> PlantModel:
    if not isinstance(d, dict):
        raise PlantError("plant document must be a JSON object")
    missing = [k for k in ("name", "domain", "A", "B", "E", "Cz", "Dz") if k not in d]
    if missing:
        raise PlantError(f"plant document missing keys: {missing}")
    return PlantModel(
        name=str(d["name"]),
        A=d["A"], B=d["B"], E=d["E"], Cz=d["Cz"], Dz=d["Dz"],
        domain=d["domain"],
        Ts=d.get("Ts"),
        Cy=d.get("Cy"),
    )


def load_plant(path) -> PlantModel:
    """Load and validate a plant from a JSON problem file."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PlantError(f"cannot parse plant file {path}: {exc}") from None
    return plant_from_dict(doc)


def write_plant(p: PlantModel, path) -> None:
    """Write a plant as a JSON problem file (round-trips bit-exactly)."""
    Path(path).write_text(json.dumps(plant_to_dict(p), indent=2) + "\n")
