"""Pydantic schemas for data contracts."""
import math
from typing import Any, Callable, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

# A complex amplitude in JSON: a real number or a [re, im] pair
Amplitude = Union[float, tuple[float, float]]


def to_complex(a: Amplitude) -> complex:
    if isinstance(a, (tuple, list)):
        return complex(a[0], a[1])
    return complex(a)


# ============================================================================
# Experiment Config
# ============================================================================

class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridSpec(_Strict):
    """Uniform time grid; sweeps use n_list, single runs use n."""
    t_start: float = 0.0
    span: float = Field(..., gt=0, description="Total span T of the grid")
    n: Optional[int] = Field(None, ge=1)
    n_list: Optional[list[int]] = None

    @field_validator("n_list")
    @classmethod
    def _strictly_increasing(cls, v: Optional[list[int]]) -> Optional[list[int]]:
        if v is None:
            return v
        if not v:
            raise ValueError("n_list must not be empty")
        if any(n < 1 for n in v):
            raise ValueError("n_list entries must be positive")
        if len(set(v)) != len(v):
            raise ValueError("n_list has duplicate entries")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("n_list must be strictly increasing")
        return v


class PauliCoefficients(_Strict):
    """a*X + b*Y + c*Z + e*I with real coefficients."""
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    identity: float = 0.0


class HamiltonianSpec(_Strict):
    kind: Literal["pauli", "diagonal", "random"]
    pauli: Optional[PauliCoefficients] = None
    diagonal: Optional[list[float]] = None
    per_slot: bool = Field(default=False, description="random only: independent H at every slot")


class StateSpec(_Strict):
    kind: Literal["basis", "amplitudes", "random", "schroedinger-path"]
    index: Optional[int] = Field(None, ge=0)
    amplitudes: Optional[list[Amplitude]] = None
    per_slot: bool = Field(default=False, description="random only: independent state at every slot")


class FamilySpec(_Strict):
    kind: Literal["basis", "vectors"] = "basis"
    vectors: Optional[list[list[Amplitude]]] = None


class Tolerances(_Strict):
    consistency: float = Field(default=1e-10, ge=0)
    identity: float = Field(default=1e-9, ge=0)


class OutputSpec(_Strict):
    dir: Optional[str] = None


class ExperimentConfig(_Strict):
    """One experiment run; the echo of this model reproduces the run."""
    experiment: Literal["zeno-sweep", "consistency", "stability", "evolve-check"]
    dimension: int = Field(..., ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    grid: GridSpec
    hamiltonian: Optional[HamiltonianSpec] = None
    state: Optional[StateSpec] = None
    family: Optional[FamilySpec] = None
    chain_family: Optional[FamilySpec] = None
    probabilities: Optional[list[float]] = None
    histories: Optional[list[list[int]]] = None
    history: Optional[list[int]] = None
    steps: list[int] = Field(default_factory=lambda: [1, 2, 3])
    dtau: float = Field(default=0.01, gt=0)
    halvings: int = Field(default=3, ge=1)
    tolerances: Tolerances = Field(default_factory=Tolerances)
    output: OutputSpec = Field(default_factory=OutputSpec)

    @field_validator("probabilities")
    @classmethod
    def _probabilities_sum_to_one(cls, v: Optional[list[float]]) -> Optional[list[float]]:
        if v is None:
            return v
        if not v:
            raise ValueError("probabilities must not be empty")
        if any(p < 0 for p in v):
            raise ValueError("probabilities must be non-negative")
        total = math.fsum(v)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {total!r}, expected 1")
        return v

    @field_validator("steps")
    @classmethod
    def _non_negative_steps(cls, v: list[int]) -> list[int]:
        if not v or any(m < 0 for m in v):
            raise ValueError("steps must be a non-empty list of non-negative integers")
        return v


# ============================================================================
# Diagnostics
# ============================================================================

class Diagnostic(BaseModel):
    """One validation problem, naming the offending field."""
    field: str
    message: str

    def __str__(self) -> str:
        return f"{self.field}: {self.message}"


def diagnostics_from_error(error: ValidationError) -> list[Diagnostic]:
    out = []
    for err in error.errors():
        field = ".".join(str(part) for part in err["loc"]) or "config"
        out.append(Diagnostic(field=field, message=err["msg"]))
    return out


# Largest normalized overlap accepted between family vectors
ORTHOGONALITY_TOL = 1e-12

AddDiagnostic = Callable[[str, str], None]


def _family_size(fam: Optional[FamilySpec], d: int, name: str, add: AddDiagnostic) -> Optional[int]:
    """Alternatives per slot of a family spec; None when the vectors are unusable."""
    if fam is None or fam.kind == "basis":
        return d
    if not fam.vectors:
        add(f"{name}.vectors", "vectors kind needs at least one vector")
        return None
    usable = True
    for i, v in enumerate(fam.vectors):
        if len(v) != d:
            add(f"{name}.vectors.{i}", f"{len(v)} entries for dimension {d}")
            usable = False
    if not usable:
        return None
    vecs = np.array([[to_complex(a) for a in v] for v in fam.vectors], dtype=complex)
    norms = np.linalg.norm(vecs, axis=1)
    for i in np.flatnonzero(norms == 0.0):
        add(f"{name}.vectors.{i}", "vector must be nonzero")
    if np.any(norms == 0.0):
        return None
    unit = vecs / norms[:, None]
    gram = unit.conj() @ unit.T
    overlap = float(np.max(np.abs(gram - np.eye(len(unit)))))
    if overlap > ORTHOGONALITY_TOL:
        add(f"{name}.vectors", f"vectors must be mutually orthogonal (largest overlap {overlap:.3g})")
        return None
    # the complement projector is appended when the vectors do not span
    return len(unit) + (1 if len(unit) < d else 0)


def _index_diagnostics(field: str, alpha: list[int], alternatives: Optional[int], add: AddDiagnostic) -> None:
    if alternatives is None:
        return
    for k, a in enumerate(alpha):
        if not 0 <= a < alternatives:
            add(field, f"entry {a} at slot {k} outside [0, {alternatives})")


def cross_field_diagnostics(cfg: ExperimentConfig) -> list[Diagnostic]:
    """Every violation that involves more than one field."""
    out: list[Diagnostic] = []
    d = cfg.dimension

    def add(field: str, message: str) -> None:
        out.append(Diagnostic(field=field, message=message))

    if cfg.experiment == "zeno-sweep":
        if cfg.grid.n_list is None:
            add("grid.n_list", "zeno-sweep needs grid.n_list")
    elif cfg.grid.n is None:
        add("grid.n", f"{cfg.experiment} needs grid.n")

    dynamic = cfg.experiment in ("zeno-sweep", "stability", "evolve-check")
    if dynamic and cfg.hamiltonian is None:
        add("hamiltonian", f"{cfg.experiment} needs a hamiltonian")
    if dynamic and cfg.state is None:
        add("state", f"{cfg.experiment} needs a state")

    h = cfg.hamiltonian
    if h is not None:
        if h.kind == "pauli":
            if d != 2:
                add("hamiltonian.kind", f"pauli Hamiltonians need dimension 2, got {d}")
            if h.pauli is None:
                add("hamiltonian.pauli", "pauli kind needs coefficients")
        elif h.kind == "diagonal":
            if h.diagonal is None:
                add("hamiltonian.diagonal", "diagonal kind needs entries")
            elif len(h.diagonal) != d:
                add("hamiltonian.diagonal", f"{len(h.diagonal)} entries for dimension {d}")

    s = cfg.state
    if s is not None:
        if s.index is not None and s.index >= d:
            add("state.index", f"basis index {s.index} out of range for dimension {d}")
        if s.kind == "basis" and s.index is None:
            add("state.index", "basis kind needs an index")
        if s.kind == "amplitudes" and s.amplitudes is None:
            add("state.amplitudes", "amplitudes kind needs amplitudes")
        if s.amplitudes is not None:
            if len(s.amplitudes) != d:
                add("state.amplitudes", f"{len(s.amplitudes)} entries for dimension {d}")
            elif all(to_complex(a) == 0 for a in s.amplitudes):
                add("state.amplitudes", "state must be nonzero")

    alternatives = _family_size(cfg.family, d, "family", add)
    _family_size(cfg.chain_family, d, "chain_family", add)

    n = cfg.grid.n
    if cfg.experiment == "consistency":
        if cfg.probabilities is None:
            add("probabilities", "consistency needs probabilities")
        elif cfg.histories is None and alternatives is not None and n is not None:
            available = alternatives ** n
            if len(cfg.probabilities) > available:
                add("probabilities", f"{len(cfg.probabilities)} probabilities but only {available} histories")
    if cfg.histories is not None:
        if cfg.probabilities is None or len(cfg.histories) != len(cfg.probabilities):
            add("histories", "histories must align one-to-one with probabilities")
        if n is not None and any(len(h) != n for h in cfg.histories):
            add("histories", f"every history needs {n} entries")
        for i, h in enumerate(cfg.histories):
            _index_diagnostics(f"histories.{i}", h, alternatives, add)
    if cfg.history is not None:
        if n is not None and len(cfg.history) != n:
            add("history", f"history needs {n} entries, got {len(cfg.history)}")
        _index_diagnostics("history", cfg.history, alternatives, add)

    if cfg.experiment == "stability" and cfg.grid.n is not None and cfg.grid.n < 2:
        add("grid.n", "stability needs at least 2 slots")
    return out


# ============================================================================
# Results
# ============================================================================

class ZenoRecord(BaseModel):
    """One row of a Zeno sweep."""
    n: int
    dt: float
    s_exact: float = Field(..., description="|<U(dt) phi, phi>|^2 with exact propagators")
    s_pred: float = Field(..., description="Second-order prediction, reported raw")
    deficit_exact: float
    prediction_error: float
    flag_out_of_validity: bool


# CSV header for zeno-sweep records, in order
ZENO_COLUMNS = {
    "n": "n",
    "dt": "dt",
    "s_exact": "S_exact",
    "s_pred": "S_pred",
    "deficit_exact": "deficit_exact",
    "prediction_error": "prediction_error",
    "flag_out_of_validity": "flag_out_of_validity",
}


class SlopeFit(BaseModel):
    """Least-squares line through (ln x, ln y)."""
    slope: float
    intercept: float
    r_squared: float = Field(..., ge=0, le=1)
    points: int = Field(..., ge=3)


class StabilityReport(BaseModel):
    """Forward-difference Schroedinger residuals r_k, k = 0..n-2."""
    residuals: list[float]
    max_residual: float
    dt: float


class RunSummary(BaseModel):
    """Everything a run produced besides the records CSV."""
    version: str
    experiment: str
    seed: int
    config: dict[str, Any]
    results: dict[str, Any]
    duration_seconds: float


def validate_config(data: Any) -> tuple[Optional[ExperimentConfig], list[Diagnostic]]:
    """Schema plus cross-field validation; the config is returned only when clean."""
    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        return None, diagnostics_from_error(e)
    diagnostics = cross_field_diagnostics(cfg)
    return (None if diagnostics else cfg), diagnostics
