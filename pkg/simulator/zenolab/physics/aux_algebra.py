"""
Dense complex linear algebra over the small auxiliary Hilbert spaces.

Every slot of a direct-integral state lives in one of these d-dimensional
spaces. Conventions used everywhere in the package:

- inner products are conjugate-linear in the FIRST argument (``numpy.vdot``);
- hbar = 1, so Hamiltonian entries carry units of inverse time;
- exponentials of Hermitian matrices go through ``scipy.linalg.eigh``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg

from ..errors import NumericFailure, RejectedInputError

# Componentwise tolerances checked on construction
HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-10
PROJECTOR_TOL = 1e-12
RANK_TOL = 1e-10

# Variances this far below zero are rounding noise and get clamped
VARIANCE_FLOOR = 1e-12


def _frozen_array(values, ndim: int, what: str) -> np.ndarray:
    """Copy ``values`` into a read-only complex array of the given rank."""
    try:
        arr = np.array(values, dtype=complex)
    except (TypeError, ValueError) as e:
        raise RejectedInputError(f"{what}: entries are not numeric ({e})") from e
    if arr.ndim != ndim or arr.size == 0:
        raise RejectedInputError(f"{what}: expected a non-empty rank-{ndim} array, got shape {arr.shape}")
    if ndim == 2 and arr.shape[0] != arr.shape[1]:
        raise RejectedInputError(f"{what}: matrix must be square, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise RejectedInputError(f"{what}: entries must be finite")
    arr.setflags(write=False)
    return arr


def _max_abs(m: np.ndarray) -> float:
    return float(np.max(np.abs(m))) if m.size else 0.0


# =============================================================================
# Value types
# =============================================================================

@dataclass(frozen=True, eq=False)
class AuxState:
    """A vector h in one auxiliary space."""
    entries: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "entries", _frozen_array(self.entries, 1, "AuxState"))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def basis(cls, dim: int, index: int) -> "AuxState":
        """Computational basis vector |index> of a dim-dimensional space."""
        if dim < 1 or not 0 <= index < dim:
            raise RejectedInputError(f"basis index {index} out of range for dim {dim}")
        v = np.zeros(dim, dtype=complex)
        v[index] = 1.0
        return cls(v)

    def norm_squared(self) -> float:
        return float(np.vdot(self.entries, self.entries).real)

    def norm(self) -> float:
        return float(np.sqrt(self.norm_squared()))

    def scaled(self, c: complex) -> "AuxState":
        return AuxState(c * self.entries)

    def normalized(self) -> "AuxState":
        n = self.norm()
        if n == 0.0:
            raise RejectedInputError("cannot normalize the zero vector")
        return AuxState(self.entries / n)


@dataclass(frozen=True, eq=False)
class _SquareMatrix:
    entries: np.ndarray

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def apply(self, state: AuxState) -> AuxState:
        if state.dim != self.dim:
            raise RejectedInputError(f"operator dim {self.dim} does not match state dim {state.dim}")
        return AuxState(self.entries @ state.entries)


@dataclass(frozen=True, eq=False)
class HermitianOperator(_SquareMatrix):
    """Self-adjoint d x d matrix; used as a slot Hamiltonian."""

    def __post_init__(self):
        arr = _frozen_array(self.entries, 2, "HermitianOperator")
        err = _max_abs(arr - arr.conj().T)
        if err > HERMITIAN_TOL:
            raise RejectedInputError(f"HermitianOperator: not Hermitian (max |M - M^H| = {err:.3e})")
        object.__setattr__(self, "entries", arr)

    @classmethod
    def zero(cls, dim: int) -> "HermitianOperator":
        return cls(np.zeros((dim, dim), dtype=complex))

    @cached_property
    def spectrum(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues (ascending) and orthonormal eigenvectors as columns."""
        return linalg.eigh(self.entries)

    @property
    def norm(self) -> float:
        """Spectral norm (largest |eigenvalue|)."""
        return float(np.max(np.abs(self.spectrum[0])))


@dataclass(frozen=True, eq=False)
class UnitaryOperator(_SquareMatrix):
    """Unitary d x d matrix; a slot propagator V_t(tau)."""

    def __post_init__(self):
        arr = _frozen_array(self.entries, 2, "UnitaryOperator")
        err = _max_abs(arr.conj().T @ arr - np.eye(arr.shape[0]))
        if err > UNITARY_TOL:
            raise RejectedInputError(f"UnitaryOperator: not unitary (max |U^H U - I| = {err:.3e})")
        object.__setattr__(self, "entries", arr)

    @classmethod
    def identity(cls, dim: int) -> "UnitaryOperator":
        return cls(np.eye(dim, dtype=complex))

    def adjoint(self) -> "UnitaryOperator":
        return UnitaryOperator(self.entries.conj().T)

    def then(self, later: "UnitaryOperator") -> "UnitaryOperator":
        """Time-ordered composition: apply ``self`` first, then ``later``."""
        return UnitaryOperator(later.entries @ self.entries)


@dataclass(frozen=True, eq=False)
class Projector(_SquareMatrix):
    """Orthogonal projector: idempotent, Hermitian, integer trace."""

    def __post_init__(self):
        arr = _frozen_array(self.entries, 2, "Projector")
        herm = _max_abs(arr - arr.conj().T)
        if herm > PROJECTOR_TOL:
            raise RejectedInputError(f"Projector: not Hermitian (max |P - P^H| = {herm:.3e})")
        idem = _max_abs(arr @ arr - arr)
        if idem > PROJECTOR_TOL:
            raise RejectedInputError(f"Projector: not idempotent (max |PP - P| = {idem:.3e})")
        trace = np.trace(arr)
        rank = int(round(trace.real))
        if abs(trace - rank) > RANK_TOL:
            raise RejectedInputError(f"Projector: trace {trace} is not an integer rank")
        object.__setattr__(self, "entries", arr)

    @property
    def rank(self) -> int:
        return int(round(np.trace(self.entries).real))

    @classmethod
    def identity(cls, dim: int) -> "Projector":
        return cls(np.eye(dim, dtype=complex))

    @classmethod
    def basis(cls, dim: int, index: int) -> "Projector":
        return cls.from_vector(AuxState.basis(dim, index))

    @classmethod
    def from_vector(cls, v: AuxState) -> "Projector":
        """Rank-1 projector |v><v| / ||v||^2."""
        n2 = v.norm_squared()
        if n2 == 0.0:
            raise RejectedInputError("Projector.from_vector: zero vector")
        return cls(np.outer(v.entries, v.entries.conj()) / n2)

    def conjugated(self, u: UnitaryOperator) -> "Projector":
        """U P U^dagger."""
        if u.dim != self.dim:
            raise RejectedInputError(f"unitary dim {u.dim} does not match projector dim {self.dim}")
        return Projector(u.entries @ self.entries @ u.entries.conj().T)

    def range_basis(self) -> list[AuxState]:
        """Orthonormal vectors spanning the range, in eigensolver index order."""
        w, q = linalg.eigh(self.entries)
        return [AuxState(q[:, j]) for j in range(self.dim) if w[j] > 0.5]


# =============================================================================
# Operations
# =============================================================================

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)


def as_hermitian(h: HermitianOperator | np.ndarray) -> HermitianOperator:
    """Accept either a validated operator or a raw matrix (validated here)."""
    return h if isinstance(h, HermitianOperator) else HermitianOperator(h)


def _check_dims(*dims: int) -> None:
    if len(set(dims)) != 1:
        raise RejectedInputError(f"dimension mismatch: {dims}")


def inner_product(x: AuxState, y: AuxState) -> complex:
    """<x, y>, conjugate-linear in x."""
    _check_dims(x.dim, y.dim)
    return complex(np.vdot(x.entries, y.entries))


def norm_squared(v: AuxState) -> float:
    return v.norm_squared()


def expectation(h_op: HermitianOperator, h: AuxState) -> float:
    """<h, H h> / ||h||^2."""
    h_op = as_hermitian(h_op)
    _check_dims(h_op.dim, h.dim)
    n2 = h.norm_squared()
    if n2 == 0.0:
        raise RejectedInputError("expectation: zero-norm state")
    return float(np.vdot(h.entries, h_op.entries @ h.entries).real) / n2


def variance(h_op: HermitianOperator, h: AuxState) -> float:
    """Dispersion <h,H^2 h>/||h||^2 - <h,H h>^2/||h||^4 of H in the state h."""
    h_op = as_hermitian(h_op)
    _check_dims(h_op.dim, h.dim)
    n2 = h.norm_squared()
    if n2 == 0.0:
        raise RejectedInputError("variance: zero-norm state")
    hv = h_op.entries @ h.entries
    second = float(np.vdot(h.entries, h_op.entries @ hv).real) / n2
    first = float(np.vdot(h.entries, hv).real) / n2
    var = second - first * first
    if var < 0.0:
        # Tolerance scales with <H^2> so rounding at large ||H|| is not misreported
        if var < -VARIANCE_FLOOR * max(1.0, second):
            raise NumericFailure(f"variance came out negative: {var:.3e}")
        var = 0.0
    return var


def hermitian_exponential(h_op: HermitianOperator | np.ndarray, dt: float) -> UnitaryOperator:
    """exp(-i dt H) from the eigendecomposition of H."""
    h_op = as_hermitian(h_op)
    if dt == 0:
        return UnitaryOperator.identity(h_op.dim)
    w, q = h_op.spectrum
    return UnitaryOperator((q * np.exp(-1j * dt * w)) @ q.conj().T)


def truncated_propagator(h_op: HermitianOperator | np.ndarray, dt: float) -> np.ndarray:
    """I - i dt H - (dt^2/2) H^2; the second-order expansion, not unitary."""
    h_op = as_hermitian(h_op)
    m = h_op.entries
    return np.eye(h_op.dim) - 1j * dt * m - 0.5 * dt * dt * (m @ m)


def child_seed(root: int, *key: int) -> int:
    """Derive an independent 64-bit seed for one consumer of the root seed."""
    seq = np.random.SeedSequence(entropy=root, spawn_key=tuple(key))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    # Standard complex Gaussian: E|z|^2 = 1
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_hermitian(dim: int, seed: int) -> HermitianOperator:
    """(A + A^dagger)/2 for a standard complex Gaussian A; deterministic in seed."""
    if dim < 1:
        raise RejectedInputError(f"random_hermitian: dim must be >= 1, got {dim}")
    a = _complex_gaussian(_rng(seed), (dim, dim))
    return HermitianOperator((a + a.conj().T) / 2.0)


def random_state(dim: int, seed: int) -> AuxState:
    """Unit vector with standard complex Gaussian direction."""
    if dim < 1:
        raise RejectedInputError(f"random_state: dim must be >= 1, got {dim}")
    return AuxState(_complex_gaussian(_rng(seed), dim)).normalized()


def pauli_combination(x: float = 0.0, y: float = 0.0, z: float = 0.0, identity: float = 0.0) -> HermitianOperator:
    """x*X + y*Y + z*Z + identity*I on a 2-dimensional space."""
    return HermitianOperator(x * PAULI_X + y * PAULI_Y + z * PAULI_Z + identity * IDENTITY_2)
