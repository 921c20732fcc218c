"""
Discretized direct-integral space.

A state is a sequence of auxiliary-space vectors on a uniform time grid
(a "virtual history"). The evolution U(tau) applies a unitary V_{t_k}(tau)
to every slot and translates along the t axis by tau = m*dt. Two boundary
treatments are offered for the translation on a finite grid:

- ``cyclic``: slot indices wrap modulo n. Keeps U unitary and makes the
  one-parameter group law exact.
- ``relabel``: the evolved content stays associated with its original slot.
  This is the identification used by every survival-probability computation.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Literal

import numpy as np

from ..errors import BranchCapError, RejectedInputError
from .aux_algebra import AuxState, HermitianOperator, UnitaryOperator, hermitian_exponential

Boundary = Literal["cyclic", "relabel"]
Scheme = Literal["forward", "central"]


# =============================================================================
# Domain types
# =============================================================================

@dataclass(frozen=True)
class TimeGrid:
    """n slots spread uniformly over [t_start, t_start + span)."""
    t_start: float
    n: int
    span: float

    def __post_init__(self):
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 1:
            raise RejectedInputError(f"TimeGrid: n must be a positive integer, got {self.n!r}")
        if not np.isfinite(self.span) or self.span <= 0:
            raise RejectedInputError(f"TimeGrid: span must be positive, got {self.span!r}")
        if not np.isfinite(self.t_start):
            raise RejectedInputError("TimeGrid: t_start must be finite")
        object.__setattr__(self, "n", int(self.n))

    @property
    def dt(self) -> float:
        return self.span / self.n

    @property
    def times(self) -> np.ndarray:
        return self.t_start + np.arange(self.n) * self.dt

    def time(self, k: int) -> float:
        return self.t_start + k * self.dt


@dataclass(frozen=True, eq=False)
class DirectIntegralState:
    """phi = (h_{t_1}, ..., h_{t_n}) with every slot of the same dimension."""
    grid: TimeGrid
    slots: tuple[AuxState, ...]

    def __post_init__(self):
        slots = tuple(self.slots)
        if len(slots) != self.grid.n:
            raise RejectedInputError(f"DirectIntegralState: {len(slots)} slots for a grid of {self.grid.n}")
        dims = {s.dim for s in slots}
        if len(dims) != 1:
            raise RejectedInputError(f"DirectIntegralState: slot dimensions differ: {sorted(dims)}")
        object.__setattr__(self, "slots", slots)

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def dim(self) -> int:
        return self.slots[0].dim

    @classmethod
    def constant(cls, grid: TimeGrid, h: AuxState) -> "DirectIntegralState":
        return cls(grid, (h,) * grid.n)

    @classmethod
    def from_array(cls, grid: TimeGrid, values: np.ndarray) -> "DirectIntegralState":
        """Build from an (n, d) array, one row per slot."""
        values = np.asarray(values, dtype=complex)
        if values.ndim != 2:
            raise RejectedInputError(f"expected an (n, d) array, got shape {values.shape}")
        return cls(grid, tuple(AuxState(row) for row in values))

    @cached_property
    def array(self) -> np.ndarray:
        """Slots stacked as a read-only (n, d) array."""
        arr = np.stack([s.entries for s in self.slots])
        arr.setflags(write=False)
        return arr

    def slot_norms(self) -> np.ndarray:
        return np.linalg.norm(self.array, axis=1)

    def product_vector(self, cap: int) -> np.ndarray:
        """Kronecker product of the slots, the state as a vector of the history space."""
        size = self.dim ** self.n
        if size > cap:
            raise BranchCapError("product-space dimension", size, cap)
        out = np.ones(1, dtype=complex)
        for s in self.slots:
            out = np.kron(out, s.entries)
        return out


@dataclass(frozen=True, eq=False)
class GeneratorSpec:
    """Per-slot Hamiltonians H_{t_k}."""
    hamiltonians: tuple[HermitianOperator, ...]

    def __post_init__(self):
        hs = tuple(self.hamiltonians)
        if not hs:
            raise RejectedInputError("GeneratorSpec: needs at least one slot")
        dims = {h.dim for h in hs}
        if len(dims) != 1:
            raise RejectedInputError(f"GeneratorSpec: Hamiltonian dimensions differ: {sorted(dims)}")
        object.__setattr__(self, "hamiltonians", hs)

    @property
    def n(self) -> int:
        return len(self.hamiltonians)

    @property
    def dim(self) -> int:
        return self.hamiltonians[0].dim

    @classmethod
    def constant(cls, h_op: HermitianOperator, n: int) -> "GeneratorSpec":
        return cls((h_op,) * n)

    @classmethod
    def zero(cls, dim: int, n: int) -> "GeneratorSpec":
        return cls.constant(HermitianOperator.zero(dim), n)

    @classmethod
    def sampled(cls, fn: Callable[[float], HermitianOperator], grid: TimeGrid) -> "GeneratorSpec":
        """H_{t_k} = fn(t_k) at every grid time."""
        return cls(tuple(fn(float(t)) for t in grid.times))

    @cached_property
    def is_time_independent(self) -> bool:
        first = self.hamiltonians[0]
        return all(h is first or np.array_equal(h.entries, first.entries) for h in self.hamiltonians)

    @cached_property
    def matrices(self) -> np.ndarray:
        """Hamiltonians stacked as an (n, d, d) array."""
        return np.stack([h.entries for h in self.hamiltonians])


# =============================================================================
# Checks
# =============================================================================

def _check_same_space(phi: DirectIntegralState, xi: DirectIntegralState) -> None:
    if phi.grid != xi.grid:
        raise RejectedInputError(f"grid mismatch: {phi.grid} vs {xi.grid}")
    if phi.dim != xi.dim:
        raise RejectedInputError(f"dimension mismatch: {phi.dim} vs {xi.dim}")


def check_generator(phi: DirectIntegralState, gen: GeneratorSpec) -> None:
    if gen.n != phi.n:
        raise RejectedInputError(f"generator has {gen.n} slots, state has {phi.n}")
    if gen.dim != phi.dim:
        raise RejectedInputError(f"generator dim {gen.dim} does not match state dim {phi.dim}")


# =============================================================================
# Operations
# =============================================================================

def integral_inner_product(phi: DirectIntegralState, xi: DirectIntegralState) -> complex:
    """sum_k <phi_k, xi_k> dt: the inner product of the direct-integral space (uniform measure)."""
    _check_same_space(phi, xi)
    overlaps = np.einsum("kd,kd->k", phi.array.conj(), xi.array)
    return complex(np.sum(overlaps) * phi.grid.dt)


def history_inner_product(phi: DirectIntegralState, xi: DirectIntegralState) -> complex:
    """prod_k <phi_k, xi_k>: the tensor-product scalar product of histories."""
    _check_same_space(phi, xi)
    overlaps = np.einsum("kd,kd->k", phi.array.conj(), xi.array)
    return complex(np.prod(overlaps))


def integral_norm(phi: DirectIntegralState) -> float:
    return float(np.sqrt(max(integral_inner_product(phi, phi).real, 0.0)))


def slot_propagator(gen: GeneratorSpec, k: int, m: int, dt: float) -> UnitaryOperator:
    """V_{t_k}(m*dt): single-step exponentials at slots k, k+1, ..., k+m-1 (mod n), time ordered."""
    if m < 0:
        raise RejectedInputError(f"step count must be >= 0, got {m}")
    if gen.is_time_independent:
        return hermitian_exponential(gen.hamiltonians[k % gen.n], m * dt)
    u = UnitaryOperator.identity(gen.dim)
    for j in range(m):
        u = u.then(hermitian_exponential(gen.hamiltonians[(k + j) % gen.n], dt))
    return u


def evolve_step(
    phi: DirectIntegralState,
    gen: GeneratorSpec,
    m: int,
    boundary: Boundary = "relabel",
) -> DirectIntegralState:
    """U(m*dt) phi: per-slot unitary followed by a translation of m slots."""
    if isinstance(m, bool) or int(m) != m or m < 0:
        raise RejectedInputError(f"evolve_step: m must be a non-negative integer, got {m!r}")
    if boundary not in ("cyclic", "relabel"):
        raise RejectedInputError(f"unknown boundary mode: {boundary!r}")
    check_generator(phi, gen)
    m = int(m)
    n = phi.n
    evolved = [slot_propagator(gen, k, m, phi.grid.dt).apply(h) for k, h in enumerate(phi.slots)]
    if boundary == "relabel":
        return DirectIntegralState(phi.grid, tuple(evolved))
    shifted: list[AuxState | None] = [None] * n
    for k, h in enumerate(evolved):
        shifted[(k + m) % n] = h
    return DirectIntegralState(phi.grid, tuple(shifted))


def apply_generator(
    phi: DirectIntegralState,
    gen: GeneratorSpec,
    scheme: Scheme = "forward",
) -> DirectIntegralState:
    """K phi = H phi - i d/dt phi, with a cyclic finite-difference stencil for d/dt."""
    check_generator(phi, gen)
    arr = phi.array
    dt = phi.grid.dt
    if scheme == "forward":
        if phi.n < 2:
            raise RejectedInputError("forward stencil needs at least 2 slots")
        deriv = (np.roll(arr, -1, axis=0) - arr) / dt
    elif scheme == "central":
        if phi.n < 3:
            raise RejectedInputError("central stencil needs at least 3 slots")
        deriv = (np.roll(arr, -1, axis=0) - np.roll(arr, 1, axis=0)) / (2.0 * dt)
    else:
        raise RejectedInputError(f"unknown finite-difference scheme: {scheme!r}")
    h_phi = np.einsum("kij,kj->ki", gen.matrices, arr)
    return DirectIntegralState.from_array(phi.grid, h_phi - 1j * deriv)


def _relabel_evolve(phi: DirectIntegralState, gen: GeneratorSpec, tau: float) -> DirectIntegralState:
    """U(tau) phi for arbitrary real tau under the relabel identification."""
    return DirectIntegralState(
        phi.grid,
        tuple(hermitian_exponential(h_op, tau).apply(h) for h_op, h in zip(gen.hamiltonians, phi.slots)),
    )


def generator_relation_check(phi: DirectIntegralState, gen: GeneratorSpec, dtau: float) -> float:
    """|| i (U(dtau) phi - phi)/dtau - K phi || in the direct-integral norm.

    U runs in relabel mode, where content never moves between slots, so the
    translation part of K contributes nothing and K acts as H slot by slot.
    The residual is first order in dtau.
    """
    if not dtau > 0:
        raise RejectedInputError(f"dtau must be positive, got {dtau!r}")
    check_generator(phi, gen)
    evolved = _relabel_evolve(phi, gen, dtau)
    lhs = 1j * (evolved.array - phi.array) / dtau
    k_phi = np.einsum("kij,kj->ki", gen.matrices, phi.array)
    diff = DirectIntegralState.from_array(phi.grid, lhs - k_phi)
    return integral_norm(diff)


def states_close(phi: DirectIntegralState, xi: DirectIntegralState) -> float:
    """Largest slot-norm difference between two states on the same grid."""
    _check_same_space(phi, xi)
    return float(np.max(np.linalg.norm(phi.array - xi.array, axis=1)))
