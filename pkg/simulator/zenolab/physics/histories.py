"""
Histories on the direct-integral space.

A projection family places an exhaustive set of exclusive alternatives at
every slot; a chain picks one alternative per slot. Sums over the space of
histories are brute-force enumerations against a complete product basis
built from rank-1 refinements of a family, capped by ``Settings.branch_cap``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import reduce
from typing import Iterator, Optional, Sequence

import numpy as np

from ..config import get_settings
from ..errors import BranchCapError, RejectedInputError
from .aux_algebra import AuxState, Projector
from .direct_integral import (
    DirectIntegralState,
    GeneratorSpec,
    check_generator,
    evolve_step,
    slot_propagator,
)

FAMILY_TOL = 1e-10
PROBABILITY_TOL = 1e-12

HistoryIndex = tuple[int, ...]


# =============================================================================
# Domain types
# =============================================================================

@dataclass(frozen=True, eq=False)
class ProjectionFamily:
    """Per slot, projectors summing to I and mutually orthogonal."""
    slots: tuple[tuple[Projector, ...], ...]

    def __post_init__(self):
        slots = tuple(tuple(s) for s in self.slots)
        if not slots or any(not s for s in slots):
            raise RejectedInputError("ProjectionFamily: every slot needs at least one projector")
        dims = {p.dim for s in slots for p in s}
        if len(dims) != 1:
            raise RejectedInputError(f"ProjectionFamily: projector dimensions differ: {sorted(dims)}")
        dim = dims.pop()
        eye = np.eye(dim)
        for k, projectors in enumerate(slots):
            total = sum(p.entries for p in projectors)
            err = float(np.max(np.abs(total - eye)))
            if err > FAMILY_TOL:
                raise RejectedInputError(f"ProjectionFamily: slot {k} projectors do not sum to I (error {err:.3e})")
            for a, b in itertools.combinations(range(len(projectors)), 2):
                overlap = float(np.max(np.abs(projectors[a].entries @ projectors[b].entries)))
                if overlap > FAMILY_TOL:
                    raise RejectedInputError(
                        f"ProjectionFamily: slot {k} alternatives {a} and {b} are not orthogonal ({overlap:.3e})"
                    )
        object.__setattr__(self, "slots", slots)

    @property
    def n(self) -> int:
        return len(self.slots)

    @property
    def dim(self) -> int:
        return self.slots[0][0].dim

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.slots)

    @property
    def branch_count(self) -> int:
        return math.prod(self.sizes)

    @property
    def is_fine_grained(self) -> bool:
        """Every alternative is a rank-1 projector (projections onto a basis)."""
        return all(p.rank == 1 for s in self.slots for p in s)

    @classmethod
    def uniform(cls, projectors: Sequence[Projector], n: int) -> "ProjectionFamily":
        return cls(tuple(tuple(projectors) for _ in range(n)))

    @classmethod
    def basis(cls, dim: int, n: int) -> "ProjectionFamily":
        """Computational-basis projectors at every slot."""
        return cls.uniform([Projector.basis(dim, j) for j in range(dim)], n)

    @classmethod
    def trivial(cls, dim: int, n: int) -> "ProjectionFamily":
        """The identity alone at every slot: no measurement anywhere."""
        return cls.uniform([Projector.identity(dim)], n)

    @classmethod
    def from_vectors(cls, vectors: Sequence[AuxState], n: int) -> "ProjectionFamily":
        """Rank-1 projectors on orthogonal vectors, plus the complement if they do not span."""
        projectors = [Projector.from_vector(v) for v in vectors]
        if not projectors:
            raise RejectedInputError("ProjectionFamily.from_vectors: no vectors given")
        dim = projectors[0].dim
        rest = np.eye(dim) - sum(p.entries for p in projectors)
        if np.max(np.abs(rest)) > FAMILY_TOL:
            projectors.append(Projector(rest))
        return cls.uniform(projectors, n)

    def check_index(self, alpha: Sequence[int]) -> HistoryIndex:
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != self.n:
            raise RejectedInputError(f"history index has {len(alpha)} entries, family has {self.n} slots")
        for k, (a, m) in enumerate(zip(alpha, self.sizes)):
            if not 0 <= a < m:
                raise RejectedInputError(f"history index entry {a} at slot {k} outside [0, {m})")
        return alpha

    def histories(self) -> Iterator[HistoryIndex]:
        """Every alpha, in lexicographic order."""
        return itertools.product(*(range(m) for m in self.sizes))

    def evolved(self, gen: GeneratorSpec, m: int, dt: float) -> "ProjectionFamily":
        """Conjugate every projector by its slot propagator V_{t_k}(m*dt)."""
        if gen.n != self.n or gen.dim != self.dim:
            raise RejectedInputError("generator does not match the family's slots")
        slots = []
        for k, projectors in enumerate(self.slots):
            u = slot_propagator(gen, k, m, dt)
            slots.append(tuple(p.conjugated(u) for p in projectors))
        return ProjectionFamily(tuple(slots))

    def relation_error(self) -> float:
        """Worst violation of sum = I and P_a P_b = delta_ab P_a over all slots."""
        eye = np.eye(self.dim)
        worst = 0.0
        for projectors in self.slots:
            worst = max(worst, float(np.max(np.abs(sum(p.entries for p in projectors) - eye))))
            for a, pa in enumerate(projectors):
                for b, pb in enumerate(projectors):
                    expected = pa.entries if a == b else 0.0
                    worst = max(worst, float(np.max(np.abs(pa.entries @ pb.entries - expected))))
        return worst

    def refinement_basis(self) -> list[np.ndarray]:
        """Per slot, a unitary whose columns refine the alternatives into an orthonormal basis."""
        out = []
        for projectors in self.slots:
            vectors = [v.entries for p in projectors for v in p.range_basis()]
            out.append(np.stack(vectors, axis=1))
        return out


@dataclass(frozen=True, eq=False)
class HistoryChain:
    """C_alpha = P^n_{alpha_n}(t_n) ... P^1_{alpha_1}(t_1)."""
    family: ProjectionFamily
    index: HistoryIndex

    def __post_init__(self):
        object.__setattr__(self, "index", self.family.check_index(self.index))

    @property
    def projectors(self) -> tuple[Projector, ...]:
        return tuple(s[a] for s, a in zip(self.family.slots, self.index))


@dataclass(frozen=True, eq=False)
class HistoryDensity:
    """rho = sum_alpha p_alpha prod_k P^k_{alpha_k}(t_k)."""
    family: ProjectionFamily
    entries: tuple[tuple[float, HistoryIndex], ...]

    def __post_init__(self):
        entries = tuple((float(p), self.family.check_index(alpha)) for p, alpha in self.entries)
        if not entries:
            raise RejectedInputError("HistoryDensity: no histories")
        if any(p < 0 or not math.isfinite(p) for p, _ in entries):
            raise RejectedInputError("HistoryDensity: probabilities must be non-negative")
        total = math.fsum(p for p, _ in entries)
        if abs(total - 1.0) > PROBABILITY_TOL:
            raise RejectedInputError(f"HistoryDensity: probabilities sum to {total!r}, not 1")
        indices = [alpha for _, alpha in entries]
        if len(set(indices)) != len(indices):
            raise RejectedInputError("HistoryDensity: history indices must be distinct")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_probabilities(
        cls,
        family: ProjectionFamily,
        probabilities: Sequence[float],
        histories: Optional[Sequence[Sequence[int]]] = None,
    ) -> "HistoryDensity":
        """Pair probabilities with explicit histories, or with the first ones in lexicographic order."""
        if histories is None:
            histories = list(itertools.islice(family.histories(), len(probabilities)))
        if len(histories) != len(probabilities):
            raise RejectedInputError(
                f"{len(probabilities)} probabilities for {len(histories)} histories"
            )
        return cls(family, tuple(zip(probabilities, (tuple(h) for h in histories))))

    def probability(self, alpha: Sequence[int]) -> float:
        alpha = tuple(alpha)
        return next((p for p, a in self.entries if a == alpha), 0.0)


@dataclass(frozen=True, eq=False)
class HistoryObservable:
    """One d x d operator per slot, acting slotwise on the space of histories."""
    operators: tuple[np.ndarray, ...]

    def __post_init__(self):
        ops = []
        for k, a in enumerate(self.operators):
            arr = np.array(a, dtype=complex)
            if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
                raise RejectedInputError(f"HistoryObservable: slot {k} operator is not square")
            arr.setflags(write=False)
            ops.append(arr)
        if not ops or len({a.shape for a in ops}) != 1:
            raise RejectedInputError("HistoryObservable: operators must share one dimension")
        object.__setattr__(self, "operators", tuple(ops))

    @classmethod
    def uniform(cls, a: np.ndarray, n: int) -> "HistoryObservable":
        return cls((a,) * n)

    @property
    def dim(self) -> int:
        return self.operators[0].shape[0]


@dataclass
class BranchResolution:
    """Branches C_alpha phi of a state and how well they add back up to it."""
    branches: dict[HistoryIndex, DirectIntegralState]
    residual: float


@dataclass
class ConsistencyReport:
    consistent: bool
    worst_off_diagonal: float
    worst_pair: Optional[tuple[HistoryIndex, HistoryIndex]]
    worst_real_part: float
    diagonal: dict[HistoryIndex, complex]


# =============================================================================
# Chains acting on states
# =============================================================================

def _check_chain_state(chain: HistoryChain, phi: DirectIntegralState) -> None:
    if chain.family.n != phi.n or chain.family.dim != phi.dim:
        raise RejectedInputError(
            f"chain shape ({chain.family.n} slots, dim {chain.family.dim}) "
            f"does not match state ({phi.n} slots, dim {phi.dim})"
        )


def apply_chain(chain: HistoryChain, phi: DirectIntegralState) -> DirectIntegralState:
    """C_alpha phi: slot k becomes P^k_{alpha_k} phi_k."""
    _check_chain_state(chain, phi)
    return DirectIntegralState(phi.grid, tuple(p.apply(h) for p, h in zip(chain.projectors, phi.slots)))


def heisenberg_projector(p: Projector, gen: GeneratorSpec, k: int, m: int, dt: float) -> Projector:
    """P(t_k + m*dt) = V_{t_k}(m*dt) P(t_k) V_{t_k}(m*dt)^dagger."""
    return p.conjugated(slot_propagator(gen, k, m, dt))


def evolve_chain(chain: HistoryChain, gen: GeneratorSpec, m: int, dt: float) -> HistoryChain:
    """C_alpha(tau) = U(tau) C_alpha U(tau)^-1; still a projected history."""
    return HistoryChain(chain.family.evolved(gen, m, dt), chain.index)


def intertwining_check(chain: HistoryChain, phi: DirectIntegralState, gen: GeneratorSpec, m: int) -> float:
    """max_k || (U C_alpha phi)_k - (C_alpha(tau) U phi)_k || in relabel mode."""
    _check_chain_state(chain, phi)
    check_generator(phi, gen)
    lhs = evolve_step(apply_chain(chain, phi), gen, m, boundary="relabel")
    rhs = apply_chain(evolve_chain(chain, gen, m, phi.grid.dt), evolve_step(phi, gen, m, boundary="relabel"))
    return float(np.max(np.linalg.norm(lhs.array - rhs.array, axis=1)))


def branch_resolution(
    family: ProjectionFamily,
    phi: DirectIntegralState,
    cap: Optional[int] = None,
) -> BranchResolution:
    """All branches C_alpha phi, with || sum_alpha C_alpha phi - phi || in the history space."""
    settings = get_settings()
    cap = settings.branch_cap if cap is None else cap
    if family.branch_count > cap:
        raise BranchCapError("branch count", family.branch_count, cap)
    if family.n != phi.n or family.dim != phi.dim:
        raise RejectedInputError("family does not match the state's slots")
    branches: dict[HistoryIndex, DirectIntegralState] = {}
    total = None
    for alpha in family.histories():
        branch = apply_chain(HistoryChain(family, alpha), phi)
        branches[alpha] = branch
        vec = branch.product_vector(settings.product_dim_cap)
        total = vec if total is None else total + vec
    residual = float(np.linalg.norm(total - phi.product_vector(settings.product_dim_cap)))
    return BranchResolution(branches=branches, residual=residual)


# =============================================================================
# Sums over the space of histories
# =============================================================================

def _require_fine_grained(rho: HistoryDensity) -> None:
    if not rho.family.is_fine_grained:
        raise RejectedInputError("history sums need a fine-grained (rank-1) family for rho")


def _basis_for(rho: HistoryDensity, basis: Optional[ProjectionFamily], cap: Optional[int]) -> list[np.ndarray]:
    basis = basis or rho.family
    if basis.n != rho.family.n or basis.dim != rho.family.dim:
        raise RejectedInputError("basis family does not match rho's slots")
    cap = get_settings().branch_cap if cap is None else cap
    count = basis.dim ** basis.n
    if count > cap:
        raise BranchCapError("basis histories", count, cap)
    return basis.refinement_basis()


def _slot_expectations(basis: np.ndarray, op: np.ndarray) -> np.ndarray:
    """<b_j, op b_j> for every basis column b_j."""
    return np.einsum("ij,ik,kj->j", basis.conj(), op, basis)


def _sum_over_basis(per_slot: list[np.ndarray]) -> complex:
    """sum_beta prod_i f_i(beta_i), enumerating every basis history beta."""
    grid = reduce(np.multiply.outer, per_slot)
    return complex(np.sum(grid))


def history_trace(
    rho: HistoryDensity,
    basis: Optional[ProjectionFamily] = None,
    cap: Optional[int] = None,
) -> float:
    """tr(rho) = sum over basis histories of (phi^beta, rho phi^beta)."""
    _require_fine_grained(rho)
    bases = _basis_for(rho, basis, cap)
    total = 0.0 + 0.0j
    for p, alpha in rho.entries:
        per_slot = [
            _slot_expectations(b, s[a].entries) for b, s, a in zip(bases, rho.family.slots, alpha)
        ]
        total += p * _sum_over_basis(per_slot)
    return float(total.real)


def _chain_family(rho: HistoryDensity, chain_family: Optional[ProjectionFamily]) -> ProjectionFamily:
    chain_family = chain_family or rho.family
    if chain_family.n != rho.family.n or chain_family.dim != rho.family.dim:
        raise RejectedInputError("chain family does not match rho's slots")
    return chain_family


def decoherence_functional(
    rho: HistoryDensity,
    alpha: Sequence[int],
    alpha_prime: Sequence[int],
    chain_family: Optional[ProjectionFamily] = None,
    basis: Optional[ProjectionFamily] = None,
    cap: Optional[int] = None,
) -> complex:
    """d(alpha, alpha') = sum_beta sum_alpha'' p_alpha'' prod_i (phi^beta_i, P_alpha_i P_alpha''_i P_alpha'_i phi^beta_i).

    Chains alpha, alpha' come from ``chain_family`` (rho's own family by default).
    """
    _require_fine_grained(rho)
    chains = _chain_family(rho, chain_family)
    alpha = chains.check_index(alpha)
    alpha_prime = chains.check_index(alpha_prime)
    bases = _basis_for(rho, basis, cap)
    total = 0.0 + 0.0j
    for p, mid in rho.entries:
        if p == 0.0:
            continue
        per_slot = []
        for i, b in enumerate(bases):
            op = (
                chains.slots[i][alpha[i]].entries
                @ rho.family.slots[i][mid[i]].entries
                @ chains.slots[i][alpha_prime[i]].entries
            )
            per_slot.append(_slot_expectations(b, op))
        total += p * _sum_over_basis(per_slot)
    return complex(total)


def decoherence_matrix(
    rho: HistoryDensity,
    chain_family: Optional[ProjectionFamily] = None,
    cap: Optional[int] = None,
) -> tuple[list[HistoryIndex], np.ndarray]:
    """d(alpha, alpha') for every pair of chain histories, in lexicographic order."""
    chains = _chain_family(rho, chain_family)
    cap_value = get_settings().branch_cap if cap is None else cap
    if chains.branch_count > cap_value:
        raise BranchCapError("chain histories", chains.branch_count, cap_value)
    histories = list(chains.histories())
    matrix = np.empty((len(histories), len(histories)), dtype=complex)
    for i, a in enumerate(histories):
        for j, b in enumerate(histories):
            matrix[i, j] = decoherence_functional(rho, a, b, chain_family=chains, cap=cap)
    return histories, matrix


def consistency_check(
    rho: HistoryDensity,
    tol: float,
    chain_family: Optional[ProjectionFamily] = None,
    cap: Optional[int] = None,
) -> ConsistencyReport:
    """Consistent iff every off-diagonal |d(alpha, alpha')| is within tol."""
    histories, matrix = decoherence_matrix(rho, chain_family=chain_family, cap=cap)
    return classify_consistency(histories, matrix, tol)


def classify_consistency(histories: list[HistoryIndex], matrix: np.ndarray, tol: float) -> ConsistencyReport:
    """Read a consistency verdict off an already computed decoherence matrix."""
    off = np.abs(matrix)
    np.fill_diagonal(off, 0.0)
    worst = float(off.max()) if off.size else 0.0
    worst_pair = None
    if len(histories) > 1:
        i, j = np.unravel_index(int(np.argmax(off)), off.shape)
        worst_pair = (histories[i], histories[j])
    real_off = np.abs(matrix.real)
    np.fill_diagonal(real_off, 0.0)
    return ConsistencyReport(
        consistent=worst <= tol,
        worst_off_diagonal=worst,
        worst_pair=worst_pair,
        worst_real_part=float(real_off.max()) if real_off.size else 0.0,
        diagonal={h: complex(matrix[i, i]) for i, h in enumerate(histories)},
    )


def _kron_all(ops: Sequence[np.ndarray]) -> np.ndarray:
    return reduce(np.kron, ops)


def chain_contraction_functional(
    rho: HistoryDensity,
    alpha: Sequence[int],
    alpha_prime: Sequence[int],
    chain_family: Optional[ProjectionFamily] = None,
    cap: Optional[int] = None,
) -> complex:
    """tr(C_alpha rho C_alpha'^dagger) with explicit operators on the product space."""
    chains = _chain_family(rho, chain_family)
    cap = get_settings().oracle_dim_cap if cap is None else cap
    size = rho.family.dim ** rho.family.n
    if size > cap:
        raise BranchCapError("oracle product dimension", size, cap)
    c_a = _kron_all([p.entries for p in HistoryChain(chains, alpha).projectors])
    c_b = _kron_all([p.entries for p in HistoryChain(chains, alpha_prime).projectors])
    rho_op = sum(
        p * _kron_all([s[a].entries for s, a in zip(rho.family.slots, mid)]) for p, mid in rho.entries
    )
    return complex(np.trace(c_a @ rho_op @ c_b.conj().T))


def history_expectation(rho: HistoryDensity, observable: HistoryObservable) -> complex:
    """tr(A rho) = sum_alpha p_alpha prod_i (phi^alpha_i, A_i phi^alpha_i)."""
    _require_fine_grained(rho)
    if observable.dim != rho.family.dim or len(observable.operators) != rho.family.n:
        raise RejectedInputError("observable does not match rho's slots")
    total = 0.0 + 0.0j
    for p, alpha in rho.entries:
        factor = 1.0 + 0.0j
        vectors = unit_history_vectors(HistoryChain(rho.family, alpha))
        for a_op, v in zip(observable.operators, vectors):
            factor *= np.vdot(v.entries, a_op @ v.entries)
        total += p * factor
    return complex(total)


def history_expectation_full(
    rho: HistoryDensity,
    observable: HistoryObservable,
    basis: Optional[ProjectionFamily] = None,
    cap: Optional[int] = None,
) -> complex:
    """tr(A rho) as the unreduced sum over basis histories and rho's histories."""
    _require_fine_grained(rho)
    if observable.dim != rho.family.dim or len(observable.operators) != rho.family.n:
        raise RejectedInputError("observable does not match rho's slots")
    bases = _basis_for(rho, basis, cap)
    total = 0.0 + 0.0j
    for p, alpha in rho.entries:
        per_slot = [
            _slot_expectations(b, a_op @ s[a].entries)
            for b, a_op, s, a in zip(bases, observable.operators, rho.family.slots, alpha)
        ]
        total += p * _sum_over_basis(per_slot)
    return complex(total)


def unit_history_vectors(chain: HistoryChain) -> list[AuxState]:
    """The unit vectors phi^{alpha_i} selected by a fine-grained chain."""
    out = []
    for p in chain.projectors:
        if p.rank != 1:
            raise RejectedInputError("chain is not fine grained")
        out.append(p.range_basis()[0])
    return out
