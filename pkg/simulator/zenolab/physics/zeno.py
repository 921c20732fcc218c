"""
Survival of histories under repeated stepping, and the Zeno limit.

For a grid of n slots over a span T, every slot is stepped once by
dt = T/n and the per-slot overlaps are multiplied (relabel identification).
The survival probability |prod_k <h_k, V_k(dt) h_k>|^2 tends to
prod_k ||h_k||^4 as n grows; to second order it is

    prod_k ||h_k||^4 * (1 - (T^2/n^2) * sum_k var(H_k, h_k))

Note the minus sign: the per-factor deficit is dt^2 * var, so the product
cannot exceed the norm product. See docs/errata.md.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Protocol, Sequence

import numpy as np
from scipy import stats
from tqdm import tqdm

from ..config import get_settings
from ..errors import RejectedInputError
from ..schemas import SlopeFit, StabilityReport, ZenoRecord
from .aux_algebra import (
    AuxState,
    HermitianOperator,
    child_seed,
    hermitian_exponential,
    random_hermitian,
    random_state,
    truncated_propagator,
    variance,
)
from .direct_integral import DirectIntegralState, GeneratorSpec, TimeGrid, check_generator
from .histories import HistoryChain, apply_chain

logger = logging.getLogger(__name__)

# |T^2/n^2 * sum var| above this marks the second-order prediction as outside its validity domain
VALIDITY_LIMIT = 0.5

# Deficits at or below this count as exact stability
STABLE_DEFICIT = 1e-12


# =============================================================================
# Hamiltonian and state sources: materialize a config for any grid size
# =============================================================================

class HamiltonianSource(Protocol):
    dim: int

    def build(self, grid: TimeGrid) -> GeneratorSpec: ...


class StateSource(Protocol):
    def build(self, grid: TimeGrid, gen: GeneratorSpec) -> DirectIntegralState: ...


@dataclass(frozen=True, eq=False)
class ConstantHamiltonian:
    operator: HermitianOperator

    @property
    def dim(self) -> int:
        return self.operator.dim

    def build(self, grid: TimeGrid) -> GeneratorSpec:
        return GeneratorSpec.constant(self.operator, grid.n)


@dataclass(frozen=True, eq=False)
class SlotHamiltonians:
    """An explicit per-slot list; only usable with grids of exactly that many slots."""
    operators: tuple[HermitianOperator, ...]

    @property
    def dim(self) -> int:
        return self.operators[0].dim

    def build(self, grid: TimeGrid) -> GeneratorSpec:
        if len(self.operators) != grid.n:
            raise RejectedInputError(f"{len(self.operators)} slot Hamiltonians for a grid of {grid.n}")
        return GeneratorSpec(self.operators)


@dataclass(frozen=True)
class RandomHamiltonian:
    """random_hermitian(dim, seed) everywhere, or a fresh one per slot from derived seeds."""
    dim: int
    seed: int
    per_slot: bool = False

    def build(self, grid: TimeGrid) -> GeneratorSpec:
        if not self.per_slot:
            return GeneratorSpec.constant(random_hermitian(self.dim, self.seed), grid.n)
        return GeneratorSpec(tuple(random_hermitian(self.dim, child_seed(self.seed, k)) for k in range(grid.n)))


@dataclass(frozen=True, eq=False)
class TimeDependentHamiltonian:
    dim: int
    fn: Callable[[float], HermitianOperator]

    def build(self, grid: TimeGrid) -> GeneratorSpec:
        return GeneratorSpec.sampled(self.fn, grid)


@dataclass(frozen=True, eq=False)
class IdenticalSlots:
    """h_{t_k} = h0 at every slot: the static Zeno setting."""
    h0: AuxState

    def build(self, grid: TimeGrid, gen: GeneratorSpec) -> DirectIntegralState:
        return DirectIntegralState.constant(grid, self.h0)


@dataclass(frozen=True, eq=False)
class ExplicitSlots:
    states: tuple[AuxState, ...]

    def build(self, grid: TimeGrid, gen: GeneratorSpec) -> DirectIntegralState:
        return DirectIntegralState(grid, self.states)


@dataclass(frozen=True)
class RandomSlots:
    """An arbitrary (non-Schroedinger) path of independent random unit states."""
    dim: int
    seed: int

    def build(self, grid: TimeGrid, gen: GeneratorSpec) -> DirectIntegralState:
        return DirectIntegralState(grid, tuple(random_state(self.dim, child_seed(self.seed, k)) for k in range(grid.n)))


@dataclass(frozen=True, eq=False)
class SchroedingerPath:
    """Slots generated from h0 by the configured dynamics: the dynamic Zeno setting."""
    h0: AuxState

    def build(self, grid: TimeGrid, gen: GeneratorSpec) -> DirectIntegralState:
        return make_schroedinger_path(self.h0, gen, grid)


@dataclass(frozen=True, eq=False)
class ZenoConfig:
    span: float
    n_list: tuple[int, ...]
    hamiltonian: HamiltonianSource
    state: StateSource
    t_start: float = 0.0

    def __post_init__(self):
        if not self.span > 0:
            raise RejectedInputError(f"ZenoConfig: span must be positive, got {self.span!r}")
        n_list = tuple(int(n) for n in self.n_list)
        if not n_list or any(n < 1 for n in n_list):
            raise RejectedInputError("ZenoConfig: n_list must be a non-empty list of positive integers")
        if any(b <= a for a, b in zip(n_list, n_list[1:])):
            raise RejectedInputError("ZenoConfig: n_list must be strictly increasing")
        object.__setattr__(self, "n_list", n_list)

    @property
    def dim(self) -> int:
        return self.hamiltonian.dim


@dataclass
class ZenoSweep:
    records: list[ZenoRecord]
    deficit_fit: Optional[SlopeFit]
    prediction_error_fit: Optional[SlopeFit]


# =============================================================================
# Survival amplitudes
# =============================================================================

def _survival_product(phi: DirectIntegralState, gen: GeneratorSpec, propagate: Callable[[HermitianOperator], np.ndarray]) -> complex:
    check_generator(phi, gen)
    cache: dict[int, np.ndarray] = {}
    moved = np.empty_like(phi.array)
    for k, (h_op, h) in enumerate(zip(gen.hamiltonians, phi.slots)):
        key = id(h_op)
        if key not in cache:
            cache[key] = propagate(h_op)
        moved[k] = cache[key] @ h.entries
    # Same contraction as history_inner_product, so dt = 0 reproduces it bit for bit
    overlaps = np.einsum("kd,kd->k", phi.array.conj(), moved)
    return complex(np.prod(overlaps))


def survival_amplitude_exact(phi: DirectIntegralState, gen: GeneratorSpec, dt: float) -> complex:
    """prod_k <h_k, exp(-i dt H_k) h_k>."""
    return _survival_product(phi, gen, lambda h_op: hermitian_exponential(h_op, dt).entries)


def survival_amplitude_truncated(phi: DirectIntegralState, gen: GeneratorSpec, dt: float) -> complex:
    """prod_k <h_k, (1 - i dt H_k - dt^2 H_k^2 / 2) h_k>."""
    return _survival_product(phi, gen, lambda h_op: truncated_propagator(h_op, dt))


def second_order_correction(phi: DirectIntegralState, gen: GeneratorSpec, span: float, n: int) -> float:
    """(T^2/n^2) * sum_k var(H_k, h_k)."""
    check_generator(phi, gen)
    total = sum(variance(h_op, h) for h_op, h in zip(gen.hamiltonians, phi.slots))
    return (span * span) / (n * n) * total


def survival_probability_predicted(phi: DirectIntegralState, gen: GeneratorSpec, span: float, n: int) -> float:
    """prod_k ||h_k||^4 * (1 - (T^2/n^2) sum_k var); raw, never clamped."""
    return _predicted_from_correction(phi, second_order_correction(phi, gen, span, n))


def _predicted_from_correction(phi: DirectIntegralState, correction: float) -> float:
    return float(np.prod(phi.slot_norms() ** 4)) * (1.0 - correction)


def deficit_dt2_coefficient(h_op: HermitianOperator, h: AuxState, dt: Optional[float] = None) -> float:
    """Richardson-extrapolated dt^2 coefficient of 1 - |<h, V(dt) h>|^2 / ||h||^4."""
    if dt is None:
        dt = 1e-2 / max(1.0, h_op.norm)
    n4 = h.norm_squared() ** 2
    if n4 == 0.0:
        raise RejectedInputError("deficit_dt2_coefficient: zero-norm state")

    def coefficient(step: float) -> float:
        amp = np.vdot(h.entries, hermitian_exponential(h_op, step).entries @ h.entries)
        return (1.0 - abs(amp) ** 2 / n4) / (step * step)

    coarse, fine = coefficient(dt), coefficient(dt / 2.0)
    return (4.0 * fine - coarse) / 3.0


# =============================================================================
# Sweeps and fits
# =============================================================================

def fit_loglog(xs: Sequence[float], ys: Sequence[float]) -> Optional[SlopeFit]:
    """OLS on (ln x, ln y) over points with y > 0; None with fewer than 3 points."""
    pairs = [(x, y) for x, y in zip(xs, ys) if x > 0 and y > 0 and np.isfinite(y)]
    if len(pairs) < 3:
        return None
    lx = np.log([p[0] for p in pairs])
    ly = np.log([p[1] for p in pairs])
    fit = stats.linregress(lx, ly)
    return SlopeFit(
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        r_squared=float(min(1.0, fit.rvalue ** 2)),
        points=len(pairs),
    )


def sweep_point(cfg: ZenoConfig, n: int) -> ZenoRecord:
    """Exact and predicted survival for one repetition count n."""
    grid = TimeGrid(t_start=cfg.t_start, n=n, span=cfg.span)
    gen = cfg.hamiltonian.build(grid)
    phi = cfg.state.build(grid, gen)
    s_exact = abs(survival_amplitude_exact(phi, gen, grid.dt)) ** 2
    correction = second_order_correction(phi, gen, cfg.span, n)
    s_pred = _predicted_from_correction(phi, correction)
    record = ZenoRecord(
        n=n,
        dt=grid.dt,
        s_exact=s_exact,
        s_pred=s_pred,
        deficit_exact=1.0 - s_exact,
        prediction_error=abs(s_exact - s_pred),
        flag_out_of_validity=abs(correction) > VALIDITY_LIMIT,
    )
    logger.debug("n=%d S_exact=%.17g S_pred=%.17g", n, s_exact, s_pred)
    return record


def zeno_sweep(cfg: ZenoConfig, workers: Optional[int] = None) -> ZenoSweep:
    """Records for every n (ascending) plus log-log fits of the deficit and prediction error."""
    settings = get_settings()
    workers = workers or settings.sweep_workers
    points = tqdm(cfg.n_list, desc="zeno sweep", disable=not settings.show_progress)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(lambda n: sweep_point(cfg, n), points))
    else:
        records = [sweep_point(cfg, n) for n in points]

    flagged = [r.n for r in records if r.flag_out_of_validity]
    if flagged:
        logger.warning("second-order prediction outside its validity domain for n=%s", flagged)

    ns = [r.n for r in records]
    deficit_fit = fit_loglog(ns, [r.deficit_exact for r in records])
    error_fit = fit_loglog(ns, [r.prediction_error for r in records])
    if deficit_fit is None:
        logger.warning("deficit fit unavailable (fewer than 3 positive deficits)")
    if error_fit is None:
        logger.warning("prediction-error fit unavailable (fewer than 3 positive points)")
    return ZenoSweep(records=records, deficit_fit=deficit_fit, prediction_error_fit=error_fit)


# =============================================================================
# Schroedinger paths and stability
# =============================================================================

def make_schroedinger_path(h0: AuxState, gen: GeneratorSpec, grid: TimeGrid) -> DirectIntegralState:
    """h_{t_1} = h0, h_{t_{k+1}} = exp(-i dt H_{t_k}) h_{t_k}."""
    if gen.n != grid.n:
        raise RejectedInputError(f"generator has {gen.n} slots, grid has {grid.n}")
    if gen.dim != h0.dim:
        raise RejectedInputError(f"generator dim {gen.dim} does not match h0 dim {h0.dim}")
    slots = [h0]
    for h_op in gen.hamiltonians[:-1]:
        slots.append(hermitian_exponential(h_op, grid.dt).apply(slots[-1]))
    return DirectIntegralState(grid, tuple(slots))


def schroedinger_residual(phi: DirectIntegralState, gen: GeneratorSpec) -> StabilityReport:
    """r_k = || H_k phi_k - i (phi_{k+1} - phi_k)/dt ||, k = 0..n-2."""
    if phi.n < 2:
        raise RejectedInputError("schroedinger_residual needs at least 2 slots")
    check_generator(phi, gen)
    arr = phi.array
    dt = phi.grid.dt
    h_phi = np.einsum("kij,kj->ki", gen.matrices[:-1], arr[:-1])
    residual = h_phi - 1j * (arr[1:] - arr[:-1]) / dt
    r = np.linalg.norm(residual, axis=1)
    return StabilityReport(residuals=[float(x) for x in r], max_residual=float(r.max()), dt=dt)


def _projected_steps(chain: HistoryChain, phi: DirectIntegralState, gen: GeneratorSpec, dt: float):
    check_generator(phi, gen)
    projected = apply_chain(chain, phi)
    for h_op, ph in zip(gen.hamiltonians, projected.slots):
        yield ph.entries, hermitian_exponential(h_op, dt).entries @ ph.entries


def stationarity_check(chain: HistoryChain, phi: DirectIntegralState, gen: GeneratorSpec, dt: float) -> float:
    """max_k || V_k(dt) P phi_k - P phi_k ||: strict invariance of the projected slots."""
    return max(float(np.linalg.norm(moved - ph)) for ph, moved in _projected_steps(chain, phi, gen, dt))


def phase_drift(chain: HistoryChain, phi: DirectIntegralState, gen: GeneratorSpec, dt: float) -> float:
    """max_k (1 - |<P phi_k, V P phi_k>| / ||P phi_k||^2): invariance up to a phase."""
    worst = 0.0
    for ph, moved in _projected_steps(chain, phi, gen, dt):
        n2 = float(np.vdot(ph, ph).real)
        if n2 == 0.0:
            continue
        worst = max(worst, 1.0 - abs(np.vdot(ph, moved)) / n2)
    return worst
