"""
Experiment runners.

Each runner turns a validated ExperimentConfig into a records table and a
results mapping. Randomness comes only from the config's root seed:
consumer 0 seeds the Hamiltonian, consumer 1 seeds the state.
"""
from __future__ import annotations

import itertools
import logging
import time
from dataclasses import dataclass
from typing import Any, Callable, Optional

import numpy as np
import pandas as pd

from . import __version__
from .config import get_settings
from .errors import RejectedInputError
from .physics.aux_algebra import (
    AuxState,
    HermitianOperator,
    child_seed,
    pauli_combination,
    random_state,
)
from .physics.direct_integral import (
    DirectIntegralState,
    GeneratorSpec,
    TimeGrid,
    evolve_step,
    generator_relation_check,
    integral_inner_product,
    integral_norm,
    slot_propagator,
    states_close,
)
from .physics.histories import (
    HistoryChain,
    HistoryDensity,
    HistoryIndex,
    ProjectionFamily,
    branch_resolution,
    chain_contraction_functional,
    classify_consistency,
    decoherence_matrix,
    history_trace,
    intertwining_check,
)
from .physics.zeno import (
    STABLE_DEFICIT,
    ConstantHamiltonian,
    HamiltonianSource,
    IdenticalSlots,
    RandomHamiltonian,
    RandomSlots,
    SchroedingerPath,
    StateSource,
    ZenoConfig,
    phase_drift,
    schroedinger_residual,
    stationarity_check,
    survival_amplitude_exact,
    zeno_sweep,
)
from .schemas import ZENO_COLUMNS, ExperimentConfig, FamilySpec, RunSummary, to_complex

logger = logging.getLogger(__name__)

HAMILTONIAN_SEED = 0
STATE_SEED = 1


@dataclass
class ExperimentResult:
    """Rows for records.csv plus everything else the summary reports."""
    records: pd.DataFrame
    results: dict[str, Any]


# =============================================================================
# Builders
# =============================================================================

def build_hamiltonian(cfg: ExperimentConfig) -> HamiltonianSource:
    spec = cfg.hamiltonian
    if spec is None:
        raise RejectedInputError("hamiltonian: missing")
    if spec.kind == "pauli":
        return ConstantHamiltonian(pauli_combination(**spec.pauli.model_dump()))
    if spec.kind == "diagonal":
        return ConstantHamiltonian(HermitianOperator(np.diag(np.asarray(spec.diagonal, dtype=complex))))
    return RandomHamiltonian(cfg.dimension, child_seed(cfg.seed, HAMILTONIAN_SEED), per_slot=spec.per_slot)


def _initial_state(cfg: ExperimentConfig) -> AuxState:
    spec = cfg.state
    if spec.amplitudes is not None:
        return AuxState([to_complex(a) for a in spec.amplitudes])
    if spec.index is not None:
        return AuxState.basis(cfg.dimension, spec.index)
    return random_state(cfg.dimension, child_seed(cfg.seed, STATE_SEED))


def build_state(cfg: ExperimentConfig) -> StateSource:
    spec = cfg.state
    if spec is None:
        raise RejectedInputError("state: missing")
    if spec.kind == "schroedinger-path":
        return SchroedingerPath(_initial_state(cfg))
    if spec.kind == "random" and spec.per_slot:
        return RandomSlots(cfg.dimension, child_seed(cfg.seed, STATE_SEED))
    return IdenticalSlots(_initial_state(cfg))


def build_family(spec: Optional[FamilySpec], dim: int, n: int) -> ProjectionFamily:
    """Computational basis unless explicit rank-1 vectors are given."""
    if spec is None or spec.kind == "basis":
        return ProjectionFamily.basis(dim, n)
    vectors = [AuxState([to_complex(a) for a in v]) for v in spec.vectors]
    return ProjectionFamily.from_vectors(vectors, n)


def _grid(cfg: ExperimentConfig, n: Optional[int] = None) -> TimeGrid:
    return TimeGrid(t_start=cfg.grid.t_start, n=n or cfg.grid.n, span=cfg.grid.span)


def _materialize(cfg: ExperimentConfig, grid: TimeGrid) -> tuple[GeneratorSpec, DirectIntegralState]:
    gen = build_hamiltonian(cfg).build(grid)
    phi = build_state(cfg).build(grid, gen)
    return gen, phi


def _label(alpha: HistoryIndex) -> str:
    return "-".join(str(a) for a in alpha)


def _halving_ratios(values: list[float]) -> list[Optional[float]]:
    return [a / b if b > 0 else None for a, b in zip(values, values[1:])]


# =============================================================================
# Runners
# =============================================================================

def run_zeno_sweep(cfg: ExperimentConfig) -> ExperimentResult:
    zcfg = ZenoConfig(
        span=cfg.grid.span,
        n_list=tuple(cfg.grid.n_list),
        hamiltonian=build_hamiltonian(cfg),
        state=build_state(cfg),
        t_start=cfg.grid.t_start,
    )
    sweep = zeno_sweep(zcfg)
    records = pd.DataFrame([r.model_dump() for r in sweep.records], columns=list(ZENO_COLUMNS))
    records = records.rename(columns=ZENO_COLUMNS)
    results = {
        "points": len(sweep.records),
        "deficit_fit": sweep.deficit_fit.model_dump() if sweep.deficit_fit else None,
        "prediction_error_fit": sweep.prediction_error_fit.model_dump() if sweep.prediction_error_fit else None,
        "flagged_n": [r.n for r in sweep.records if r.flag_out_of_validity],
        "exactly_stable": all(r.deficit_exact <= STABLE_DEFICIT for r in sweep.records),
    }
    return ExperimentResult(records=records, results=results)


def run_consistency(cfg: ExperimentConfig) -> ExperimentResult:
    n = cfg.grid.n
    family = build_family(cfg.family, cfg.dimension, n)
    chain_family = build_family(cfg.chain_family, cfg.dimension, n) if cfg.chain_family else None
    rho = HistoryDensity.from_probabilities(family, cfg.probabilities, cfg.histories)

    histories, matrix = decoherence_matrix(rho, chain_family=chain_family)
    report = classify_consistency(histories, matrix, cfg.tolerances.consistency)

    settings = get_settings()
    with_oracle = cfg.dimension ** n <= settings.oracle_dim_cap
    rows = []
    oracle_deviation = 0.0
    for i, a in enumerate(histories):
        for j, b in enumerate(histories):
            d = matrix[i, j]
            row = {"alpha": _label(a), "alpha_prime": _label(b), "re": d.real, "im": d.imag}
            if with_oracle:
                o = chain_contraction_functional(rho, a, b, chain_family=chain_family)
                oracle_deviation = max(oracle_deviation, abs(o - d))
                row.update(oracle_re=o.real, oracle_im=o.imag)
            else:
                row.update(oracle_re=np.nan, oracle_im=np.nan)
            rows.append(row)
    if not with_oracle:
        logger.info("oracle skipped: product dimension %d exceeds %d", cfg.dimension ** n, settings.oracle_dim_cap)

    results = {
        "consistent": report.consistent,
        "tolerance": cfg.tolerances.consistency,
        "worst_off_diagonal": report.worst_off_diagonal,
        "worst_pair": [_label(h) for h in report.worst_pair] if report.worst_pair else None,
        "worst_real_part": report.worst_real_part,
        "diagonal": {_label(h): d.real for h, d in report.diagonal.items()},
        "rho_diagonal": [report.diagonal[alpha].real for _, alpha in rho.entries] if chain_family is None else None,
        "trace": history_trace(rho),
        "oracle_max_deviation": oracle_deviation if with_oracle else None,
    }
    columns = ["alpha", "alpha_prime", "re", "im", "oracle_re", "oracle_im"]
    return ExperimentResult(records=pd.DataFrame(rows, columns=columns), results=results)


def run_stability(cfg: ExperimentConfig) -> ExperimentResult:
    grid = _grid(cfg)
    gen, phi = _materialize(cfg, grid)
    report = schroedinger_residual(phi, gen)
    records = pd.DataFrame(
        {"slot": np.arange(phi.n - 1), "t": grid.times[:-1], "residual": report.residuals},
        columns=["slot", "t", "residual"],
    )

    halving = []
    for j in range(cfg.halvings + 1):
        g, p = _materialize(cfg, _grid(cfg, grid.n * 2 ** j))
        halving.append(schroedinger_residual(p, g).max_residual)
    relation = [generator_relation_check(phi, gen, cfg.dtau / 2 ** j) for j in range(cfg.halvings + 1)]

    amplitude = survival_amplitude_exact(phi, gen, grid.dt)
    norms4 = float(np.prod(phi.slot_norms() ** 4))
    results: dict[str, Any] = {
        "max_residual": report.max_residual,
        "dt": report.dt,
        "residual_halving": {"n": [grid.n * 2 ** j for j in range(cfg.halvings + 1)], "max_residual": halving,
                             "ratios": _halving_ratios(halving)},
        "generator_relation": {"dtau": [cfg.dtau / 2 ** j for j in range(cfg.halvings + 1)], "residual": relation,
                               "ratios": _halving_ratios(relation)},
        "survival_deficit": 1.0 - abs(amplitude) ** 2 / norms4 if norms4 > 0 else None,
    }
    if cfg.family is not None and cfg.history is not None:
        chain = HistoryChain(build_family(cfg.family, cfg.dimension, grid.n), tuple(cfg.history))
        results["stationarity"] = stationarity_check(chain, phi, gen, grid.dt)
        results["phase_drift"] = phase_drift(chain, phi, gen, grid.dt)
    return ExperimentResult(records=records, results=results)


def run_evolve_check(cfg: ExperimentConfig) -> ExperimentResult:
    grid = _grid(cfg)
    gen, phi = _materialize(cfg, grid)
    tol = cfg.tolerances.identity
    family = build_family(cfg.family, cfg.dimension, grid.n)
    chain = HistoryChain(family, tuple(cfg.history) if cfg.history else (0,) * grid.n)
    rows: list[dict[str, Any]] = []

    def check(name: str, value: float, tolerance: float = tol) -> None:
        rows.append({"check": name, "value": value, "tolerance": tolerance, "passed": bool(value <= tolerance)})

    eye = np.eye(cfg.dimension)
    base_norm = integral_inner_product(phi, phi).real
    for m in cfg.steps:
        unitarity = max(
            float(np.max(np.abs(u.entries.conj().T @ u.entries - eye)))
            for u in (slot_propagator(gen, k, m, grid.dt) for k in range(grid.n))
        )
        check(f"unitarity[m={m}]", unitarity)
        for boundary in ("cyclic", "relabel"):
            moved = evolve_step(phi, gen, m, boundary=boundary)
            check(f"norm[{boundary},m={m}]", abs(integral_inner_product(moved, moved).real - base_norm))
        check(f"intertwining[m={m}]", intertwining_check(chain, phi, gen, m))
        check(f"family_closure[m={m}]", family.evolved(gen, m, grid.dt).relation_error())
    for m1, m2 in itertools.combinations_with_replacement(cfg.steps, 2):
        twice = evolve_step(evolve_step(phi, gen, m1, "cyclic"), gen, m2, "cyclic")
        check(f"group_law[{m1}+{m2}]", states_close(twice, evolve_step(phi, gen, m1 + m2, "cyclic")))

    if family.branch_count <= get_settings().branch_cap:
        check("branch_reconstruction", branch_resolution(family, phi).residual)
    else:
        logger.info("branch reconstruction skipped: %d branches", family.branch_count)

    # First-order remainder: |i(e^{-i lambda tau} - 1)/tau - lambda| <= lambda^2 tau / 2 per eigencomponent
    h_max = max(h.norm for h in gen.hamiltonians)
    relation = []
    for j in range(cfg.halvings + 1):
        dtau = cfg.dtau / 2 ** j
        value = generator_relation_check(phi, gen, dtau)
        relation.append(value)
        check(f"generator_relation[dtau={dtau:g}]", value, 0.5 * dtau * h_max ** 2 * integral_norm(phi) + 1e-12)

    records = pd.DataFrame(rows, columns=["check", "value", "tolerance", "passed"])
    failed = [r["check"] for r in rows if not r["passed"]]
    if failed:
        logger.warning("%d checks failed: %s", len(failed), ", ".join(failed))
    results = {
        "all_passed": not failed,
        "checks": len(rows),
        "failed": failed,
        "generator_relation_ratios": _halving_ratios(relation),
    }
    return ExperimentResult(records=records, results=results)


RUNNERS: dict[str, Callable[[ExperimentConfig], ExperimentResult]] = {
    "zeno-sweep": run_zeno_sweep,
    "consistency": run_consistency,
    "stability": run_stability,
    "evolve-check": run_evolve_check,
}


def execute(cfg: ExperimentConfig) -> tuple[RunSummary, pd.DataFrame]:
    """Run one experiment and wrap it with the config echo and timing."""
    logger.info("running %s (d=%d, seed=%d)", cfg.experiment, cfg.dimension, cfg.seed)
    started = time.perf_counter()
    outcome = RUNNERS[cfg.experiment](cfg)
    duration = time.perf_counter() - started
    logger.info("%s finished in %.3fs with %d records", cfg.experiment, duration, len(outcome.records))
    summary = RunSummary(
        version=__version__,
        experiment=cfg.experiment,
        seed=cfg.seed,
        config=cfg.model_dump(mode="json"),
        results=outcome.results,
        duration_seconds=duration,
    )
    return summary, outcome.records
