import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from zenolab.errors import RejectedInputError
from zenolab.physics.aux_algebra import (
    PAULI_X,
    PAULI_Z,
    AuxState,
    HermitianOperator,
    hermitian_exponential,
    random_hermitian,
    random_state,
    variance,
)
from zenolab.physics.direct_integral import (
    DirectIntegralState,
    GeneratorSpec,
    TimeGrid,
    history_inner_product,
)
from zenolab.physics.histories import HistoryChain, ProjectionFamily
from zenolab.physics.zeno import (
    ConstantHamiltonian,
    ExplicitSlots,
    IdenticalSlots,
    RandomHamiltonian,
    RandomSlots,
    SchroedingerPath,
    SlotHamiltonians,
    TimeDependentHamiltonian,
    ZenoConfig,
    deficit_dt2_coefficient,
    fit_loglog,
    make_schroedinger_path,
    phase_drift,
    schroedinger_residual,
    second_order_correction,
    stationarity_check,
    survival_amplitude_exact,
    survival_amplitude_truncated,
    survival_probability_predicted,
    zeno_sweep,
)

HALF_PI = math.pi / 2
POWERS_OF_TWO = tuple(2 ** j for j in range(9))  # 1 .. 256
SIGMA_X = HermitianOperator(PAULI_X)
UP = AuxState([1, 0])


def sigma_x_config(n_list=POWERS_OF_TWO) -> ZenoConfig:
    return ZenoConfig(span=HALF_PI, n_list=n_list, hamiltonian=ConstantHamiltonian(SIGMA_X), state=IdenticalSlots(UP))


def constant_state(n: int, h: AuxState = UP, span: float = HALF_PI) -> DirectIntegralState:
    return DirectIntegralState.constant(TimeGrid(0.0, n, span), h)


# =============================================================================
# Survival amplitudes
# =============================================================================

def test_zero_generator_gives_norm_product():
    grid = TimeGrid(0.0, 3, 1.0)
    phi = DirectIntegralState(grid, (AuxState([2, 0]), AuxState([0, 1]), AuxState([1, 1])))
    assert survival_amplitude_exact(phi, GeneratorSpec.zero(2, 3), 0.1) == pytest.approx(4 * 1 * 2)


def test_eigenvector_slots_have_unimodular_amplitude():
    phi = constant_state(5, AuxState(np.array([1, 1]) / np.sqrt(2)))
    amplitude = survival_amplitude_exact(phi, GeneratorSpec.constant(SIGMA_X, 5), 0.3)
    assert abs(amplitude) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("n", [1, 2, 3, 7])
def test_sigma_x_amplitude_is_cosine_power(n):
    theta = 0.4
    amplitude = survival_amplitude_exact(constant_state(n), GeneratorSpec.constant(SIGMA_X, n), theta)
    assert amplitude == pytest.approx(math.cos(theta) ** n, abs=1e-14)


def test_zero_step_reproduces_history_inner_product_exactly():
    grid = TimeGrid(0.0, 4, 1.0)
    phi = DirectIntegralState(grid, tuple(random_state(3, k).scaled(1.0 + 0.1 * k) for k in range(4)))
    gen = GeneratorSpec(tuple(random_hermitian(3, 50 + k) for k in range(4)))
    assert survival_amplitude_exact(phi, gen, 0.0) == history_inner_product(phi, phi)


def test_truncated_amplitude_single_slot():
    theta = 0.2
    amplitude = survival_amplitude_truncated(constant_state(1), GeneratorSpec.constant(SIGMA_X, 1), theta)
    assert amplitude == pytest.approx(1 - theta ** 2 / 2, abs=1e-15)


def test_truncated_matches_exact_for_zero_generator():
    phi = constant_state(3, AuxState([0.6, 0.8j]))
    gen = GeneratorSpec.zero(2, 3)
    assert survival_amplitude_truncated(phi, gen, 0.5) == pytest.approx(survival_amplitude_exact(phi, gen, 0.5), abs=1e-15)


def test_truncation_error_is_third_order():
    h_op = random_hermitian(2, 8)
    n = 4
    phi = DirectIntegralState(TimeGrid(0.0, n, 1.0), tuple(random_state(2, k) for k in range(n)))
    gen = GeneratorSpec.constant(h_op, n)
    errors = [
        abs(survival_amplitude_exact(phi, gen, dt) - survival_amplitude_truncated(phi, gen, dt))
        for dt in (1e-2, 5e-3, 2.5e-3)
    ]
    for coarse, fine in zip(errors, errors[1:]):
        assert coarse / fine == pytest.approx(8.0, rel=0.15)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), dt=st.floats(0.0, 3.0))
def test_survival_is_bounded_and_even_in_dt(seed, dt):
    n = 3
    phi = DirectIntegralState(TimeGrid(0.0, n, 1.0), tuple(random_state(2, seed + k) for k in range(n)))
    gen = GeneratorSpec(tuple(random_hermitian(2, seed + 20 + k) for k in range(n)))
    forward = abs(survival_amplitude_exact(phi, gen, dt)) ** 2
    backward = abs(survival_amplitude_exact(phi, gen, -dt)) ** 2
    assert 0.0 <= forward <= 1.0 + 1e-12
    assert forward == pytest.approx(backward, abs=1e-12)


# =============================================================================
# Second-order prediction
# =============================================================================

def test_prediction_for_eigenvectors_is_norm_product():
    phi = constant_state(4, AuxState([0, 2]))
    gen = GeneratorSpec.constant(HermitianOperator(PAULI_Z), 4)
    assert survival_probability_predicted(phi, gen, 1.0, 4) == pytest.approx(16.0 ** 4)


@pytest.mark.parametrize("n", [4, 10, 100])
def test_prediction_for_sigma_x(n):
    phi = constant_state(n)
    gen = GeneratorSpec.constant(SIGMA_X, n)
    assert survival_probability_predicted(phi, gen, HALF_PI, n) == pytest.approx(1 - HALF_PI ** 2 / n, abs=1e-14)


def test_coarse_prediction_goes_negative_and_is_flagged():
    phi = constant_state(2)
    gen = GeneratorSpec.constant(SIGMA_X, 2)
    assert survival_probability_predicted(phi, gen, HALF_PI, 2) == pytest.approx(1 - math.pi ** 2 / 8, abs=1e-14)
    assert second_order_correction(phi, gen, HALF_PI, 2) > 0.5
    sweep = zeno_sweep(sigma_x_config((1, 2, 8)))
    assert [r.flag_out_of_validity for r in sweep.records] == [True, True, False]
    assert sweep.records[1].s_pred < 0


def test_prediction_rejects_zero_slot():
    phi = constant_state(2, AuxState([0, 0]))
    with pytest.raises(RejectedInputError):
        survival_probability_predicted(phi, GeneratorSpec.constant(SIGMA_X, 2), 1.0, 2)


@pytest.mark.parametrize("seed", range(20))
def test_richardson_coefficient_matches_variance(seed):
    dim = 2 + seed % 2
    h_op = random_hermitian(dim, 1000 + seed)
    h = random_state(dim, 2000 + seed)
    assert deficit_dt2_coefficient(h_op, h) == pytest.approx(variance(h_op, h), rel=1e-6)


# =============================================================================
# Sweeps
# =============================================================================

def test_static_zeno_closed_form():
    sweep = zeno_sweep(sigma_x_config())
    for record in sweep.records:
        expected = math.cos(HALF_PI / record.n) ** (2 * record.n)
        assert record.s_exact == pytest.approx(expected, abs=1e-10)
        assert record.dt == pytest.approx(HALF_PI / record.n)
    by_n = {r.n: r for r in sweep.records}
    assert by_n[1].s_exact == pytest.approx(0.0, abs=1e-12)
    assert by_n[2].s_exact == pytest.approx(0.25, abs=1e-12)


def test_survival_at_n_100():
    record = zeno_sweep(sigma_x_config((100,))).records[0]
    assert record.s_exact == pytest.approx(0.97563, abs=1e-5)
    assert record.prediction_error <= 5e-4


def test_zeno_limit_slopes():
    sweep = zeno_sweep(sigma_x_config(POWERS_OF_TWO[3:]))
    deficit, error = sweep.deficit_fit, sweep.prediction_error_fit
    assert -1.3 <= deficit.slope <= -0.7
    assert deficit.r_squared >= 0.99
    assert -2.3 <= error.slope <= -1.7
    assert error.r_squared >= 0.99
    assert sweep.records[-1].deficit_exact <= 0.01


def test_deficit_halves_when_n_doubles():
    records = zeno_sweep(sigma_x_config((64, 128))).records
    assert records[0].deficit_exact / records[1].deficit_exact == pytest.approx(2.0, rel=0.1)


def test_eigenvector_sweep_is_exactly_stable():
    cfg = ZenoConfig(
        span=2.0,
        n_list=POWERS_OF_TWO,
        hamiltonian=ConstantHamiltonian(SIGMA_X),
        state=IdenticalSlots(AuxState(np.array([1, -1]) / np.sqrt(2))),
    )
    sweep = zeno_sweep(cfg)
    assert all(r.deficit_exact <= 1e-12 for r in sweep.records)


def test_parallel_sweep_matches_serial():
    cfg = ZenoConfig(
        span=1.0,
        n_list=(2, 3, 5, 8, 13),
        hamiltonian=RandomHamiltonian(3, 17, per_slot=True),
        state=RandomSlots(3, 18),
    )
    serial = zeno_sweep(cfg, workers=1)
    parallel = zeno_sweep(cfg, workers=4)
    assert [r.model_dump() for r in serial.records] == [r.model_dump() for r in parallel.records]


def test_dynamic_zeno_on_schroedinger_path():
    h_op = random_hermitian(2, 4)
    cfg = ZenoConfig(
        span=1.0,
        n_list=(8, 16, 32, 64, 128),
        hamiltonian=ConstantHamiltonian(h_op),
        state=SchroedingerPath(random_state(2, 5)),
    )
    sweep = zeno_sweep(cfg)
    assert sweep.records[-1].deficit_exact < sweep.records[0].deficit_exact
    assert -1.3 <= sweep.deficit_fit.slope <= -0.7


def test_zeno_config_rejects_bad_n_list():
    with pytest.raises(RejectedInputError):
        sigma_x_config((4, 2))
    with pytest.raises(RejectedInputError):
        sigma_x_config(())
    with pytest.raises(RejectedInputError):
        ZenoConfig(span=0.0, n_list=(1,), hamiltonian=ConstantHamiltonian(SIGMA_X), state=IdenticalSlots(UP))


def test_sources_build_for_any_grid():
    grid = TimeGrid(0.5, 3, 1.5)
    gen = TimeDependentHamiltonian(2, lambda t: HermitianOperator(t * PAULI_Z)).build(grid)
    assert np.allclose(gen.hamiltonians[2].entries, 1.5 * PAULI_Z)
    slots = SlotHamiltonians((SIGMA_X, SIGMA_X, HermitianOperator(PAULI_Z))).build(grid)
    assert slots.n == 3
    with pytest.raises(RejectedInputError):
        SlotHamiltonians((SIGMA_X,)).build(grid)
    phi = ExplicitSlots((UP, UP, AuxState([0, 1]))).build(grid, slots)
    assert phi.n == 3


def test_fit_loglog_needs_three_positive_points():
    assert fit_loglog([1, 2, 4], [1.0, 0.0, 0.25]) is None
    fit = fit_loglog([1, 2, 4, 8], [1.0, 0.25, 0.0625, 0.015625])
    assert fit.slope == pytest.approx(-2.0)
    assert fit.intercept == pytest.approx(0.0, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.points == 4


# =============================================================================
# Schroedinger paths and stability
# =============================================================================

def test_sweep_warns_when_fits_are_unavailable(caplog):
    with caplog.at_level(logging.WARNING, logger="zenolab.physics.zeno"):
        sweep = zeno_sweep(sigma_x_config(n_list=(1, 2)))
    assert sweep.deficit_fit is None
    assert sweep.prediction_error_fit is None
    warnings = [r.getMessage() for r in caplog.records if r.levelno == logging.WARNING]
    assert any("deficit fit unavailable" in m for m in warnings)
    assert any("prediction-error fit unavailable" in m for m in warnings)


def test_sweep_prediction_is_the_public_formula():
    cfg = ZenoConfig(
        span=1.3,
        n_list=(3, 5, 9),
        hamiltonian=RandomHamiltonian(3, seed=4, per_slot=True),
        state=RandomSlots(3, seed=5),
    )
    for record in zeno_sweep(cfg).records:
        grid = TimeGrid(0.0, record.n, cfg.span)
        gen = cfg.hamiltonian.build(grid)
        phi = cfg.state.build(grid, gen)
        assert record.s_pred == survival_probability_predicted(phi, gen, cfg.span, record.n)


def test_zero_generator_path_is_constant():
    h0 = random_state(3, 1)
    path = make_schroedinger_path(h0, GeneratorSpec.zero(3, 4), TimeGrid(0.0, 4, 1.0))
    assert np.allclose(path.array, np.tile(h0.entries, (4, 1)))


def test_sigma_z_path_is_phase_only():
    grid = TimeGrid(0.0, 5, 1.0)
    path = make_schroedinger_path(UP, GeneratorSpec.constant(HermitianOperator(PAULI_Z), 5), grid)
    expected = np.exp(-1j * (grid.times - grid.t_start))
    assert np.allclose(path.array[:, 0], expected, atol=1e-14)
    assert np.allclose(path.array[:, 1], 0)


def test_path_slots_stay_unit_norm():
    grid = TimeGrid(0.0, 50, 2.0)
    path = make_schroedinger_path(random_state(3, 2), GeneratorSpec.constant(random_hermitian(3, 3), 50), grid)
    assert np.allclose(path.slot_norms(), 1.0, atol=1e-12)


def test_residual_halves_with_dt():
    h_op = random_hermitian(3, 99)
    h0 = random_state(3, 100)
    maxima = []
    for n in (64, 128, 256, 512):
        grid = TimeGrid(0.0, n, 1.0)
        gen = GeneratorSpec.constant(h_op, n)
        maxima.append(schroedinger_residual(make_schroedinger_path(h0, gen, grid), gen).max_residual)
    for coarse, fine in zip(maxima, maxima[1:]):
        assert coarse / fine == pytest.approx(2.0, rel=0.2)


def test_residual_is_zero_for_static_path():
    phi = constant_state(6)
    report = schroedinger_residual(phi, GeneratorSpec.zero(2, 6))
    assert report.residuals == [0.0] * 5
    assert report.max_residual == 0.0


def test_random_path_is_not_a_solution():
    grid = TimeGrid(0.0, 32, 1.0)
    phi = RandomSlots(2, 3).build(grid, GeneratorSpec.zero(2, 32))
    assert schroedinger_residual(phi, GeneratorSpec.constant(SIGMA_X, 32)).max_residual > 1.0


def test_residual_needs_two_slots():
    with pytest.raises(RejectedInputError):
        schroedinger_residual(constant_state(1), GeneratorSpec.zero(2, 1))


def test_stationarity_in_kernel():
    phi = constant_state(3)
    gen = GeneratorSpec.constant(HermitianOperator(np.diag([0.0, 1.0])), 3)
    chain = HistoryChain(ProjectionFamily.basis(2, 3), (0, 0, 0))
    assert stationarity_check(chain, phi, gen, 0.01) <= 1e-10
    assert stationarity_check(chain, phi, GeneratorSpec.zero(2, 3), 0.01) <= 1e-15


def test_stationarity_of_eigenvector_with_unit_eigenvalue():
    phi = constant_state(3)
    gen = GeneratorSpec.constant(HermitianOperator(PAULI_Z), 3)
    chain = HistoryChain(ProjectionFamily.basis(2, 3), (0, 0, 0))
    assert stationarity_check(chain, phi, gen, 0.01) == pytest.approx(abs(np.exp(-0.01j) - 1), rel=1e-10)
    assert phase_drift(chain, phi, gen, 0.01) <= 1e-14


def test_phase_drift_detects_rotation():
    phi = constant_state(2)
    gen = GeneratorSpec.constant(SIGMA_X, 2)
    chain = HistoryChain(ProjectionFamily.basis(2, 2), (0, 0))
    expected = 1 - abs(np.vdot(UP.entries, hermitian_exponential(SIGMA_X, 0.1).apply(UP).entries))
    assert phase_drift(chain, phi, gen, 0.1) == pytest.approx(expected)
