import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import midpoint_expm_propagator
from sbscool.ansatz import AnsatzSpec, sample_trajectory
from sbscool.errors import IntegrationError, ValidationError
from sbscool.gaussian import (
    QuadraticModel,
    bogoliubov_matrices,
    crosscheck_oracle,
    invariant_prediction,
    is_physical,
    mean_phonon,
    mode_cross_block,
    ode_mode_report,
    propagate_symplectic,
    simulate_waveform,
    squeezed_covariance,
    swap_deviation,
    symplectic_defect,
    thermal_covariance,
    vacuum_covariance,
    verify_swap,
)

CONFIGS = [(0.6, 2.0), (0.6, 3.0), (1.0, 2.0), (1.5, 2.0), (1.5, 3.0)]


@pytest.fixture(scope="module")
def sbs_record(sbs_wf):
    return simulate_waveform(sbs_wf, keep_history=True)


def test_uncoupled_rotation():
    model = QuadraticModel.static(1.0, 0.6, 0.0, 0.6, T=2.7)
    S = propagate_symplectic(model).S
    c, s = math.cos(2.7), math.sin(2.7)
    # ion 1: mass 1, frequency 1; ion 2: mass 0.6, frequency 1
    expected = np.array([[c, s, 0, 0], [-s, c, 0, 0], [0, 0, c, s / 0.6], [0, 0, -0.6 * s, c]])
    assert np.max(np.abs(S - expected)) < 1e-10


def test_symplectic_at_every_sample(sbs_record):
    assert max(symplectic_defect(S) for S in sbs_record.S_history) <= 1e-9


def test_step_halving(sbs_wf):
    a = simulate_waveform(sbs_wf, steps_per_sample=4).S
    b = simulate_waveform(sbs_wf, steps_per_sample=8).S
    assert np.max(np.abs(a - b)) <= 1e-8


def test_against_exponential_product(sbs_wf):
    model = QuadraticModel.from_waveform(sbs_wf)
    coarse = midpoint_expm_propagator(model.coefficients, model.T, model.mu, 2000)
    fine = midpoint_expm_propagator(model.coefficients, model.T, model.mu, 4000)
    oracle = (4 * fine - coarse) / 3
    assert np.max(np.abs(propagate_symplectic(model).S - oracle)) <= 1e-8


def test_large_step_is_rejected():
    model = QuadraticModel.static(1.0, 1.0, 0.2, 1.0, T=30.0, dt=3.0)
    with pytest.raises(IntegrationError, match="symplectic defect"):
        propagate_symplectic(model, steps_per_sample=1)


def test_phonon_numbers_of_reference_states():
    for mu in (0.6, 1.0, 2.0):
        assert mean_phonon(vacuum_covariance(mu), mu, "ion2") == pytest.approx(0.0, abs=1e-14)
        Sigma = thermal_covariance(5.0, 2.0, mu)
        assert mean_phonon(Sigma, mu, "ion1") == pytest.approx(5.0)
        assert mean_phonon(Sigma, mu, "ion2") == pytest.approx(2.0)
        assert is_physical(Sigma) and is_physical(squeezed_covariance(5.0, 0.3, mu))
    # a coherent displacement changes the mean, not the covariance, so n stays 0
    assert mean_phonon(vacuum_covariance(0.6), 0.6, "ion1") == 0.0
    assert not is_physical(0.1 * np.eye(4))


def test_fock_like_modes_for_thermal_pair():
    Sigma = thermal_covariance(3.0, 3.0, 1.0)
    assert mean_phonon(Sigma, 1.0, "plus") == pytest.approx(3.0)
    assert mean_phonon(Sigma, 1.0, "minus") == pytest.approx(3.0)


def test_invariant_identity_for_constant_b():
    traj = sample_trajectory(AnsatzSpec("constant", T=4.0), 0.01)
    rep = invariant_prediction(traj)
    assert rep.alpha_minus == pytest.approx(np.exp(-4.0j), abs=1e-12)
    assert abs(rep.beta_minus) < 1e-15
    assert rep.theta_minus == pytest.approx(4.0)


def test_invariant_uncoupled_crosscheck():
    traj = sample_trajectory(AnsatzSpec("constant", T=4.0), 0.01)
    record = propagate_symplectic(QuadraticModel.static(1.0, 1.0, 0.0, 1.0, T=4.0))
    assert crosscheck_oracle(record, invariant_prediction(traj)) <= 1e-10


def test_transient_squeezing_mid_process(sbs_wf):
    traj = sbs_wf.trajectory
    k = len(traj.times) // 2
    b = traj.b[k]
    # ideal-boundary formula (b - 1/b + i b')/2 evaluated at the centre
    assert abs(0.5 * (b - 1 / b)) == pytest.approx(0.4176, abs=1e-3)
    model = QuadraticModel.from_waveform(sbs_wf)
    model.T = float(traj.times[k])
    record = propagate_symplectic(model)
    assert abs(ode_mode_report(record).beta_minus) > 0.4


def test_resolved_transfer(sbs_wf, sbs_record):
    inv = invariant_prediction(sbs_wf.trajectory)
    assert inv.phase_error <= 1e-4 + 1e-9
    assert inv.eta_minus_abs <= 1e-3
    assert crosscheck_oracle(sbs_record, inv) <= 1e-6
    ode = ode_mode_report(sbs_record)
    assert ode.normalization_defect <= 1e-9 and inv.normalization_defect <= 1e-9


@pytest.mark.parametrize("mu, sigma_sq", CONFIGS)
def test_dual_methods_agree(sbs_factory, mu, sigma_sq):
    wf = sbs_factory(mu, sigma_sq)
    record = simulate_waveform(wf)
    assert crosscheck_oracle(record, invariant_prediction(wf.trajectory)) <= 1e-6
    assert mode_cross_block(record) <= 1e-9


def test_coarsening_grows_disagreement(config, sbs_wf):
    inv = invariant_prediction(sbs_wf.trajectory)
    devs = []
    # a factor of 8 already trips the symplectic-defect guard
    for factor in (1, 2, 4):
        model = QuadraticModel.from_waveform(sbs_wf)
        model.dt = sbs_wf.dt * factor
        record = propagate_symplectic(model, steps_per_sample=1)
        devs.append(crosscheck_oracle(record, inv, raise_on_fail=False))
    assert devs[0] < devs[1] < devs[2]
    with pytest.raises(ValidationError):
        crosscheck_oracle(record, inv, tol=devs[2] / 2)


def test_vacuum_bookkeeping(sbs_wf, sbs_record):
    mu = sbs_wf.mu
    out = sbs_record.S @ vacuum_covariance(mu) @ sbs_record.S.T
    ode = ode_mode_report(sbs_record)
    total = mean_phonon(out, mu, "ion1") + mean_phonon(out, mu, "ion2")
    assert total == pytest.approx(abs(ode.beta_plus) ** 2 + abs(ode.beta_minus) ** 2, abs=1e-8)


def test_cooling_swap(sbs_record):
    rep = verify_swap(sbs_record)
    assert rep.residual_qubit_thermal <= 1e-6
    assert rep.residual_qubit_squeezed <= 1e-6
    assert rep.coolant_final_thermal == pytest.approx(5.0, abs=1e-6)
    # matrix-norm deviation from an ideal swap is 4.8e-4 here; see ledger
    assert rep.deviation <= 1e-3


def test_squeezing_moves_to_coolant(sbs_wf, sbs_record):
    mu = sbs_wf.mu
    Sigma = squeezed_covariance(5.0, 0.0, mu)
    n_in = mean_phonon(Sigma, mu, "ion1")
    out = sbs_record.S @ Sigma @ sbs_record.S.T
    # the residual |beta_+| of 5.5e-4 mixes quadratures of a squeezed input
    assert mean_phonon(out, mu, "ion2") == pytest.approx(n_in, abs=1e-3)
    assert mean_phonon(out, mu, "ion1") <= 1e-6


def test_identity_is_far_from_swap():
    dev, _ = swap_deviation(np.eye(4), 0.6)
    assert dev == pytest.approx(math.sqrt(2), abs=1e-9)


def _random_symplectic_input(rng, mu):
    n = rng.uniform(0, 3)
    db = rng.uniform(0, 5)
    angle = rng.uniform(0, math.pi)
    Sigma = squeezed_covariance(db, angle, mu)
    Sigma[:2, :2] *= 2 * n + 1
    return Sigma


def test_swap_universality_random_inputs(sbs_wf, sbs_record):
    rng = np.random.default_rng(1234)
    mu = sbs_wf.mu
    worst = 0.0
    for _ in range(20):
        Sigma = _random_symplectic_input(rng, mu)
        assert is_physical(Sigma)
        out = sbs_record.S @ Sigma @ sbs_record.S.T
        worst = max(worst, mean_phonon(out, mu, "ion1"))
    assert worst <= 1e-6


@settings(max_examples=20, deadline=None)
@given(n1=st.floats(0, 10), n2=st.floats(0, 10), theta=st.floats(0, 2 * math.pi))
def test_bogoliubov_of_rotation(n1, n2, theta):
    # a pure rotation on each ion has alpha = e^{-i theta}, beta = 0
    c, s = math.cos(theta), math.sin(theta)
    R = np.array([[c, s], [-s, c]])
    S = np.block([[R, np.zeros((2, 2))], [np.zeros((2, 2)), R]])
    A, B = bogoliubov_matrices(S, 1.0)
    assert np.allclose(A, np.diag([np.exp(-1j * theta)] * 2)) and np.allclose(B, 0)
    Sigma = thermal_covariance(n1, n2, 1.0)
    assert mean_phonon(S @ Sigma @ S.T, 1.0, "ion1") == pytest.approx(n1, abs=1e-9)
