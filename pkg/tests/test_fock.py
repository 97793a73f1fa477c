import math

import numpy as np
import pytest

from oracles import classical_cubic_final, gaussian_closure_final, ladder_dense
from sbscool.fock import (
    AnharmonicModel,
    CutoffLeakageError,
    FockState,
    OperatorSet,
    build_hamiltonian,
    coherent_state,
    convergence_sweep,
    expectation,
    fidelity,
    moments,
    number_state,
    propagate_fock,
)
from sbscool.gaussian import QuadraticModel, simulate_waveform, thermal_covariance

MU = 0.6


@pytest.fixture(scope="module")
def lam(config):
    return config.units.zero_point_ratio


@pytest.fixture(scope="module")
def quadratic(sbs_wf):
    return QuadraticModel.from_waveform(sbs_wf)


@pytest.fixture(scope="module")
def one_phonon_run(quadratic, lam):
    initial = FockState.product(number_state(1, 14), number_state(0, 14), MU)
    return propagate_fock(AnharmonicModel(quadratic, lam), initial, n_trace=2)


def _parity(state):
    P = state.populations()
    n1, n2 = np.indices(P.shape)
    return float(P[(n1 + n2) % 2 == 1].sum())


def test_hamiltonian_hermitian(quadratic, lam):
    H = build_hamiltonian(AnharmonicModel(quadratic, lam), quadratic.T / 2, (10, 10))
    assert abs(H - H.conj().T).max() <= 1e-12


def test_static_uncoupled_spectrum():
    # frequency 1 for both ions: H is diagonal with n1 + n2 + 1 below the top level
    model = AnharmonicModel(QuadraticModel.static(1.0, MU, 0.0, MU, T=1.0), 0.0, include_cubic=False)
    n = 8
    H = build_hamiltonian(model, 0.0, (n, n)).toarray()
    keep = [i * n + j for i in range(n - 1) for j in range(n - 1)]
    block = H[np.ix_(keep, keep)]
    expected = [i + j + 1 for i in range(n - 1) for j in range(n - 1)]
    assert np.allclose(np.diag(block), expected, atol=1e-12)
    assert np.max(np.abs(block - np.diag(np.diag(block)))) <= 1e-12


def test_vacuum_separation_fluctuation():
    ops = OperatorSet.build((6, 6), MU)
    vac = FockState.product(number_state(0, 6), number_state(0, 6), MU)
    assert expectation(vac, ops.diff_sq).real == pytest.approx(0.5 + 0.5 / MU, abs=1e-14)
    assert abs(expectation(vac, ops.diff_cube)) <= 1e-14


def test_cubic_operator_against_dense_ladders():
    n = 9
    a = ladder_dense(n)
    I = np.eye(n)
    q1 = np.kron((a + a.T) / math.sqrt(2), I)
    q2 = np.kron(I, (a + a.T) / math.sqrt(2 * MU))
    D = q1 - q2
    dense = D @ D @ D
    ops = OperatorSet.build((n, n), MU)
    # products of truncated operators agree away from the top three levels
    keep = [i * n + j for i in range(n - 3) for j in range(n - 3)]
    sub = np.ix_(keep, keep)
    assert np.max(np.abs(ops.diff_cube.toarray()[sub] - dense[sub])) <= 1e-12
    # one element by hand: <10| D^3 |00> = 3 <D^2>_vac <1|q1|0> = 3 (1/2 + 1/(2 mu)) / sqrt(2)
    assert ops.diff_cube[n, 0] == pytest.approx(3 * (0.5 + 0.5 / MU) / math.sqrt(2), abs=1e-12)


def test_zero_duration_is_identity(quadratic, lam):
    model = AnharmonicModel(QuadraticModel.static(1.0, MU, 0.1, MU, T=0.0), lam)
    initial = FockState.product(number_state(1, 12), number_state(2, 12), MU)
    run = propagate_fock(model, initial)
    assert np.array_equal(run.state.vector, initial.vector)


def test_one_phonon_transfer(one_phonon_run):
    n1, n2 = one_phonon_run.final_phonons
    assert n1 <= 1e-5 and n2 == pytest.approx(1.0, abs=1e-5)
    target = FockState.product(number_state(0, 14), number_state(1, 14), MU)
    assert fidelity(one_phonon_run.state, target) >= 1 - 1e-5


def test_one_phonon_rtol_halving(quadratic, lam, one_phonon_run):
    initial = FockState.product(number_state(1, 14), number_state(0, 14), MU)
    run = propagate_fock(AnharmonicModel(quadratic, lam), initial, rtol=5e-11, n_trace=2)
    assert abs(run.final_phonons[0] - one_phonon_run.final_phonons[0]) <= 1e-9


def test_quadratic_limit_matches_gaussian(sbs_wf, quadratic):
    # second moments evolve linearly for any state when H is quadratic;
    # they weight high levels, so the basis is larger than for populations
    n = 20
    initial = FockState.product(number_state(1, n), number_state(0, n), MU)
    run = propagate_fock(AnharmonicModel(quadratic, 0.0, include_cubic=False), initial, n_trace=2)
    _, cov = moments(run.state, OperatorSet.build((n, n), MU))
    S = simulate_waveform(sbs_wf).S
    expected = S @ thermal_covariance(1.0, 0.0, MU) @ S.T
    assert np.max(np.abs(cov - expected)) <= 1e-6


def test_parity_selection_rule(quadratic, lam):
    initial = FockState.product(number_state(0, 12), number_state(0, 12), MU)
    plain = propagate_fock(AnharmonicModel(quadratic, lam, include_cubic=False), initial, n_trace=2)
    cubic = propagate_fock(AnharmonicModel(quadratic, lam), initial, n_trace=2)
    assert _parity(plain.state) <= 1e-14
    assert _parity(cubic.state) > 1e-8


def test_energy_conserved_when_frozen(lam):
    model = AnharmonicModel(QuadraticModel.static(1.0, MU, 0.2, MU, T=6.0), lam)
    # a sudden static coupling squeezes the omega0-frame state; 16 levels leak
    n = 24
    initial = FockState.product(coherent_state(1.0, n), number_state(0, n), MU)
    H = build_hamiltonian(model, 0.0, (n, n))
    run = propagate_fock(model, initial, n_trace=2, rtol=1e-11)
    assert expectation(run.state, H).real == pytest.approx(expectation(initial, H).real, abs=1e-8)


def test_leakage_is_reported(quadratic, lam):
    initial = FockState.product(coherent_state(math.sqrt(40), 20), number_state(0, 20), MU)
    with pytest.raises(CutoffLeakageError, match="basis cutoff"):
        propagate_fock(AnharmonicModel(quadratic, lam), initial, n_trace=2)


def test_convergence_sweep_one_phonon(quadratic, lam):
    sweep = convergence_sweep(
        AnharmonicModel(quadratic, lam),
        lambda n: FockState.product(number_state(1, n), number_state(0, n), MU),
        (8, 10, 12),
        tol=1e-4,
        leakage_tol=1e-5,
    )
    assert [r.status for r in sweep.rows] == ["leakage", "ok", "ok"]
    assert sweep.converged and sweep.top_two_change <= 1e-4
    with pytest.raises(ValueError):
        convergence_sweep(AnharmonicModel(quadratic, lam), None, (8, 10))


def test_mean_trajectory_against_semiclassical_oracle(quadratic, lam):
    model = AnharmonicModel(quadratic, lam)
    n, alpha = 40, math.sqrt(5)
    initial = FockState.product(coherent_state(alpha, n), number_state(0, n), MU)
    run = propagate_fock(model, initial, n_trace=2)
    mean, _ = moments(run.state, OperatorSet.build((n, n), MU))
    q0 = math.sqrt(2) * alpha
    closure = gaussian_closure_final(model.coefficients, quadratic.T, MU, q0, 0.0)
    classical = classical_cubic_final(model.coefficients, quadratic.T, MU, q0, 0.0)
    harmonic = classical_cubic_final(
        AnharmonicModel(quadratic, lam, include_cubic=False).coefficients, quadratic.T, MU, q0, 0.0
    )
    # the cubic term moves the qubit by ~5e-3; the closure oracle tracks it to 1e-7
    assert np.max(np.abs(classical - harmonic)) > 1e-3
    assert np.max(np.abs(mean - closure)) <= 1e-6
    # dropping the fluctuation term in <d^2> leaves an O(lam) error
    assert np.max(np.abs(mean - classical)) > 1e-4


def test_cubic_sign_flip(quadratic, lam):
    initial = FockState.product(number_state(0, 12), number_state(0, 12), MU)
    a = propagate_fock(AnharmonicModel(quadratic, lam), initial, n_trace=2)
    b = propagate_fock(AnharmonicModel(quadratic, lam, printed_sign=True), initial, n_trace=2)
    # a vacuum input is parity-symmetric, so the sign of the cubic term cannot matter
    assert a.final_phonons[0] == pytest.approx(b.final_phonons[0], abs=1e-12)


def test_state_validation():
    with pytest.raises(ValueError, match="at least 4"):
        FockState((3, 5), np.zeros(15))
    psi = coherent_state(0.0, 5)
    assert np.array_equal(psi, number_state(0, 5))
    assert np.linalg.norm(coherent_state(1.5j, 30)) == pytest.approx(1.0)
