"""Two-ion Schrodinger integration in a truncated number basis.

Used to measure heating from the leading anharmonic (cubic) Coulomb term,
which the Gaussian treatment cannot represent.  Positions are in units of
the qubit zero-point length x0 = sqrt(hbar/(m1 omega0)) and energies in
hbar omega0.  The quadratic part of the Hamiltonian then has the same
coefficients as in scaled units; the cubic term picks up one factor of
lam = x0/l0:

    H3 = -lam / (2 r^4) (q1 - q2)^3
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.integrate import solve_ivp
from scipy.special import gammaln

from .errors import IntegrationError
from .gaussian import QuadraticModel

log = logging.getLogger(__name__)


class CutoffLeakageError(IntegrationError):
    """Population reached the top of the truncated basis."""


def ladder(n):
    return sparse.diags(np.sqrt(np.arange(1, n, dtype=float)), 1, format="csr")


def single_ion_operators(n, mass):
    """(q, p) for one ion in the omega0 frame, truncated to n levels."""
    a = ladder(n)
    ad = a.T.tocsr()
    q = (a + ad) / math.sqrt(2 * mass)
    p = 1j * math.sqrt(mass / 2) * (ad - a)
    return q.tocsr(), p.tocsr()


@dataclass
class FockState:
    cutoffs: tuple
    amplitudes: np.ndarray
    mu: float = 1.0
    norm_drift: float = 0.0

    def __post_init__(self):
        n1, n2 = self.cutoffs
        if n1 < 4 or n2 < 4:
            raise ValueError("cutoffs must be at least 4")
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex).reshape(n1, n2)

    @property
    def vector(self):
        return self.amplitudes.reshape(-1)

    @property
    def norm(self):
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    def populations(self):
        return np.abs(self.amplitudes) ** 2

    def mean_phonons(self):
        P = self.populations()
        n1 = float(np.arange(self.cutoffs[0]) @ P.sum(axis=1))
        n2 = float(np.arange(self.cutoffs[1]) @ P.sum(axis=0))
        return n1, n2

    def top_population(self):
        P = self.populations()
        return float(max(P[-1, :].sum(), P[:, -1].sum()))

    @classmethod
    def product(cls, psi1, psi2, mu=1.0):
        psi1 = np.asarray(psi1, complex)
        psi2 = np.asarray(psi2, complex)
        return cls((len(psi1), len(psi2)), np.outer(psi1, psi2), mu)


def number_state(n, cutoff):
    psi = np.zeros(cutoff, complex)
    psi[n] = 1.0
    return psi


def coherent_state(alpha, cutoff):
    """Truncated, renormalised coherent state."""
    n = np.arange(cutoff)
    if alpha == 0:
        return number_state(0, cutoff)
    logmag = -0.5 * abs(alpha) ** 2 + n * math.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    psi = np.exp(logmag) * np.exp(1j * n * np.angle(alpha))
    return psi / np.linalg.norm(psi)


@dataclass
class AnharmonicModel:
    """Quadratic model plus the cubic Coulomb correction.

    ``lam`` is x0/l0.  ``printed_sign`` flips the cubic term to the
    positive sign used in some write-ups; the Taylor-correct sign is negative.
    """

    quadratic: QuadraticModel
    lam: float
    include_cubic: bool = True
    printed_sign: bool = False

    @property
    def mu(self):
        return self.quadratic.mu

    def coefficients(self, t):
        """(xi1_sq, xi2_sq, c, g3) with H3 = g3 (q1 - q2)^3."""
        xi1, xi2, c = self.quadratic.coefficients(t)
        if self.include_cubic:
            # 1/r^4 = (2c)^(4/3)
            g3 = -0.5 * self.lam * (2 * np.asarray(c)) ** (4 / 3)
            if self.printed_sign:
                g3 = -g3
        else:
            g3 = np.zeros_like(np.asarray(c, dtype=float))
        return xi1, xi2, c, g3


@dataclass
class OperatorSet:
    """Static pieces of the Hamiltonian on a fixed two-ion basis."""

    cutoffs: tuple
    mu: float
    kinetic: sparse.csr_matrix
    q1_sq: sparse.csr_matrix
    q2_sq: sparse.csr_matrix
    diff_sq: sparse.csr_matrix
    diff_cube: sparse.csr_matrix
    q: tuple = field(default=())
    p: tuple = field(default=())

    @classmethod
    def build(cls, cutoffs, mu):
        n1, n2 = cutoffs
        q1, p1 = single_ion_operators(n1, 1.0)
        q2, p2 = single_ion_operators(n2, mu)
        I1 = sparse.identity(n1, format="csr")
        I2 = sparse.identity(n2, format="csr")
        Q1 = sparse.kron(q1, I2, format="csr")
        P1 = sparse.kron(p1, I2, format="csr")
        Q2 = sparse.kron(I1, q2, format="csr")
        P2 = sparse.kron(I1, p2, format="csr")
        # squares of the single-ion operators are formed before the kron so
        # that they are exact within the truncated space apart from the top level
        kinetic = (sparse.kron((p1 @ p1) / 2, I2) + sparse.kron(I1, (p2 @ p2) / (2 * mu))).real
        q1_sq = sparse.kron((q1 @ q1) / 2, I2, format="csr")
        q2_sq = sparse.kron(I1, (q2 @ q2) / 2, format="csr")
        D = (Q1 - Q2).tocsr()
        diff_sq = (D @ D).tocsr()
        diff_cube = (diff_sq @ D).tocsr()
        return cls(cutoffs, mu, kinetic.tocsr(), q1_sq, q2_sq, diff_sq, diff_cube, (Q1, Q2), (P1, P2))

    def hamiltonian(self, xi1, xi2, c, g3):
        return (
            self.kinetic
            + xi1 * self.q1_sq
            + xi2 * self.q2_sq
            + c * self.diff_sq
            + g3 * self.diff_cube
        ).tocsr()

    def stacked(self):
        return sparse.vstack(
            [self.kinetic, self.q1_sq, self.q2_sq, self.diff_sq, self.diff_cube], format="csr"
        ).astype(complex)


def build_hamiltonian(model: AnharmonicModel, t, cutoffs):
    """Sparse Hamiltonian at time t on the truncated basis."""
    ops = OperatorSet.build(tuple(cutoffs), model.mu)
    xi1, xi2, c, g3 = (float(x) for x in model.coefficients(float(t)))
    return ops.hamiltonian(xi1, xi2, c, g3)


@dataclass
class FockRun:
    state: FockState
    times: np.ndarray
    n1: np.ndarray
    n2: np.ndarray
    norm: np.ndarray
    max_top_population: float

    @property
    def final_phonons(self):
        return self.state.mean_phonons()


def propagate_fock(model: AnharmonicModel, initial: FockState, rtol=1e-10, atol=1e-12,
                   n_trace=None, leakage_tol=1e-8, ops=None) -> FockRun:
    """Integrate i d|psi>/dt = H(t)|psi> over [0, T] with adaptive DOP853.

    Raises :class:`IntegrationError` on norm drift above 1e-6 and
    :class:`CutoffLeakageError` when the highest level of either ion
    carries more than ``leakage_tol`` population at any traced time.
    """
    T = model.quadratic.T
    n1c, n2c = initial.cutoffs
    if ops is None:
        ops = OperatorSet.build((n1c, n2c), model.mu)
    stacked = ops.stacked()
    dim = n1c * n2c
    if n_trace is None:
        n_trace = max(int(round(T / model.quadratic.dt)), 1) + 1 if T > 0 else 1
    t_eval = np.linspace(0.0, T, n_trace) if T > 0 else np.array([0.0])

    psi0 = initial.vector.copy()
    if T <= 0:
        y = psi0[:, None]
    else:
        def rhs(t, psi):
            xi1, xi2, c, g3 = model.coefficients(t)
            parts = (stacked @ psi).reshape(5, dim)
            h_psi = parts[0] + xi1 * parts[1] + xi2 * parts[2] + c * parts[3] + g3 * parts[4]
            return -1j * h_psi

        sol = solve_ivp(rhs, (0.0, T), psi0, method="DOP853", t_eval=t_eval, rtol=rtol, atol=atol)
        if not sol.success:
            raise IntegrationError(f"Fock integration failed: {sol.message}")
        y = sol.y

    amps = y.T.reshape(-1, n1c, n2c)
    P = np.abs(amps) ** 2
    norm = P.sum(axis=(1, 2))
    n1 = (P.sum(axis=2) @ np.arange(n1c)) / norm
    n2 = (P.sum(axis=1) @ np.arange(n2c)) / norm
    top = float(max(P[:, -1, :].sum(axis=1).max(), P[:, :, -1].sum(axis=1).max()))
    drift = float(np.max(np.abs(norm - norm[0])))
    if drift > 1e-6:
        raise IntegrationError(f"norm drift {drift:.3g} exceeds 1e-6")
    if top > leakage_tol:
        raise CutoffLeakageError(
            f"population {top:.3g} at the basis cutoff {initial.cutoffs}; rerun with larger cutoffs"
        )
    final = FockState((n1c, n2c), amps[-1], initial.mu, norm_drift=drift)
    return FockRun(final, t_eval, n1, n2, norm, top)


def expectation(state: FockState, op):
    v = state.vector
    return complex(np.vdot(v, op @ v))


def moments(state: FockState, ops: OperatorSet):
    """First moments and symmetrised covariance of (q1, p1, q2, p2)."""
    Q1, Q2 = ops.q
    P1, P2 = ops.p
    R = [Q1, P1, Q2, P2]
    v = state.vector
    Rv = [op @ v for op in R]
    mean = np.array([np.vdot(v, x).real for x in Rv])
    cov = np.empty((4, 4))
    for i in range(4):
        for j in range(4):
            cov[i, j] = np.vdot(Rv[i], Rv[j]).real - mean[i] * mean[j]
    cov = 0.5 * (cov + cov.T)
    return mean, cov


def fidelity(a: FockState, b: FockState):
    """|<a|b>|^2.  Insensitive to per-ion phases when either state is a
    product of number states."""
    return float(abs(np.vdot(a.vector, b.vector)) ** 2)


@dataclass
class SweepRow:
    cutoff: int
    n1_final: float
    n2_final: float
    top_population: float
    status: str


@dataclass
class SweepResult:
    rows: list
    converged: bool
    tolerance: float

    @property
    def top_two_change(self):
        good = [r for r in self.rows if r.status == "ok"]
        if len(good) < 2:
            return math.inf
        return abs(good[-1].n1_final - good[-2].n1_final)


def convergence_sweep(model: AnharmonicModel, make_initial, cutoffs, tol=1e-4, **kwargs) -> SweepResult:
    """Final qubit phonons against basis size.

    ``make_initial(cutoff)`` returns the initial :class:`FockState` for a
    given per-ion cutoff.  Leakage at a rung is recorded in the row status.
    """
    if len(cutoffs) < 3:
        raise ValueError("a convergence sweep needs at least three cutoffs")
    rows = []
    for n in sorted(cutoffs):
        initial = make_initial(n)
        try:
            run = propagate_fock(model, initial, n_trace=2, **kwargs)
        except CutoffLeakageError as exc:
            log.info("cutoff %d leaks: %s", n, exc)
            rows.append(SweepRow(n, math.nan, math.nan, math.nan, "leakage"))
            continue
        n1, n2 = run.final_phonons
        rows.append(SweepRow(n, n1, n2, run.max_top_population, "ok"))
    good = [r for r in rows if r.status == "ok"]
    converged = len(good) >= 2 and abs(good[-1].n1_final - good[-2].n1_final) <= tol
    return SweepResult(rows, converged, tol)


@dataclass
class ExcessResult:
    """Final qubit phonons with and without the cubic term, same basis and input."""

    n1_cubic: float
    n1_quadratic: float
    cutoff: int

    @property
    def excess(self):
        return self.n1_cubic - self.n1_quadratic


def cubic_excess(quadratic: QuadraticModel, lam, psi1, cutoff, printed_sign=False, **kwargs) -> ExcessResult:
    """Run the same input with and without the cubic term and compare qubit phonons."""
    initial = FockState.product(psi1, number_state(0, cutoff), quadratic.mu)
    ops = OperatorSet.build((cutoff, cutoff), quadratic.mu)
    kwargs.setdefault("n_trace", 2)
    cubic = propagate_fock(AnharmonicModel(quadratic, lam, True, printed_sign), initial, ops=ops, **kwargs)
    plain = propagate_fock(AnharmonicModel(quadratic, lam, False), initial, ops=ops, **kwargs)
    return ExcessResult(cubic.final_phonons[0], plain.final_phonons[0], cutoff)


def phase_averaged_excess(quadratic: QuadraticModel, lam, nbar, cutoff, samples=16, **kwargs):
    """Cubic excess averaged over coherent inputs |sqrt(nbar) e^{i phi}>.

    The average over equally spaced phases is a Poissonian number-state
    mixture, a cheap stand-in for "nbar phonons" of unknown phase.
    Returns ``(mean_excess, per_phase_excesses)``.
    """
    if samples < 1:
        raise ValueError("need at least one phase sample")
    values = []
    for k in range(samples):
        alpha = math.sqrt(nbar) * np.exp(2j * math.pi * k / samples)
        values.append(cubic_excess(quadratic, lam, coherent_state(alpha, cutoff), cutoff, **kwargs).excess)
    return float(np.mean(values)), values
