"""Exact Gaussian dynamics of the two-ion quantum fluctuations.

Phase-space ordering is (q1, p1, q2, p2) in scaled units with hbar = 1,
m1 = 1, m2 = mu.  Phonon numbers are counted against oscillators of
frequency omega0 for both ions, so a vacuum has Var(q_i) = 1/(2 m_i) and
Var(p_i) = m_i / 2.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

from .ansatz import AnsatzSpec, AuxiliaryTrajectory, eval_derivatives
from .errors import IntegrationError, ValidationError
from .synthesis import (
    CurvatureWarning,
    Waveform,
    coulomb_coupling,
    curvatures_from_separation,
    omega_minus_from_b,
    separation_from_omega,
)

OMEGA = np.array([[0.0, 1.0], [-1.0, 0.0]])
OMEGA2 = np.kron(np.eye(2), OMEGA)


def symplectic_defect(S):
    n = S.shape[0] // 2
    J = np.kron(np.eye(n), OMEGA)
    return float(np.max(np.abs(S.T @ J @ S - J)))


class QuadraticModel:
    """Time-dependent coefficients of the quadratic fluctuation Hamiltonian.

    H = p1^2/2 + p2^2/(2 mu) + xi1^2 q1^2/2 + xi2^2 q2^2/2 + c (q1 - q2)^2
    """

    def __init__(self, coefficients, T, mu, dt, kind="sbs"):
        self._coefficients = coefficients
        self.T = float(T)
        self.mu = float(mu)
        self.dt = float(dt)
        self.kind = kind

    def coefficients(self, t):
        """Return ``(xi1_sq, xi2_sq, c)`` at time(s) ``t``."""
        return self._coefficients(np.asarray(t, dtype=float))

    @classmethod
    def from_spec(cls, spec: AnsatzSpec, mu, dt, kind="sbs"):
        """Coefficients evaluated in closed form from the ansatz."""

        def coefficients(t):
            d = eval_derivatives(spec, t)
            r = separation_from_omega(omega_minus_from_b(d[0], d[2]), mu)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", CurvatureWarning)
                xi1, xi2, _ = curvatures_from_separation(r, mu)
            return xi1, xi2, coulomb_coupling(r)

        return cls(coefficients, spec.T, mu, dt, kind)

    @classmethod
    def from_waveform(cls, wf: Waveform, analytic=True):
        """Model for a waveform; cubic-spline interpolation when no ansatz is attached."""
        if analytic and wf.spec is not None:
            return cls.from_spec(wf.spec, wf.mu, wf.dt, wf.kind)
        t = wf.times - wf.times[0]
        splines = [CubicSpline(t, y) for y in (wf.xi1_sq, wf.xi2_sq, coulomb_coupling(wf.r))]

        def coefficients(tt):
            return tuple(s(tt) for s in splines)

        return cls(coefficients, wf.T, wf.mu, wf.dt, wf.kind)

    @classmethod
    def static(cls, xi1_sq, xi2_sq, c, mu, T, dt=0.01):
        def coefficients(t):
            ones = np.ones_like(t)
            return xi1_sq * ones, xi2_sq * ones, c * ones

        return cls(coefficients, T, mu, dt, "static")

    def hessians(self, t):
        """Stack of 4x4 Hessians of H at the given times."""
        xi1, xi2, c = self.coefficients(t)
        t = np.atleast_1d(t)
        H = np.zeros((t.size, 4, 4))
        H[:, 0, 0] = xi1 + 2 * c
        H[:, 1, 1] = 1.0
        H[:, 2, 2] = xi2 + 2 * c
        H[:, 3, 3] = 1.0 / self.mu
        H[:, 0, 2] = H[:, 2, 0] = -2 * c
        return H


@dataclass(frozen=True)
class SymplecticRecord:
    S: np.ndarray
    Sigma: np.ndarray
    t: float
    mu: float
    times: np.ndarray | None = None
    S_history: np.ndarray | None = None

    @property
    def defect(self):
        return symplectic_defect(self.S)

    def covariance_at(self, k):
        S = self.S_history[k]
        return S @ self.Sigma_in @ S.T

    @property
    def Sigma_in(self):
        Sinv = -OMEGA2 @ self.S.T @ OMEGA2
        return Sinv @ self.Sigma @ Sinv.T


def propagate_symplectic(model: QuadraticModel, Sigma=None, steps_per_sample=4, keep_history=False):
    """Integrate dS/dt = Omega H(t) S with fixed-step classical RK4.

    The step is ``model.dt / steps_per_sample``.  Raises
    :class:`IntegrationError` when the symplectic defect exceeds 1e-6.
    """
    if Sigma is None:
        Sigma = vacuum_covariance(model.mu)
    n_samples = max(int(round(model.T / model.dt)), 0)
    n_steps = n_samples * steps_per_sample
    S = np.eye(4)
    history = [S.copy()] if keep_history else None
    if n_steps:
        h = model.T / n_steps
        grid = np.arange(2 * n_steps + 1) * (h / 2)
        A = OMEGA2 @ model.hessians(grid)
        for k in range(n_steps):
            A0, Am, A1 = A[2 * k], A[2 * k + 1], A[2 * k + 2]
            k1 = A0 @ S
            k2 = Am @ (S + 0.5 * h * k1)
            k3 = Am @ (S + 0.5 * h * k2)
            k4 = A1 @ (S + h * k3)
            S = S + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
            if keep_history and (k + 1) % steps_per_sample == 0:
                history.append(S.copy())
    defect = symplectic_defect(S)
    if defect > 1e-6:
        raise IntegrationError(f"symplectic defect {defect:.3g} exceeds 1e-6; reduce the step")
    times = np.arange(n_samples + 1) * (model.T / max(n_samples, 1)) if keep_history else None
    return SymplecticRecord(
        S=S,
        Sigma=S @ Sigma @ S.T,
        t=model.T,
        mu=model.mu,
        times=times,
        S_history=np.array(history) if keep_history else None,
    )


# --- frames and states -------------------------------------------------------


def ion_normalizer(mu):
    """Map (q1,p1,q2,p2) to omega0 zero-point units (x1,y1,x2,y2)."""
    s = math.sqrt(mu)
    return np.diag([1.0, 1.0, s, 1.0 / s])


def mode_transform(mu):
    """Canonical map (q1,p1,q2,p2) -> (q+,p+,q-,p-) of the collective modes."""
    s = math.sqrt(mu)
    r = 1 / math.sqrt(2)
    return r * np.array([
        [1.0, 0.0, s, 0.0],
        [0.0, 1.0, 0.0, 1 / s],
        [1.0, 0.0, -s, 0.0],
        [0.0, 1.0, 0.0, -1 / s],
    ])


def vacuum_covariance(mu):
    return thermal_covariance(0.0, 0.0, mu)


def thermal_covariance(n1, n2, mu):
    N = np.linalg.inv(ion_normalizer(mu))
    V = np.diag([n1 + 0.5, n1 + 0.5, n2 + 0.5, n2 + 0.5])
    return N @ V @ N.T


def squeezed_covariance(db, angle, mu, n2=0.0):
    """Ion 1 squeezed by ``db`` decibels along ``angle``; ion 2 thermal ``n2``."""
    r = db / (20 * math.log10(math.e))
    c, s = math.cos(angle), math.sin(angle)
    R = np.array([[c, -s], [s, c]])
    V1 = R @ np.diag([0.5 * math.exp(-2 * r), 0.5 * math.exp(2 * r)]) @ R.T
    V = np.zeros((4, 4))
    V[:2, :2] = V1
    V[2:, 2:] = (n2 + 0.5) * np.eye(2)
    N = np.linalg.inv(ion_normalizer(mu))
    return N @ V @ N.T


def is_physical(Sigma, tol=1e-9):
    """Sigma symmetric and Sigma + i Omega/2 positive semidefinite."""
    if np.max(np.abs(Sigma - Sigma.T)) > tol:
        return False
    n = Sigma.shape[0] // 2
    J = np.kron(np.eye(n), OMEGA)
    return bool(np.min(np.linalg.eigvalsh(Sigma + 0.5j * J)) > -tol)


def mean_phonon(Sigma, mu, which="ion1", frequency=1.0):
    """Mean phonon number of an ion or collective mode, displacement excluded.

    ``frequency`` is the reference frequency for the ``plus``/``minus``
    modes (e.g. sqrt(3) for the stretch mode of two ions in one well).
    """
    if isinstance(Sigma, SymplecticRecord):
        Sigma = Sigma.Sigma
    if which in ("ion1", "ion2"):
        V = ion_normalizer(mu) @ Sigma @ ion_normalizer(mu).T
        i = 0 if which == "ion1" else 2
    elif which in ("plus", "minus"):
        C = mode_transform(mu)
        w = math.sqrt(frequency)
        D = np.diag([w, 1 / w, w, 1 / w])
        V = D @ C @ Sigma @ C.T @ D.T
        i = 0 if which == "plus" else 2
    else:
        raise ValueError(f"unknown mode {which!r}")
    return 0.5 * (V[i, i] + V[i + 1, i + 1] - 1.0)


def bogoliubov_block(M):
    """(alpha, beta) with a' = alpha a + beta a^dagger for a real 2x2 block
    acting on zero-point quadratures (x, y), a = (x + i y)/sqrt(2)."""
    alpha = 0.5 * ((M[0, 0] + M[1, 1]) + 1j * (M[1, 0] - M[0, 1]))
    beta = 0.5 * ((M[0, 0] - M[1, 1]) + 1j * (M[1, 0] + M[0, 1]))
    return alpha, beta


def bogoliubov_matrices(S, mu):
    """Two-ion complex transfer matrices (A, B): a_out = A a + B a^dagger."""
    N = ion_normalizer(mu)
    Sn = N @ S @ np.linalg.inv(N)
    A = np.zeros((2, 2), complex)
    B = np.zeros((2, 2), complex)
    for i in range(2):
        for j in range(2):
            A[i, j], B[i, j] = bogoliubov_block(Sn[2 * i:2 * i + 2, 2 * j:2 * j + 2])
    return A, B


# --- mode-level reports ------------------------------------------------------


def _wrap(x):
    return (x + math.pi) % (2 * math.pi) - math.pi


@dataclass(frozen=True)
class ModeTransferReport:
    """Bogoliubov pairs of the collective modes over the whole process.

    For each mode a_out = alpha a + beta a^dagger, with alpha = eta_plus
    e^{-i theta} and beta = eta_minus e^{i theta}.
    """

    alpha_plus: complex
    beta_plus: complex
    alpha_minus: complex
    beta_minus: complex
    theta_plus: float
    theta_minus: float
    out_frequency_minus: float = 1.0

    @property
    def eta_minus_abs(self):
        return abs(self.beta_minus)

    @property
    def phase_error(self):
        return abs(_wrap(self.theta_minus - self.theta_plus - math.pi))

    @property
    def transfer_phase_error(self):
        """Phase error read from the transfer amplitudes themselves.

        Differs from :attr:`phase_error` by the phases of eta_plus at the
        two ends, which vanish only when b = 1 and b' = 0 there exactly.
        """
        return abs(_wrap(np.angle(self.alpha_plus) - np.angle(self.alpha_minus) - math.pi))

    @property
    def swap_error(self):
        return max(abs(self.beta_minus), abs(self.beta_plus), self.transfer_phase_error)

    @property
    def normalization_defect(self):
        return max(
            abs(abs(self.alpha_plus) ** 2 - abs(self.beta_plus) ** 2 - 1),
            abs(abs(self.alpha_minus) ** 2 - abs(self.beta_minus) ** 2 - 1),
        )


def _frame_change(M, w_in, w_out):
    # (q, p) block -> zero-point quadratures of frequency w_in (input) and w_out (output)
    D_in = np.diag([math.sqrt(w_in), 1 / math.sqrt(w_in)])
    D_out = np.diag([math.sqrt(w_out), 1 / math.sqrt(w_out)])
    return D_out @ M @ np.linalg.inv(D_in)


def ermakov_propagator(b0, bd0, b, bd, theta):
    """Exact 2x2 (q, p) propagator of p^2/2 + w(t)^2 q^2/2 from an Ermakov solution.

    ``theta`` is int dt/b^2 from the initial time.
    """
    c, s = math.cos(theta), math.sin(theta)
    return np.array([
        [b * c / b0 - b * bd0 * s, b * b0 * s],
        [bd * c / b0 - bd * bd0 * s - s / (b * b0) - bd0 * c / b, bd * b0 * s + b0 * c / b],
    ])


def invariant_prediction(traj: AuxiliaryTrajectory, k=-1) -> ModeTransferReport:
    """Collective-mode transfer predicted from b(t) alone.

    The plus mode rotates at omega0.  The stretch mode follows the
    Lewis-Riesenfeld invariant; the actual b(0), b'(0) are used so that
    the small truncated ansatz tail is accounted for exactly.  Index ``k``
    selects the output time on the trajectory grid.
    """
    T = float(traj.times[k] - traj.times[0])
    theta = float(traj.theta_minus[k] - traj.theta_minus[0])
    M_minus = ermakov_propagator(traj.b[0], traj.b_dot[0], traj.b[k], traj.b_dot[k], theta)
    w_out = 1.0
    if traj.spec.kind == "combine_sigmoid" and k in (-1, len(traj.times) - 1):
        w_out = math.sqrt(3.0)
    M_plus = np.array([[math.cos(T), math.sin(T)], [-math.sin(T), math.cos(T)]])
    a_p, b_p = bogoliubov_block(M_plus)
    a_m, b_m = bogoliubov_block(_frame_change(M_minus, 1.0, w_out))
    return ModeTransferReport(a_p, b_p, a_m, b_m, T, theta, w_out)


def ideal_transform_at(traj: AuxiliaryTrajectory, k):
    """Paper-form (eta_plus, eta_minus) at sample k assuming b(0)=1, b'(0)=0."""
    b, bd = traj.b[k], traj.b_dot[k]
    return 0.5 * (b + 1 / b + 1j * bd), 0.5 * (b - 1 / b + 1j * bd)


def ode_mode_report(record: SymplecticRecord, out_frequency_minus=1.0) -> ModeTransferReport:
    """Collective-mode transfer read off the propagated fundamental matrix."""
    C = mode_transform(record.mu)
    Sm = C @ record.S @ np.linalg.inv(C)
    a_p, b_p = bogoliubov_block(Sm[:2, :2])
    a_m, b_m = bogoliubov_block(_frame_change(Sm[2:, 2:], 1.0, out_frequency_minus))
    # the phases are only defined modulo 2 pi from the matrix; anchor on the
    # unwrapped +-mode angle so theta_minus - theta_plus is meaningful
    theta_p = -np.angle(a_p)
    theta_m = -np.angle(a_m)
    theta_p = record.t + _wrap(theta_p - record.t)
    theta_m = theta_p + _wrap(theta_m - theta_p - math.pi) + math.pi
    return ModeTransferReport(a_p, b_p, a_m, b_m, theta_p, theta_m, out_frequency_minus)


def mode_cross_block(record: SymplecticRecord):
    """Largest entry of the plus/minus off-diagonal blocks of S in mode coordinates."""
    C = mode_transform(record.mu)
    Sm = C @ record.S @ np.linalg.inv(C)
    return float(max(np.max(np.abs(Sm[:2, 2:])), np.max(np.abs(Sm[2:, :2]))))


def crosscheck_oracle(record: SymplecticRecord, report: ModeTransferReport, tol=1e-6, raise_on_fail=True):
    """Largest componentwise difference between the ODE and invariant results."""
    ode = ode_mode_report(record, report.out_frequency_minus)
    diffs = []
    for name in ("alpha_plus", "beta_plus", "alpha_minus", "beta_minus"):
        x, y = getattr(ode, name), getattr(report, name)
        diffs += [abs(x.real - y.real), abs(x.imag - y.imag)]
    diffs.append(abs(_wrap(np.angle(ode.alpha_minus) - np.angle(report.alpha_minus))))
    diffs.append(abs(_wrap(np.angle(ode.alpha_plus) - np.angle(report.alpha_plus))))
    deviation = float(max(diffs))
    if raise_on_fail and deviation > tol:
        raise ValidationError(
            f"ODE and invariant solutions disagree by {deviation:.3g} (> {tol:g}); "
            "the grid may be under-resolved"
        )
    return deviation


# --- swap verification -------------------------------------------------------


def _rotation(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def swap_deviation(S, mu):
    """min over theta of ||S - S_swap(theta)||_2 in zero-point units, and the minimiser."""
    N = ion_normalizer(mu)
    Sn = N @ S @ np.linalg.inv(N)

    def cost(theta):
        R = _rotation(theta)
        ideal = np.block([[np.zeros((2, 2)), R], [R, np.zeros((2, 2))]])
        return np.linalg.norm(Sn - ideal, 2)

    grid = np.linspace(0, 2 * math.pi, 73)
    start = grid[int(np.argmin([cost(t) for t in grid]))]
    res = minimize_scalar(cost, bounds=(start - 0.1, start + 0.1), method="bounded",
                          options={"xatol": 1e-12})
    return float(res.fun), float(res.x % (2 * math.pi))


@dataclass(frozen=True)
class SwapReport:
    deviation: float
    theta: float
    theta_qubit: float
    theta_coolant: float
    residual_qubit_thermal: float
    residual_qubit_squeezed: float
    coolant_final_thermal: float

    @property
    def phase_difference(self):
        return _wrap(self.theta_qubit - self.theta_coolant)

    def as_dict(self):
        return {k: float(v) for k, v in self.__dict__.items()}


def residual_qubit_phonons(S, mu, Sigma_in):
    return mean_phonon(S @ Sigma_in @ S.T, mu, "ion1")


def verify_swap(record: SymplecticRecord, n_thermal=5.0, squeeze_db=5.0) -> SwapReport:
    """Compare the final map with an ideal motional swap and check cooling."""
    mu = record.mu
    S = record.S
    deviation, theta = swap_deviation(S, mu)
    A, _ = bogoliubov_matrices(S, mu)
    thermal = thermal_covariance(n_thermal, 0.0, mu)
    return SwapReport(
        deviation=deviation,
        theta=theta,
        theta_qubit=float(np.angle(A[0, 1])),
        theta_coolant=float(np.angle(A[1, 0])),
        residual_qubit_thermal=residual_qubit_phonons(S, mu, thermal),
        residual_qubit_squeezed=residual_qubit_phonons(S, mu, squeezed_covariance(squeeze_db, 0.3, mu)),
        coolant_final_thermal=mean_phonon(S @ thermal @ S.T, mu, "ion2"),
    )


def phonon_trace(record: SymplecticRecord, Sigma_in):
    """(t, n1, n2) at every sample time of a record propagated with history."""
    if record.S_history is None:
        raise ValueError("record was propagated without history")
    n1 = np.empty(len(record.times))
    n2 = np.empty(len(record.times))
    for k, S in enumerate(record.S_history):
        V = S @ Sigma_in @ S.T
        n1[k] = mean_phonon(V, record.mu, "ion1")
        n2[k] = mean_phonon(V, record.mu, "ion2")
    return record.times, n1, n2


def simulate_waveform(wf: Waveform, Sigma_in=None, steps_per_sample=4, keep_history=False):
    """Convenience: build the model for ``wf`` and propagate ``Sigma_in``."""
    model = QuadraticModel.from_waveform(wf)
    return propagate_symplectic(model, Sigma_in, steps_per_sample, keep_history)


def gaussian_report(wf: Waveform, record: SymplecticRecord, Sigma_in):
    """Fields of the JSON simulation report."""
    out_w = math.sqrt(3.0) if wf.kind == "combine" else 1.0
    ode = ode_mode_report(record, out_w)
    Sigma_out = record.S @ Sigma_in @ record.S.T
    report = {
        "eta_minus_abs_final": float(abs(ode.beta_minus)),
        "theta_diff_minus_pi": float(_wrap(ode.theta_minus - ode.theta_plus - math.pi)),
        "swap_error": float(ode.swap_error),
        "n1_final": float(mean_phonon(Sigma_out, wf.mu, "ion1")),
        "n2_final": float(mean_phonon(Sigma_out, wf.mu, "ion2")),
        "symplectic_defect": float(record.defect),
    }
    if wf.kind == "combine":
        # a merge is not a swap; the figure of merit is the stretch excitation
        report["swap_error"] = None
        report["stretch_excitation"] = float(abs(ode.beta_minus) ** 2)
        report["n_com_final"] = float(mean_phonon(Sigma_out, wf.mu, "plus"))
        report["n_stretch_final"] = float(mean_phonon(Sigma_out, wf.mu, "minus", out_w))
    return report
