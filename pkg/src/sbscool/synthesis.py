"""Turn an auxiliary function b(t) into the four trap-control waveforms.

Units: time 1/omega0, length l0, curvature m1 omega0^2, qubit mass 1,
coolant mass mu.  The Coulomb constant is 1/2, so the quadratic coupling
c = e^2/(4 pi eps0 r^3) is 1/(2 r^3).
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .ansatz import (
    COMBINED_B,
    AnsatzSpec,
    AuxiliaryTrajectory,
    accumulated_phase,
    eval_derivatives,
    uniform_grid,
)
from .errors import SynthesisError
from .units import SCALED_COULOMB_K, CollisionConfig

log = logging.getLogger(__name__)

T_MAX = 100.0
# combine end point: |r - l0| and |b_dot| limits
COMBINE_R_TOL = 1e-2
COMBINE_BDOT_TOL = 1e-4


class CurvatureWarning(UserWarning):
    """A local trap curvature goes negative (transient anti-confinement)."""


def coulomb_coupling(r):
    """Quadratic Coulomb coefficient c = e^2/(4 pi eps0 r^3)."""
    return SCALED_COULOMB_K / np.asarray(r, dtype=float) ** 3


def omega_minus_from_b(b, b_ddot):
    """Invert the Ermakov equation: omega_-^2 = 1/b^4 - b''/b."""
    b = np.asarray(b, dtype=float)
    if np.any(b <= 0):
        raise SynthesisError("auxiliary function must be positive to invert the Ermakov equation")
    return 1.0 / b**4 - np.asarray(b_ddot) / b


def ermakov_residual(b, b_ddot, omega_minus_sq):
    return np.asarray(b_ddot) + omega_minus_sq * b - 1.0 / np.asarray(b) ** 3


def separation_from_omega(omega_minus_sq, mu):
    """Separation that produces the given stretch-mode frequency.

    omega_-^2 = 1 + 4c/sqrt(mu) with c = 1/(2 r^3), so
    r = (2 / (sqrt(mu) (omega_-^2 - 1)))^(1/3).
    """
    excess = np.asarray(omega_minus_sq, dtype=float) - 1.0
    if np.any(excess <= 0):
        raise SynthesisError("separation diverges; enlarge T or reshape ansatz")
    return (4 * SCALED_COULOMB_K / (math.sqrt(mu) * excess)) ** (1 / 3)


def coupling_strength(xi1_sq, xi2_sq, r, mu):
    """Cross coefficient E of q_+ q_- in the collective-mode Hamiltonian."""
    c = coulomb_coupling(r)
    return 0.5 * xi1_sq - 0.5 * xi2_sq / mu + (1 - 1 / mu) * c


def mode_frequencies(xi1_sq, xi2_sq, r, mu):
    """(omega_+^2, omega_-^2) from the exact collective-mode expansion."""
    c = coulomb_coupling(r)
    base = 0.5 * xi1_sq + 0.5 * xi2_sq / mu
    s = 1 / math.sqrt(mu)
    return base + c * (1 - s) ** 2, base + c * (1 + s) ** 2


def mode_frequencies_printed(xi1_sq, xi2_sq, r, mu):
    """The literal published expression; agrees with the exact one only for mu = 1."""
    c = coulomb_coupling(r)
    base = 0.5 * xi1_sq + 0.5 * xi2_sq / mu
    s = 1 / math.sqrt(mu)
    return base + 2 * c * (s - 1), base + 2 * c * (s + 1)


def curvatures_from_separation(r, mu, strict=False, times=None):
    """Local curvatures that decouple the modes and pin omega_+ = omega0.

    Returns ``(xi1_sq, xi2_sq, coupling)``.  The qubit curvature is
    m1 w0^2 + (sqrt(m1/m2) - 1) e^2/(2 pi eps0 r^3) and the coolant's is
    m2 xi1^2/m1 + (m2/m1 - 1) e^2/(2 pi eps0 r^3).
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise SynthesisError("separation must be positive")
    two_c = 2 * coulomb_coupling(r)
    xi1_sq = 1.0 + (1 / math.sqrt(mu) - 1) * two_c
    xi2_sq = mu * xi1_sq + (mu - 1) * two_c
    coupling = coupling_strength(xi1_sq, xi2_sq, r, mu)
    lowest = min(np.min(xi1_sq), np.min(xi2_sq))
    if lowest < 0:
        which = xi1_sq if np.min(xi1_sq) <= np.min(xi2_sq) else xi2_sq
        idx = int(np.argmin(which))
        when = f" at t={times[idx]:.4g}" if times is not None else ""
        msg = f"transient anti-confinement required: curvature {lowest:.4g}{when}"
        if strict:
            raise SynthesisError(msg)
        warnings.warn(msg, CurvatureWarning, stacklevel=2)
    return xi1_sq, xi2_sq, coupling


def separation_derivatives(b_derivs, mu):
    """r, r', r'' from b, b', b'', b''', b'''' by the chain rule."""
    b, b1, b2, b3, b4 = b_derivs
    P = b**-4
    P1 = -4 * b**-5 * b1
    P2 = 20 * b**-6 * b1**2 - 4 * b**-5 * b2
    Q = b2 / b
    Q1 = b3 / b - b2 * b1 / b**2
    Q2 = b4 / b - 2 * b3 * b1 / b**2 - b2**2 / b**2 + 2 * b2 * b1**2 / b**3
    W = P - Q - 1.0
    W1 = P1 - Q1
    W2 = P2 - Q2
    r = separation_from_omega(W + 1.0, mu)
    r1 = -r * W1 / (3 * W)
    r2 = -(r1 * W1 / W + r * (W2 * W - W1**2) / W**2) / 3
    return r, r1, r2


def second_derivative_fd(values, dt):
    """Fourth-order finite-difference second derivative on a uniform grid."""
    f = np.asarray(values, dtype=float)
    n = len(f)
    if n < 6:
        raise ValueError("need at least 6 samples for a fourth-order stencil")
    out = np.empty(n)
    out[2:-2] = (-f[:-4] + 16 * f[1:-3] - 30 * f[2:-2] + 16 * f[3:-1] - f[4:]) / 12
    out[0] = (45 * f[0] - 154 * f[1] + 214 * f[2] - 156 * f[3] + 61 * f[4] - 10 * f[5]) / 12
    out[1] = (10 * f[0] - 15 * f[1] - 4 * f[2] + 14 * f[3] - 6 * f[4] + f[5]) / 12
    out[-1] = (45 * f[-1] - 154 * f[-2] + 214 * f[-3] - 156 * f[-4] + 61 * f[-5] - 10 * f[-6]) / 12
    out[-2] = (10 * f[-1] - 15 * f[-2] - 4 * f[-3] + 14 * f[-4] - 6 * f[-5] + f[-6]) / 12
    return out / dt**2


def first_derivative_fd(values, dt):
    """Fourth-order finite-difference first derivative on a uniform grid."""
    f = np.asarray(values, dtype=float)
    out = np.empty(len(f))
    out[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / 12
    out[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / 12
    out[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / 12
    out[-1] = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / 12
    out[-2] = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / 12
    return out / dt


@dataclass(frozen=True)
class ClassicalTrajectory:
    times: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    r_ddot: np.ndarray


def centers_from_classical(r, r_dot, r_ddot, xi1_sq, xi2_sq, mu, times=None):
    """Well centres R1, R2 that make x1 = -x2 = r/2 a classical solution."""
    xi1_sq = np.asarray(xi1_sq)
    xi2_sq = np.asarray(xi2_sq)
    if min(np.min(np.abs(xi1_sq)), np.min(np.abs(xi2_sq))) < 1e-6:
        raise SynthesisError("center undefined at near-zero curvature")
    force = SCALED_COULOMB_K / r**2
    R1 = r / 2 + (r_ddot / 2 - force) / xi1_sq
    R2 = -r / 2 - (mu * r_ddot / 2 - force) / xi2_sq
    if times is None:
        times = np.arange(len(r), dtype=float)
    traj = ClassicalTrajectory(times, r / 2, -r / 2, r_dot / 2, -mu * r_dot / 2, r_ddot)
    return R1, R2, traj


def classical_residuals(r, r_ddot, xi1_sq, xi2_sq, R1, R2, mu):
    """F_1, F_2 from the classical equations of motion with x1 = -x2 = r/2."""
    force = SCALED_COULOMB_K / r**2
    F1 = r_ddot / 2 + xi1_sq * (r / 2 - R1) - force
    F2 = -mu * r_ddot / 2 + xi2_sq * (-r / 2 - R2) + force
    return F1, F2


@dataclass
class Waveform:
    """Sampled control waveforms in scaled units."""

    times: np.ndarray
    r: np.ndarray
    xi1_sq: np.ndarray
    xi2_sq: np.ndarray
    R1: np.ndarray
    R2: np.ndarray
    omega_minus_sq: np.ndarray
    kind: str
    mu: float
    spec: AnsatzSpec | None = None
    r_ddot: np.ndarray | None = None
    trajectory: AuxiliaryTrajectory | None = None
    classical: ClassicalTrajectory | None = None
    meta: dict = field(default_factory=dict)

    @property
    def T(self):
        return float(self.times[-1] - self.times[0])

    @property
    def dt(self):
        return float(self.times[1] - self.times[0])

    @property
    def coupling(self):
        return coupling_strength(self.xi1_sq, self.xi2_sq, self.r, self.mu)

    @property
    def omega_plus_sq(self):
        return mode_frequencies(self.xi1_sq, self.xi2_sq, self.r, self.mu)[0]

    @property
    def c(self):
        return coulomb_coupling(self.r)


def _phase_deficit(spec, T, n=4000):
    # pi minus the accumulated phase surplus over [0, T], Simpson on at least
    # n intervals and at least 20 per sigma
    n = max(n, 2 * math.ceil(10 * T / spec.sigma))
    s = spec.with_T(T)
    t = np.linspace(0.0, T, n + 1)
    b = eval_derivatives(s, t)[0]
    theta = accumulated_phase(t, b)
    return math.pi - (theta[-1] - T)


def resolve_process_time(spec: AnsatzSpec, phase_tolerance=1e-4, T_max=T_MAX):
    """Smallest T with |theta_-(T) - T - pi| <= phase_tolerance.

    The ansatz is re-centred at T/2 for every trial T.
    """
    if spec.kind != "gaussian_bump":
        raise SynthesisError("process time by phase matching needs a gaussian_bump ansatz")
    if not phase_tolerance > 0:
        raise SynthesisError("phase_tolerance must be positive")

    def f(T):
        return _phase_deficit(spec, T) - phase_tolerance

    lo = 1e-6
    if f(T_max) > 0:
        raise SynthesisError(
            f"no process time below T_max={T_max} reaches the pi phase difference "
            f"(sigma={spec.sigma})"
        )
    return brentq(f, lo, T_max, xtol=1e-12, rtol=1e-14)


def _combine_start_excess(spec, T, mu=1.0):
    d = eval_derivatives(spec.with_T(T), 0.0)
    return float(1.0 / d[0] ** 4 - d[2] / d[0] - 1.0)


def resolve_combine_time(spec: AnsatzSpec, r_start, T_max=T_MAX):
    """Window length T for which the centred sigmoid starts at separation r_start.

    Returns ``(T, center)``.  If the end-point criteria (|r - 1| and
    |b_dot| small) are not met at the mirrored end, the window is
    extended past the mirror point and ``center`` stays where it was.
    """
    if spec.kind != "combine_sigmoid":
        raise SynthesisError("combination needs a combine_sigmoid ansatz")
    if not r_start > 1:
        raise SynthesisError("r_start must exceed 1 l0")
    target = 4 * SCALED_COULOMB_K / r_start**3

    def f(T):
        return _combine_start_excess(spec, T) - target

    lo = 1e-6
    if f(lo) < 0:
        raise SynthesisError("r_start is below the separation at the ansatz midpoint")
    if f(T_max) > 0:
        raise SynthesisError(f"no window below T_max={T_max} starts at r_start={r_start}")
    T = brentq(f, lo, T_max, xtol=1e-12, rtol=1e-14)
    center = 0.5 * T

    def end_ok(t_end):
        d = eval_derivatives(spec.with_T(t_end, center), t_end)
        r_end = separation_from_omega(1.0 / d[0] ** 4 - d[2] / d[0], 1.0)
        return abs(r_end - 1.0) <= COMBINE_R_TOL and abs(d[1]) <= COMBINE_BDOT_TOL

    if not end_ok(T):
        step = spec.sigma
        t_end = T
        while not end_ok(t_end):
            t_end += step
            if t_end > T_max:
                raise SynthesisError("combination does not settle before T_max")
        lo, hi = t_end - step, t_end
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            lo, hi = (lo, mid) if end_ok(mid) else (mid, hi)
        T = hi
    return T, center


def _snap(T, dt):
    n = max(int(math.ceil(T / dt - 1e-9)), 6)
    return n, n * dt


def _build(spec, kind, mu, dt, strict, meta):
    n, T_snap = _snap(spec.T, dt)
    spec = spec.with_T(T_snap, spec.center if kind == "combine" else None)
    times = uniform_grid(T_snap, T_snap / n)
    d = eval_derivatives(spec, times)
    omega_minus_sq = omega_minus_from_b(d[0], d[2])
    r, r_dot, r_ddot = separation_derivatives(d, mu)
    xi1_sq, xi2_sq, _ = curvatures_from_separation(r, mu, strict=strict, times=times)
    R1, R2, classical = centers_from_classical(r, r_dot, r_ddot, xi1_sq, xi2_sq, mu, times)
    traj = AuxiliaryTrajectory(spec, times, d[0], d[1], d[2], accumulated_phase(times, d[0]))
    wf = Waveform(
        times=times,
        r=r,
        xi1_sq=xi1_sq,
        xi2_sq=xi2_sq,
        R1=R1,
        R2=R2,
        omega_minus_sq=omega_minus_sq,
        kind=kind,
        mu=mu,
        spec=spec,
        r_ddot=r_ddot,
        trajectory=traj,
        classical=classical,
        meta=meta,
    )
    log.debug("synthesised %s waveform: T=%.6f, %d samples", kind, T_snap, len(times))
    return wf


def synthesize_sbs(config: CollisionConfig, mu=None, spec=None) -> Waveform:
    """Swapping beam splitter waveform for the configured ion pair.

    ``mu`` overrides the configured mass ratio (step II of the pair
    protocol swaps two qubits, mu = 1).
    """
    mu = config.mu if mu is None else mu
    spec = spec or config.ansatz
    T_root = resolve_process_time(spec, config.phase_tolerance)
    meta = {"T_resolved": T_root, "phase_tolerance": config.phase_tolerance}
    return _build(spec.with_T(T_root), "sbs", mu, config.sample_dt, config.strict_curvature, meta)


def synthesize_combine(config: CollisionConfig, r_start=None, sigma=None, mu=1.0) -> Waveform:
    """Heatingless merge of two identical ions from r_start into one well."""
    if not math.isclose(mu, 1.0):
        raise SynthesisError("ion combination requires equal masses")
    r_start = config.combine_r_start if r_start is None else r_start
    sigma = config.combine_sigma if sigma is None else sigma
    spec = AnsatzSpec("combine_sigmoid", sigma)
    T, center = resolve_combine_time(spec, r_start)
    meta = {"T_resolved": T, "r_start": r_start}
    return _build(spec.with_T(T, center), "combine", 1.0, config.sample_dt, config.strict_curvature, meta)


@dataclass(frozen=True)
class WaveformCheck:
    max_coupling: float
    max_omega_plus_dev: float
    max_ermakov_residual: float
    max_classical_residual: float
    min_separation: float
    min_curvature: float

    def as_dict(self):
        return {k: float(v) for k, v in self.__dict__.items()}


def check_waveform(wf: Waveform) -> WaveformCheck:
    """Recompute the constraint identities from the emitted samples.

    Uses analytic b'' and r'' when the waveform carries its ansatz, and
    fourth-order finite differences otherwise (e.g. after a CSV round trip).
    """
    if wf.trajectory is not None:
        b, b_ddot = wf.trajectory.b, wf.trajectory.b_ddot
    else:
        b = None
    if b is not None:
        erm = float(np.max(np.abs(ermakov_residual(b, b_ddot, wf.omega_minus_sq))))
    else:
        erm = float("nan")
    r_ddot = wf.r_ddot if wf.r_ddot is not None else second_derivative_fd(wf.r, wf.dt)
    F1, F2 = classical_residuals(wf.r, r_ddot, wf.xi1_sq, wf.xi2_sq, wf.R1, wf.R2, wf.mu)
    w_plus, w_minus = mode_frequencies(wf.xi1_sq, wf.xi2_sq, wf.r, wf.mu)
    return WaveformCheck(
        max_coupling=float(np.max(np.abs(wf.coupling))),
        max_omega_plus_dev=float(np.max(np.abs(w_plus - 1.0))),
        max_ermakov_residual=erm,
        max_classical_residual=float(max(np.max(np.abs(F1)), np.max(np.abs(F2)))),
        min_separation=float(np.min(wf.r)),
        min_curvature=float(min(np.min(wf.xi1_sq), np.min(wf.xi2_sq))),
    )


__all__ = [
    "COMBINED_B",
    "ClassicalTrajectory",
    "CurvatureWarning",
    "Waveform",
    "WaveformCheck",
    "centers_from_classical",
    "check_waveform",
    "classical_residuals",
    "coulomb_coupling",
    "coupling_strength",
    "curvatures_from_separation",
    "ermakov_residual",
    "mode_frequencies",
    "mode_frequencies_printed",
    "omega_minus_from_b",
    "resolve_combine_time",
    "resolve_process_time",
    "second_derivative_fd",
    "separation_derivatives",
    "separation_from_omega",
    "synthesize_combine",
    "synthesize_sbs",
]
