"""Analytic families for the Ermakov auxiliary function b(t).

All times are in units of 1/omega0.  Every family provides exact time
derivatives up to fourth order; the fourth is needed for the analytic
separation acceleration used when placing the well centres.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numpy.polynomial import hermite
from scipy.integrate import cumulative_simpson
from scipy.special import erf, expit

KINDS = ("gaussian_bump", "combine_sigmoid", "constant")

#: b after the ions share one well, where omega_minus^2 = 3 omega0^2
COMBINED_B = 3.0 ** -0.25


@dataclass(frozen=True)
class AnsatzSpec:
    """One member of an ansatz family.

    ``T`` is the process duration; the profile is centred at ``T/2``
    unless ``center`` is given.
    It may be left as ``None`` until the process time has been resolved.
    ``printed`` selects the literal combination formula whose early-time
    limit is 2*3^(-1/4) - 1 instead of 1; it exists only for comparison.
    """

    kind: str
    sigma: float = 1.0
    T: float | None = None
    printed: bool = False
    center: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown ansatz kind {self.kind!r}; expected one of {KINDS}")
        if not self.sigma > 0:
            raise ValueError(f"ansatz sigma must be positive, got {self.sigma}")
        if self.T is not None and not self.T >= 0:
            raise ValueError(f"process time must be non-negative, got {self.T}")

    def with_T(self, T, center=None):
        return replace(self, T=float(T), center=None if center is None else float(center))

    @property
    def t_center(self):
        if self.center is not None:
            return self.center
        return 0.5 * _require_T(self)

    @property
    def b_start(self):
        if self.kind == "combine_sigmoid" and self.printed:
            return 2 * COMBINED_B - 1
        return 1.0

    @property
    def b_end(self):
        return COMBINED_B if self.kind == "combine_sigmoid" else 1.0


def _require_T(spec):
    if spec.T is None:
        raise ValueError("ansatz process time T is unresolved")
    return spec.T


def _chain_inverse_sqrt(s):
    """Derivatives of s^(-1/2) given derivatives s = [s, s', s'', s''', s'''']."""
    s0, s1, s2, s3, s4 = s
    h1 = -0.5 * s0**-1.5
    h2 = 0.75 * s0**-2.5
    h3 = -1.875 * s0**-3.5
    h4 = 6.5625 * s0**-4.5
    return np.array([
        s0**-0.5,
        h1 * s1,
        h2 * s1**2 + h1 * s2,
        h3 * s1**3 + 3 * h2 * s1 * s2 + h1 * s3,
        h4 * s1**4 + 6 * h3 * s1**2 * s2 + h2 * (3 * s2**2 + 4 * s1 * s3) + h1 * s4,
    ])


def _gaussian_s(spec, t):
    """1/b^2 = 1 + sqrt(pi)/sigma * exp(-(t - T/2)^2 / sigma^2) and its derivatives."""
    sigma = spec.sigma
    x = (t - spec.t_center) / sigma
    amp = math.sqrt(math.pi) / sigma * np.exp(-x * x)
    out = []
    for k in range(5):
        coef = np.zeros(k + 1)
        coef[k] = 1.0
        # d^k/dx^k exp(-x^2) = (-1)^k H_k(x) exp(-x^2)
        out.append(amp * (-1) ** k * hermite.hermval(x, coef) / sigma**k)
    out[0] = out[0] + 1.0
    return np.array(out)


def _logistic_derivatives(y):
    """d^k/dz^k of y = expit(z), expressed through y, k = 0..4."""
    y1 = y * (1 - y)
    return np.array([
        y,
        y1,
        y1 * (1 - 2 * y),
        y1 * (1 - 6 * y + 6 * y**2),
        y1 * (1 - 2 * y) * (1 - 12 * y + 12 * y**2),
    ])


def _sigmoid(spec, t):
    # b = K / (exp(x) + c) + 3^(-1/4),  x = (t - T/2)/sigma,  c = 3^(1/4)
    # 1/(exp(x) + c) = expit(z)/c with z = ln(c) - x
    c = 3.0**0.25
    K = (1 - c) if spec.printed else (c - 1)
    x = (t - spec.t_center) / spec.sigma
    z = math.log(c) - x
    y = _logistic_derivatives(expit(z))
    scale = np.array([(-1.0 / spec.sigma) ** k for k in range(5)])
    scale = scale.reshape((5,) + (1,) * np.ndim(t))
    out = K / c * scale * y
    out[0] = out[0] + COMBINED_B
    return out


def eval_derivatives(spec: AnsatzSpec, t):
    """Return an array ``[b, b', b'', b''', b'''']`` evaluated at ``t``."""
    _require_T(spec)
    t = np.asarray(t, dtype=float)
    if spec.kind == "gaussian_bump":
        return _chain_inverse_sqrt(_gaussian_s(spec, t))
    if spec.kind == "combine_sigmoid":
        return _sigmoid(spec, t)
    zeros = np.zeros_like(t)
    return np.array([zeros + 1.0, zeros, zeros, zeros, zeros])


def eval_b(spec: AnsatzSpec, t):
    """Return ``(b, b_dot, b_ddot)`` at scaled time ``t``."""
    d = eval_derivatives(spec, t)
    return d[0], d[1], d[2]


def phase_surplus_exact(spec: AnsatzSpec, t):
    """Closed form of int_0^t (1/b^2 - 1) dt' for the Gaussian bump."""
    if spec.kind != "gaussian_bump":
        raise ValueError("closed-form phase is only available for gaussian_bump")
    tc = spec.t_center
    return 0.5 * math.pi * (erf((np.asarray(t) - tc) / spec.sigma) + erf(tc / spec.sigma))


@dataclass(frozen=True)
class AuxiliaryTrajectory:
    spec: AnsatzSpec
    times: np.ndarray
    b: np.ndarray
    b_dot: np.ndarray
    b_ddot: np.ndarray
    theta_minus: np.ndarray

    @property
    def T(self):
        return float(self.times[-1])


def uniform_grid(T, dt):
    """Uniform grid on [0, T]; T must be an integer multiple of dt up to rounding."""
    n = max(int(round(T / dt)), 1)
    return np.arange(n + 1) * (T / n)


def accumulated_phase(times, b):
    """theta(t) = int_0^t dt'/b^2 by composite Simpson on a uniform grid.

    The surplus 1/b^2 - 1 is integrated separately so that the large
    linear part does not swamp the small bump contribution.
    """
    if len(times) < 3:
        return np.concatenate([[0.0], np.cumsum(np.diff(times) / b[1:] ** 2)])
    surplus = 1.0 / b**2 - 1.0
    return (times - times[0]) + cumulative_simpson(surplus, x=times, initial=0.0)


def sample_trajectory(spec: AnsatzSpec, dt) -> AuxiliaryTrajectory:
    """Sample b and its derivatives on a uniform grid over [0, T]."""
    T = _require_T(spec)
    if not dt > 0:
        raise ValueError("dt must be positive")
    times = uniform_grid(T, dt)
    b, b_dot, b_ddot = eval_b(spec, times)
    if np.any(b <= 0):
        raise ValueError("auxiliary function must stay positive")
    return AuxiliaryTrajectory(spec, times, b, b_dot, b_ddot, accumulated_phase(times, b))


@dataclass(frozen=True)
class BoundaryReport:
    b_dev_start: float
    b_dev_end: float
    b_dot_start: float
    b_dot_end: float
    b_ddot_start: float
    b_ddot_end: float
    tolerance: float

    @property
    def max_deviation(self):
        return max(self.b_dev_start, self.b_dev_end, self.b_dot_start, self.b_dot_end)

    @property
    def violated(self):
        return self.max_deviation > self.tolerance


def validate_boundaries(traj: AuxiliaryTrajectory, kind=None, tolerance=1e-3) -> BoundaryReport:
    """Compare trajectory end points with the family's boundary values."""
    kind = kind or traj.spec.kind
    start = 1.0
    end = COMBINED_B if kind == "combine_sigmoid" else 1.0
    return BoundaryReport(
        b_dev_start=abs(traj.b[0] - start),
        b_dev_end=abs(traj.b[-1] - end),
        b_dot_start=abs(traj.b_dot[0]),
        b_dot_end=abs(traj.b_dot[-1]),
        b_ddot_start=abs(traj.b_ddot[0]),
        b_ddot_end=abs(traj.b_ddot[-1]),
        tolerance=tolerance,
    )
