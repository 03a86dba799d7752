"""Exact deterministic engine for the solvable flow on (p, lambda).

The evolution of the mixture parameters is

    p'      = (1 - p)(lambda - p)
    lambda' = -lambda (1 - p)

with conserved quantity H = p/lambda + log(lambda).  Internally the flow is
integrated in the coordinates (w, L, q) = (p/lambda, log lambda, 1 - p):

    w' = q,     L' = -q,     q' = -q (e^L - 1 + q).

Two of the right-hand sides are exact negations, so w + L (which *is* H) is
conserved to rounding by any Runge-Kutta step, and q keeps full relative
precision where 1 - p underflows toward 0 or p itself does.  The reported
(p, lambda, rho) arrays are recovered from these coordinates.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq

from .errors import DomainError, NumericsError

#: default band half-width around the critical curve for classification
PHASE_TOL = 1e-9


@dataclass(frozen=True)
class PhasePoint:
    """Initial mixture parameters (p, lam); p = 1 is degenerate and rejected."""

    p: float
    lam: float

    def __post_init__(self):
        if not (0.0 <= self.p < 1.0):
            raise DomainError(f"p must lie in [0,1), got {self.p}")
        if self.lam < 0.0 or not np.isfinite(self.lam):
            raise DomainError(f"lambda must be finite and >= 0, got {self.lam}")


class Phase(enum.Enum):
    PINNED = "pinned"
    CRITICAL = "critical"
    UNPINNED = "unpinned"
    DEGENERATE_BOUNDARY = "degenerate-boundary"


def conserved_H(pt: PhasePoint) -> float:
    """p/lambda + log(lambda), constant along the flow."""
    if pt.lam == 0.0:
        raise DomainError("H undefined at lambda = 0")
    return pt.p / pt.lam + math.log(pt.lam)


def critical_p(lam: float) -> float:
    """The curve lam - lam*log(lam); the phase boundary for lam >= 1."""
    if lam <= 0.0:
        raise DomainError("critical_p needs lambda > 0")
    return lam - lam * math.log(lam)


def classify_phase(pt: PhasePoint, tol: float = PHASE_TOL) -> Phase:
    lam, p = pt.lam, pt.p
    if abs(lam - 1.0) <= tol and p > 1.0 - tol:
        return Phase.DEGENERATE_BOUNDARY
    if lam < 1.0:
        return Phase.PINNED
    pc = critical_p(lam)
    if abs(p - pc) <= tol:
        return Phase.CRITICAL
    if p < pc:
        return Phase.PINNED
    return Phase.UNPINNED


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Dense solution of the parameter flow on [0, t_max].

    ``p_over_lam`` is the ratio p/lambda carried as a state variable of the
    integrator; evaluating H as p_over_lam + log(lambda) avoids the
    catastrophic cancellation of p/lambda at large times in the pinned
    phase.  ``h_error`` is that evaluation minus H(0).
    """

    t: np.ndarray
    p: np.ndarray
    lam: np.ndarray
    rho: np.ndarray
    p_over_lam: np.ndarray
    h_error: np.ndarray
    H: float
    t_max: float
    method: str
    rtol: float
    atol: float
    _sol: object = None  # scipy OdeSolution in (w, L, q), or None for lam=0

    # -- evaluation ---------------------------------------------------------

    def eval(self, s):
        """(p, lam, rho) at arbitrary times s within the horizon."""
        s = np.asarray(s, dtype=float)
        if np.any(s < -1e-12) or np.any(s > self.t_max * (1 + 1e-12)):
            raise DomainError("evaluation time outside trajectory horizon")
        s = np.clip(s, 0.0, self.t_max)
        if self._sol is None:  # lam = 0 boundary branch, explicit formula
            p0 = self.p[0]
            p = 1.0 / ((1.0 / p0 - 1.0) * np.exp(s) + 1.0) if p0 > 0 else np.zeros_like(s)
            lam = np.zeros_like(p)
            return p, lam, np.zeros_like(p)
        w, L, q = self._sol(s)
        lam = np.exp(L)
        p = 1.0 - q
        rho = q * lam
        return p, lam, rho

    def rho_at(self, s):
        return self.eval(s)[2]


def _flow_rhs(_t, y):
    w, L, q = y
    v = q
    return (v, -v, -q * (math.exp(L) - 1.0 + q))


def integrate_dynamics(pt: PhasePoint, t_max: float, *, rtol: float = 1e-10,
                       atol: float = 1e-12, grid: Optional[np.ndarray] = None
                       ) -> Trajectory:
    """Adaptive RK45 integration of the parameter flow up to t_max."""
    if t_max <= 0.0:
        raise DomainError("t_max must be > 0")
    if grid is None:
        n = min(4097, max(257, int(8 * t_max) + 1))
        grid = np.linspace(0.0, t_max, n)
    grid = np.asarray(grid, dtype=float)

    if pt.lam == 0.0:
        p0 = pt.p
        p = 1.0 / ((1.0 / p0 - 1.0) * np.exp(grid) + 1.0) if p0 > 0 else np.zeros_like(grid)
        zero = np.zeros_like(grid)
        return Trajectory(grid, p, zero.copy(), zero.copy(), np.full_like(grid, np.nan),
                          zero.copy(), float("nan"), float(t_max), "explicit", rtol, atol)

    y0 = (pt.p / pt.lam, math.log(pt.lam), 1.0 - pt.p)
    sol = solve_ivp(_flow_rhs, (0.0, float(t_max)), y0, method="RK45",
                    rtol=rtol, atol=atol, dense_output=True)
    if not sol.success:
        raise NumericsError(f"flow integration failed: {sol.message}")
    w, L, q = sol.sol(grid)
    H0 = y0[0] + y0[1]
    return Trajectory(grid, 1.0 - q, np.exp(L), q * np.exp(L), w,
                      (w + L) - H0, H0, float(t_max), "RK45", rtol, atol, sol.sol)


def equilibrium_lambda(H: float) -> float:
    """Root x > 1 of H*x - x*log(x) = 1 (large-time plateau of lambda)."""
    if H <= 1.0:
        raise DomainError("no root > 1 exists for H <= 1 (critical/supercritical H)")

    def f(x):
        return H * x - x * math.log(x) - 1.0

    hi = 2.0
    while f(hi) > 0.0:
        hi *= 2.0
        if hi > 1e12:  # pragma: no cover - H <= ~28 in practice
            raise NumericsError("failed to bracket equilibrium root")
    root = brentq(f, 1.0, hi, xtol=1e-15, rtol=8.9e-16)
    if abs(f(root)) >= 1e-12:
        raise NumericsError("equilibrium residual above tolerance", achieved=abs(f(root)))
    return root


# ---------------------------------------------------------------------------
# free energy


@dataclass(frozen=True)
class FreeEnergyResult:
    value: float
    method: str
    error: float

    def __post_init__(self):
        if self.value < 0.0:
            raise DomainError("free energy must be >= 0")


def free_energy_quadrature(pt: PhasePoint) -> FreeEnergyResult:
    """Growth constant of the mean via the conserved-quantity integral.

    For pinned points F = exp(-(log lam + I)) with
    I = integral_0^lam (H - log y) / (1 - H y + y log y) dy; the integrand
    has an integrable log singularity at 0 and, close to criticality, a
    sharp near-pole at y = 1 which we resolve by splitting the domain there.
    Critical and unpinned points give exactly 0.
    """
    if pt.lam == 0.0:
        return FreeEnergyResult(0.0, "quadrature", 0.0)
    phase = classify_phase(pt)
    if phase is not Phase.PINNED:
        return FreeEnergyResult(0.0, "quadrature", 0.0)
    H = conserved_H(pt)
    lam = pt.lam

    def integrand(y):
        return (H - math.log(y)) / (1.0 - H * y + y * math.log(y))

    # split at the near-pole location y ~ 1 and hug it from both sides
    delta = max(1.0 - H, 1e-300)
    width = math.sqrt(2.0 * delta)
    cuts = sorted({0.5, max(1e-3, 1.0 - 8 * width), 1.0,
                   min(lam, 1.0 + 8 * width)})
    cuts = [c for c in cuts if 0.0 < c < lam]
    pieces = [0.0] + cuts + [lam]

    total, err = 0.0, 0.0
    for a, b in zip(pieces[:-1], pieces[1:]):
        val, e = quad(integrand, a, b, limit=400, epsabs=1e-13, epsrel=1e-12)
        total += val
        err += e
    if not np.isfinite(total):
        raise NumericsError("free-energy quadrature diverged", achieved=err)
    value = math.exp(-(math.log(lam) + total))
    return FreeEnergyResult(value, "quadrature", err * max(value, 1.0))


def free_energy_ode_limit(pt: PhasePoint, horizon: float = 40.0) -> FreeEnergyResult:
    """F as the limit of e^{-T}(1-p(T))/lambda(T), with a two-horizon error bar."""
    if pt.lam == 0.0:
        return FreeEnergyResult(0.0, "ode-limit", 0.0)
    traj = integrate_dynamics(pt, horizon)

    def estimate(T):
        w, L, q = traj._sol(T)
        return q * math.exp(-T - L)

    f_half = estimate(0.75 * horizon)
    f_full = estimate(horizon)
    _, lam_T, _ = traj.eval(horizon)
    if classify_phase(pt) is Phase.PINNED and lam_T >= 1e-6 * pt.lam:
        raise NumericsError("horizon too small: lambda has not collapsed",
                            achieved=float(lam_T / pt.lam))
    err = abs(f_full - f_half)
    return FreeEnergyResult(float(f_full), "ode-limit", float(err))


def asymptote_prediction(lam: float, p: float) -> float:
    """Near-critical shape of F without the unknown multiplicative constant.

    lam in (1, e): exp(-pi*sqrt(2 lam)/sqrt(pc - p));
    lam == 1:      (1-p)^{2/3} exp(-(pi/sqrt 2)/sqrt(1-p));
    lam in (0, 1): (1-p)^{1/(1-lam)}.
    """
    if not (0.0 < lam < math.e):
        raise DomainError("asymptote defined for lambda in (0, e)")
    if lam > 1.0:
        delta = critical_p(lam) - p
        if delta <= 0.0:
            raise DomainError("p must be below critical_p(lambda)")
        return math.exp(-math.pi * math.sqrt(2.0 * lam) / math.sqrt(delta))
    delta = 1.0 - p
    if delta <= 0.0:
        raise DomainError("p must be below 1")
    if lam == 1.0:
        return delta ** (2.0 / 3.0) * math.exp(-(math.pi / math.sqrt(2.0)) / math.sqrt(delta))
    return delta ** (1.0 / (1.0 - lam))


# ---------------------------------------------------------------------------
# structural verifications


def verify_fixed_point(pt: PhasePoint, t: float, n_quad: int = 64,
                       x_checkpoints=None) -> float:
    """sup-norm residual of the renewal identity satisfied by the flow.

    The marginal at time t must equal
    integral_0^t e^{-s} shift_s(law_{t-s} * law_{t-s}) ds + e^{-t} shift_t(law_0),
    compared here at CDF level on a grid of x checkpoints with Gauss-Legendre
    quadrature in s.
    """
    from . import measures

    if t < 0.0:
        raise DomainError("t must be >= 0")
    if t == 0.0:
        return 0.0
    traj = integrate_dynamics(pt, t)
    if x_checkpoints is None:
        x_checkpoints = np.linspace(0.0, 5.0 / max(pt.lam, 0.2), 20)
    x = np.asarray(x_checkpoints, dtype=float)

    nodes, weights = np.polynomial.legendre.leggauss(n_quad)
    s = 0.5 * t * (nodes + 1.0)
    wts = 0.5 * t * weights

    p_s, lam_s, _ = traj.eval(t - s)
    rhs = np.zeros_like(x)
    for sk, wk, pk, lk in zip(s, wts, p_s, lam_s):
        g = measures.convolve_self(measures.ExpMixture(pk, lk))
        rhs += wk * math.exp(-sk) * measures.shift_cdf(g, sk, x)
    m0 = measures.ExpMixture(pt.p, pt.lam)
    rhs += math.exp(-t) * np.asarray(measures.cdf(m0, x + t))

    p_t, lam_t, _ = traj.eval(t)
    lhs = np.asarray(measures.cdf(measures.ExpMixture(float(p_t), float(lam_t)), x))
    return float(np.max(np.abs(lhs - rhs)))


def verify_pde_weak(pt: PhasePoint, theta: float, t: float) -> float:
    """Residual of the weak evolution identity for f(x) = e^{-theta x}.

    All space integrals are closed-form in (p, lam); the time integral is
    adaptive quadrature over the dense trajectory.
    """
    if theta <= 0.0:
        raise DomainError("theta must be > 0")
    traj = integrate_dynamics(pt, t, rtol=1e-12, atol=1e-13)

    def mf(p, lam):
        # integral of e^{-theta x} against the mixture
        if np.ndim(lam) == 0 and lam == 0.0:
            return p
        return p + (1.0 - p) * lam / (lam + theta)

    def g(s):
        p, lam, _ = traj.eval(s)
        m = mf(p, lam)
        drift = theta * (1.0 - p) * lam / (lam + theta) if lam > 0 else 0.0
        return drift - m + m * m

    rhs, _ = quad(g, 0.0, t, limit=400, epsabs=1e-13, epsrel=1e-12)
    p0, lam0 = pt.p, pt.lam
    pt_, lamt_, _ = traj.eval(t)
    lhs = mf(float(pt_), float(lamt_)) - mf(p0, lam0)
    return float(abs(lhs - rhs))
