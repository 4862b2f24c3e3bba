"""Special functions used by the reduced models.

Complete elliptic integral K and Jacobi sn/cn/dn via the arithmetic-geometric
mean, the Airy-type solution of the linearly ramped trap, and Mathieu
fundamental solutions with their characteristic exponents.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import airy

from .model import LatticeParams


class SpecialFunctionDomainError(ValueError):
    pass


_AGM_TOL = 2.0**-52


def _agm_table(k: float):
    """Descending AGM sequence a_n, c_n starting from (1, k', k)."""
    kp = math.sqrt((1.0 - k) * (1.0 + k))
    a, b, c = [1.0], kp, [k]
    while abs(c[-1]) > _AGM_TOL * a[-1] and len(a) < 64:
        an, bn = a[-1], b
        a.append(0.5 * (an + bn))
        b = math.sqrt(an * bn)
        c.append(0.5 * (an - bn))
    return a, c


def elliptic_K(k: float) -> float:
    """Complete elliptic integral of the first kind for modulus ``k``."""
    if not (0.0 <= k < 1.0):
        raise SpecialFunctionDomainError(f"K(k) requires 0 <= k < 1, got {k!r}")
    a, _ = _agm_table(k)
    return math.pi / (2.0 * a[-1])


def jacobi_sncndn(u, k: float):
    """Jacobi sn, cn, dn by descending Landen transformation.

    ``u`` may be an array; ``k`` is a scalar modulus in [0, 1].
    """
    if not (0.0 <= k <= 1.0):
        raise SpecialFunctionDomainError(f"Jacobi functions need 0 <= k <= 1, got {k!r}")
    u = np.asarray(u, dtype=float)
    if k == 0.0:
        return np.sin(u), np.cos(u), np.ones_like(u)
    if k == 1.0:
        sech = 1.0 / np.cosh(u)
        return np.tanh(u), sech, sech
    a, c = _agm_table(k)
    n = len(a) - 1
    phi = (2.0**n) * a[n] * u
    prev = phi
    for j in range(n, 0, -1):
        prev = phi
        phi = 0.5 * (phi + np.arcsin(c[j] / a[j] * np.sin(phi)))
    sn, cn = np.sin(phi), np.cos(phi)
    dn = cn / np.cos(prev - phi) if n > 0 else np.ones_like(u)
    return sn, cn, dn


def jacobi_sn(u, k: float):
    return jacobi_sncndn(u, k)[0]


def airy_regime_solution(params: LatticeParams, x0: float, p0: float, t, method: str = "closed"):
    """Solve x'' + lam*(pi/2 - omega*t)*x = 0 with x(0)=x0, x'(0)=p0.

    The coefficient is the linear expansion of cos(omega*t) about the zero
    crossing omega*t = pi/2. With alpha = (lam*omega)**(1/3) and
    z = alpha*(t - pi/(2*omega)) the solution is A*Ai(z) + B*Bi(z).
    ``method="ode"`` integrates the linear equation instead.
    """
    lam, w = params.lam, params.omega
    if not (lam > 0 and w > 0):
        raise SpecialFunctionDomainError("the Airy regime needs lam > 0 and omega > 0")
    t = np.asarray(t, dtype=float)
    if method == "ode":
        return _linear_ode(lambda s: lam * (0.5 * math.pi - w * s), x0, p0, t)
    if method != "closed":
        raise ValueError(f"unknown method {method!r}")
    alpha = (lam * w) ** (1.0 / 3.0)
    t_star = 0.5 * math.pi / w
    ai0, aip0, bi0, bip0 = airy(-alpha * t_star)
    # Wronskian Ai*Bi' - Ai'*Bi = 1/pi
    A = math.pi * (x0 * bip0 - p0 / alpha * bi0)
    B = math.pi * (p0 / alpha * ai0 - x0 * aip0)
    ai, aip, bi, bip = airy(alpha * (t - t_star))
    return A * ai + B * bi, alpha * (A * aip + B * bip)


def _linear_ode(coef, x0, p0, t, rtol=1e-12, atol=1e-14):
    """Integrate x'' + coef(t) x = 0 from t=0 and evaluate at ``t`` (any order, sign)."""
    t = np.asarray(t, dtype=float)
    flat = t.ravel()
    x = np.empty_like(flat)
    p = np.empty_like(flat)
    rhs = lambda s, y: (y[1], -coef(s) * y[0])
    for sign in (1.0, -1.0):
        sel = flat > 0 if sign > 0 else flat < 0
        if not sel.any():
            continue
        pts = flat[sel]
        order = np.argsort(sign * pts)
        sol = solve_ivp(rhs, (0.0, pts[order][-1]), (x0, p0), method="DOP853",
                        t_eval=pts[order], rtol=rtol, atol=atol)
        xs, ps = np.empty(pts.size), np.empty(pts.size)
        xs[order], ps[order] = sol.y
        x[sel], p[sel] = xs, ps
    zero = flat == 0
    x[zero], p[zero] = x0, p0
    return x.reshape(t.shape), p.reshape(t.shape)


# ---------------------------------------------------------------------------
# Mathieu equation  y'' + (a - 2 q cos 2 tau) y = 0


@dataclass(frozen=True)
class MathieuFundamental:
    """Fundamental pair with c(0)=1, c'(0)=0, s(0)=0, s'(0)=1 evaluated at tau."""

    c: float
    c_dot: float
    s: float
    s_dot: float

    @property
    def wronskian(self) -> float:
        return self.c * self.s_dot - self.c_dot * self.s

    def matrix(self) -> np.ndarray:
        return np.array([[self.c, self.s], [self.c_dot, self.s_dot]])


@dataclass(frozen=True)
class CharExponent:
    mu: complex
    trace: float

    @property
    def stable(self) -> bool:
        return abs(self.trace) <= 2.0


_MATHIEU_RTOL = 1e-12
_MATHIEU_ATOL = 1e-14


def _mathieu_rhs(a, q):
    def rhs(tau, y):
        k = a - 2.0 * q * math.cos(2.0 * tau)
        return (y[1], -k * y[0], y[3], -k * y[2])
    return rhs


def _mathieu_flow(a: float, q: float, taus: np.ndarray) -> np.ndarray:
    """Fundamental matrices at sorted taus in [0, pi]; shape (n, 2, 2)."""
    sol = solve_ivp(_mathieu_rhs(a, q), (0.0, math.pi), (1.0, 0.0, 0.0, 1.0), method="DOP853",
                    t_eval=taus, rtol=_MATHIEU_RTOL, atol=_MATHIEU_ATOL)
    c, cd, s, sd = sol.y
    return np.stack([np.stack([c, s], -1), np.stack([cd, sd], -1)], -2)


def mathieu_monodromy(a: float, q: float) -> np.ndarray:
    return _mathieu_flow(a, q, np.array([math.pi]))[0]


def _mathieu_matrix(a: float, q: float, tau: float) -> np.ndarray:
    n = math.floor(tau / math.pi)
    r = tau - n * math.pi
    if r >= math.pi:
        # tiny negative tau: the remainder rounds up to a full period
        n, r = n + 1, 0.0
    if n == 0:
        return _mathieu_flow(a, q, np.array([r]))[0]
    if r == 0.0:
        phi_r, mono = np.eye(2), mathieu_monodromy(a, q)
    else:
        phi_r, mono = _mathieu_flow(a, q, np.array([r, math.pi]))
    if n < 0:
        # inverse of a unimodular 2x2 matrix
        mono = np.array([[mono[1, 1], -mono[0, 1]], [-mono[1, 0], mono[0, 0]]])
    return phi_r @ np.linalg.matrix_power(mono, abs(n))


def mathieu_fundamental(a: float, q: float, tau: float) -> MathieuFundamental:
    """Even/odd fundamental solutions at ``tau``.

    One period [0, pi] is integrated directly; larger |tau| uses
    Phi(n*pi + r) = Phi(r) @ M**n with M the monodromy matrix.
    """
    if not (math.isfinite(a) and math.isfinite(q) and math.isfinite(tau)):
        raise SpecialFunctionDomainError("a, q and tau must be finite")
    (c, s), (cd, sd) = _mathieu_matrix(a, q, tau)
    return MathieuFundamental(float(c), float(cd), float(s), float(sd))


def char_exponent_from_trace(trace: float) -> CharExponent:
    """Characteristic exponent for the period-pi Mathieu convention.

    mu = arccos(trace/2)/pi on the principal branch, with the imaginary part
    taken non-negative. Stable traces give a real mu in [0, 1]; unstable ones
    give imag(mu) = arccosh(|trace|/2)/pi. The band index is not resolved.
    """
    mu = cmath.acos(0.5 * trace) / math.pi
    if abs(trace) <= 2.0:
        mu = complex(mu.real, 0.0)
    return CharExponent(complex(mu.real, abs(mu.imag)), float(trace))


def mathieu_char_exponent(a: float, q: float) -> CharExponent:
    if not (math.isfinite(a) and math.isfinite(q)):
        raise SpecialFunctionDomainError("a and q must be finite")
    mono = mathieu_monodromy(a, q)
    return char_exponent_from_trace(float(mono[0, 0] + mono[1, 1]))


def mathieu_parameters(lam: float, omega: float, eps0: float = 0.0) -> tuple[float, float]:
    """Map x'' + (eps0 + lam*cos(omega*t))x = 0 onto Mathieu (a, q) with tau = omega*t/2."""
    if not omega > 0:
        raise SpecialFunctionDomainError("omega must be positive for the Mathieu mapping")
    return 4.0 * eps0 / omega**2, -2.0 * lam / omega**2


def linearized_solution(params: LatticeParams, x0: float, p0: float, t):
    """Trapped-atom solution of x'' + (eps0 + lam*cos(omega*t))x = 0.

    x(t) = x0*C(tau) + p0*(2/omega)*S(tau) with tau = omega*t/2; the factor
    2/omega converts the unit slope of S in tau into unit slope in t.
    Returns (x, p) arrays matching the shape of ``t``.
    """
    a, q = mathieu_parameters(params.lam, params.omega, params.eps0)
    t = np.asarray(t, dtype=float)
    taus = 0.5 * params.omega * t.ravel()
    g = 2.0 / params.omega
    x = np.empty_like(taus)
    p = np.empty_like(taus)
    _, mono = _mathieu_flow(a, q, np.array([0.0, math.pi]))
    periods = np.floor(taus / math.pi).astype(np.int64)
    rem = taus - periods * math.pi
    uniq, back = np.unique(rem, return_inverse=True)
    phi_rem = _mathieu_flow(a, q, uniq)[back.ravel()] if rem.size else np.empty((0, 2, 2))
    inv = np.array([[mono[1, 1], -mono[0, 1]], [-mono[1, 0], mono[0, 0]]])
    powers: dict[int, np.ndarray] = {}
    for i, (n, phi) in enumerate(zip(periods, phi_rem)):
        n = int(n)
        if n not in powers:
            powers[n] = np.linalg.matrix_power(mono if n >= 0 else inv, abs(n))
        (c, s), (cd, sd) = phi @ powers[n]
        x[i] = x0 * c + p0 * g * s
        # d/dt = (omega/2) d/dtau
        p[i] = 0.5 * params.omega * (x0 * cd + p0 * g * sd)
    return x.reshape(t.shape), p.reshape(t.shape)
