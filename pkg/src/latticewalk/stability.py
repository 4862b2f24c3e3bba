"""Floquet stability of the linearized trap x'' + (eps0 + lam*cos(omega*t))x = 0.

The monodromy matrix over one modulation period 2*pi/omega is computed with
an embedded Dormand-Prince 5(4) integrator compiled by numba. Stability is
decided by the trace alone: |trace| <= 2 (with a 1e-9 marginal band counted
as stable).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

MONODROMY_RTOL = 1e-10
MONODROMY_ATOL = 1e-12
MARGINAL_BAND = 1e-9
_RESCALE = 1e100


class StabilityDomainError(ValueError):
    pass


class BracketError(ValueError):
    """No sign change of |trace| - 2 across the requested lambda bracket."""


# Dormand-Prince 5(4) tableau
_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40,
)


@njit(cache=True, nogil=True)
def _hill_rhs(t, y, eps0, lam, omega, out):
    k = eps0 + lam * math.cos(omega * t)
    out[0] = y[1]
    out[1] = -k * y[0]
    out[2] = y[3]
    out[3] = -k * y[2]


@njit(cache=True, nogil=True)
def _hill_monodromy(eps0, lam, omega, rtol, atol):
    """Returns (m00, m01, m10, m11, log_scale, steps).

    The true monodromy is exp(log_scale) * [[m00, m01], [m10, m11]]; the
    state is rescaled whenever it grows past 1e100 so unstable cells with
    enormous growth still report a finite log magnitude.
    """
    period = 2.0 * math.pi / omega
    y = np.array([1.0, 0.0, 0.0, 1.0])
    k1 = np.empty(4)
    k2 = np.empty(4)
    k3 = np.empty(4)
    k4 = np.empty(4)
    k5 = np.empty(4)
    k6 = np.empty(4)
    k7 = np.empty(4)
    tmp = np.empty(4)
    ynew = np.empty(4)
    log_scale = 0.0
    t = 0.0
    freq = math.sqrt(abs(eps0) + abs(lam)) + omega
    h = min(0.01 / freq, period)
    _hill_rhs(t, y, eps0, lam, omega, k1)
    steps = 0
    while t < period:
        if t + h > period:
            h = period - t
        for i in range(4):
            tmp[i] = y[i] + h * _A21 * k1[i]
        _hill_rhs(t + _C2 * h, tmp, eps0, lam, omega, k2)
        for i in range(4):
            tmp[i] = y[i] + h * (_A31 * k1[i] + _A32 * k2[i])
        _hill_rhs(t + _C3 * h, tmp, eps0, lam, omega, k3)
        for i in range(4):
            tmp[i] = y[i] + h * (_A41 * k1[i] + _A42 * k2[i] + _A43 * k3[i])
        _hill_rhs(t + _C4 * h, tmp, eps0, lam, omega, k4)
        for i in range(4):
            tmp[i] = y[i] + h * (_A51 * k1[i] + _A52 * k2[i] + _A53 * k3[i] + _A54 * k4[i])
        _hill_rhs(t + _C5 * h, tmp, eps0, lam, omega, k5)
        for i in range(4):
            tmp[i] = y[i] + h * (_A61 * k1[i] + _A62 * k2[i] + _A63 * k3[i] + _A64 * k4[i] + _A65 * k5[i])
        _hill_rhs(t + h, tmp, eps0, lam, omega, k6)
        for i in range(4):
            ynew[i] = y[i] + h * (_B1 * k1[i] + _B3 * k3[i] + _B4 * k4[i] + _B5 * k5[i] + _B6 * k6[i])
        _hill_rhs(t + h, ynew, eps0, lam, omega, k7)
        err = 0.0
        for i in range(4):
            e = h * (_E1 * k1[i] + _E3 * k3[i] + _E4 * k4[i] + _E5 * k5[i] + _E6 * k6[i] + _E7 * k7[i])
            sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
            err += (e / sc) ** 2
        err = math.sqrt(err / 4.0)
        if err <= 1.0:
            t += h
            steps += 1
            big = 0.0
            for i in range(4):
                y[i] = ynew[i]
                k1[i] = k7[i]
                big = max(big, abs(y[i]))
            if big > _RESCALE:
                for i in range(4):
                    y[i] /= big
                    k1[i] /= big
                log_scale += math.log(big)
            fac = 0.9 * err ** -0.2 if err > 0 else 5.0
            h *= min(5.0, max(0.2, fac))
        else:
            h *= max(0.2, 0.9 * err ** -0.2)
    return y[0], y[2], y[1], y[3], log_scale, steps


@dataclass(frozen=True)
class Monodromy:
    """One-period transfer matrix, possibly stored with a log scale factor."""

    matrix: np.ndarray
    log_scale: float = 0.0

    @property
    def trace(self) -> float:
        tr = float(self.matrix[0, 0] + self.matrix[1, 1])
        if self.log_scale == 0.0:
            return tr
        with np.errstate(over="ignore"):
            return float(tr * np.exp(self.log_scale))

    @property
    def log_abs_trace(self) -> float:
        tr = abs(float(self.matrix[0, 0] + self.matrix[1, 1]))
        return (math.log(tr) if tr > 0 else -math.inf) + self.log_scale

    @property
    def determinant(self) -> float:
        m = self.matrix
        d = float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])
        return d * math.exp(2 * self.log_scale) if self.log_scale else d

    @property
    def stable(self) -> bool:
        return self.log_scale == 0.0 and abs(self.trace) - 2.0 <= MARGINAL_BAND

    @property
    def mu_imag(self) -> float:
        """Imaginary part of the Mathieu characteristic exponent (period pi in tau)."""
        if self.stable:
            return 0.0
        if self.log_scale == 0.0 and abs(self.trace) < 1e150:
            return math.acosh(max(1.0, 0.5 * abs(self.trace))) / math.pi
        # acosh(y) = log(2y) for huge y
        return self.log_abs_trace / math.pi


def monodromy_full(eps0: float, lam: float, omega: float,
                   rtol: float = MONODROMY_RTOL, atol: float = MONODROMY_ATOL) -> Monodromy:
    if not omega > 0:
        raise StabilityDomainError(f"omega must be positive (no period otherwise), got {omega!r}")
    for name, v in (("eps0", eps0), ("lambda", lam), ("omega", omega)):
        if not math.isfinite(v):
            raise StabilityDomainError(f"{name} must be finite")
    m00, m01, m10, m11, log_scale, _ = _hill_monodromy(float(eps0), float(lam), float(omega), rtol, atol)
    return Monodromy(np.array([[m00, m01], [m10, m11]]), log_scale)


def monodromy(eps0: float, lam: float, omega: float) -> np.ndarray:
    """2x2 monodromy matrix of x'' + (eps0 + lam*cos(omega*t))x = 0 over t in [0, 2*pi/omega].

    Columns are the solutions started from (1, 0) and (0, 1). Entries
    overflow to inf for extremely unstable cells; use :func:`monodromy_full`
    to keep the log scale.
    """
    mono = monodromy_full(eps0, lam, omega)
    if mono.log_scale == 0.0:
        return mono.matrix
    with np.errstate(over="ignore"):
        return mono.matrix * np.exp(mono.log_scale)


@dataclass(frozen=True)
class StabilityCell:
    stable: bool
    trace: float
    mu_imag: float


@dataclass(frozen=True)
class StabilityChart:
    lambda_axis: np.ndarray
    omega_axis: np.ndarray
    eps0: float
    trace: np.ndarray      # shape (n_lambda, n_omega)
    stable: np.ndarray
    mu_imag: np.ndarray

    def cell(self, i: int, j: int) -> StabilityCell:
        return StabilityCell(bool(self.stable[i, j]), float(self.trace[i, j]), float(self.mu_imag[i, j]))

    @property
    def shape(self) -> tuple[int, int]:
        return self.trace.shape

    def stable_fraction(self, mask=None) -> float:
        s = self.stable if mask is None else self.stable[mask]
        return float(np.mean(s)) if s.size else float("nan")


def _cell(args):
    eps0, lam, omega = args
    mono = monodromy_full(eps0, lam, omega)
    return mono.trace, mono.stable, mono.mu_imag


def _axis(rng, n, name):
    lo, hi = float(rng[0]), float(rng[1])
    if not (math.isfinite(lo) and math.isfinite(hi) and hi > lo):
        raise StabilityDomainError(f"{name} range must be finite and increasing, got {rng!r}")
    return np.linspace(lo, hi, n)


def stability_chart(lambda_range, omega_range, eps0: float = 0.0, resolution=64, jobs: int = 1) -> StabilityChart:
    """Monodromy-trace stability over a (lambda, omega) grid.

    ``resolution`` is an int or a (n_lambda, n_omega) pair, each >= 16.
    Cells are independent; with ``jobs > 1`` they are evaluated on a thread
    pool and reassembled in (lambda, omega) index order.
    """
    nl, nw = (resolution, resolution) if np.isscalar(resolution) else resolution
    nl, nw = int(nl), int(nw)
    if nl < 16 or nw < 16:
        raise StabilityDomainError("resolution must be at least 16 per axis")
    lam_axis = _axis(lambda_range, nl, "lambda")
    om_axis = _axis(omega_range, nw, "omega")
    if om_axis[0] <= 0:
        raise StabilityDomainError("omega range must be strictly positive")
    tasks = [(float(eps0), float(l), float(w)) for l in lam_axis for w in om_axis]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_cell, tasks))
    else:
        results = [_cell(t) for t in tasks]
    trace = np.array([r[0] for r in results]).reshape(nl, nw)
    stable = np.array([r[1] for r in results], dtype=bool).reshape(nl, nw)
    mu_imag = np.array([r[2] for r in results]).reshape(nl, nw)
    return StabilityChart(lam_axis, om_axis, float(eps0), trace, stable, mu_imag)


def _excess(eps0, lam, omega):
    mono = monodromy_full(eps0, lam, omega)
    if mono.log_scale:
        return math.inf
    return abs(mono.trace) - 2.0


def critical_boundary(eps0: float, omega: float, lambda_bracket, tol: float = 1e-6) -> float:
    """Bisect |trace(lambda)| - 2 across ``lambda_bracket`` at fixed omega.

    Marginal values within the 1e-9 band count as stable, matching the chart.
    Returns the boundary lambda* to within ``tol``.
    """
    lo, hi = float(lambda_bracket[0]), float(lambda_bracket[1])
    g_lo = _excess(eps0, lo, omega) > MARGINAL_BAND
    g_hi = _excess(eps0, hi, omega) > MARGINAL_BAND
    if g_lo == g_hi:
        state = "unstable" if g_lo else "stable"
        raise BracketError(f"|trace| - 2 has no sign change on [{lo}, {hi}] at omega={omega}: {state} at both ends")
    while abs(hi - lo) >= tol:
        mid = 0.5 * (lo + hi)
        if (_excess(eps0, mid, omega) > MARGINAL_BAND) == g_lo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
