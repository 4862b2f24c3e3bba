"""Time stepping for x'' + lam*cos(omega*t)*sin(x) = 0.

Two integrators are provided. ``symplectic_verlet`` is a kick-drift-kick
leapfrog with the explicit time dependence evaluated at kick times; it is
the workhorse for long horizons. ``adaptive_reference`` wraps scipy's
DOP853 pair at tight tolerances and serves as the in-repo truth that the
leapfrog and every approximation are checked against.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np
from numba import njit
from scipy.integrate import solve_ivp

from .model import LatticeParams, PhaseState, _require_nonlinear

SYMPLECTIC = "symplectic_verlet"
REFERENCE = "adaptive_reference"
METHODS = (SYMPLECTIC, REFERENCE)

_OK, _NONFINITE, _STEP_CAP = 0, 1, 2


class IntegrationError(RuntimeError):
    """Integration aborted. ``last_good`` is the last finite state reached."""

    def __init__(self, message: str, last_good: PhaseState | None = None, reason: str = "abort"):
        super().__init__(message)
        self.last_good = last_good
        self.reason = reason


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = SYMPLECTIC
    dt: float = 1e-3
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    sample_every: int = 1
    max_steps: int = 2_000_000_000

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown integrator method {self.method!r}; expected one of {METHODS}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if not (0 < self.rel_tol < 1e-2 and 0 < self.abs_tol < 1e-2):
            raise ValueError("rel_tol and abs_tol must lie in (0, 1e-2)")
        if int(self.sample_every) != self.sample_every or self.sample_every < 1:
            raise ValueError(f"sample_every must be an integer >= 1, got {self.sample_every!r}")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")

    @property
    def sample_spacing(self) -> float:
        return self.dt * self.sample_every

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "dt": self.dt,
            "rel_tol": self.rel_tol,
            "abs_tol": self.abs_tol,
            "sample_every": int(self.sample_every),
            "max_steps": int(self.max_steps),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IntegratorConfig":
        return cls(**d)


@dataclass(frozen=True)
class Trajectory:
    """Sampled orbit. Samples are held column-wise in ``t``, ``x``, ``p``."""

    params: LatticeParams
    t: np.ndarray
    x: np.ndarray
    p: np.ndarray
    config: IntegratorConfig
    stats: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        t, x, p = (np.asarray(a, dtype=float) for a in (self.t, self.x, self.p))
        if not (t.ndim == 1 and t.shape == x.shape == p.shape):
            raise ValueError("t, x, p must be 1-D arrays of equal length")
        if t.size < 2:
            raise ValueError("a trajectory needs at least 2 samples")
        if not np.all(np.diff(t) > 0):
            raise ValueError("sample times must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(x)) and np.all(np.isfinite(p))):
            raise ValueError("trajectory samples must be finite")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)

    def __len__(self) -> int:
        return self.t.size

    @property
    def samples(self) -> list[PhaseState]:
        return list(iter(self))

    def __iter__(self) -> Iterator[PhaseState]:
        for t, x, p in zip(self.t, self.x, self.p):
            yield PhaseState(float(x), float(p), float(t))

    @property
    def initial(self) -> PhaseState:
        return PhaseState(float(self.x[0]), float(self.p[0]), float(self.t[0]))

    @property
    def final(self) -> PhaseState:
        return PhaseState(float(self.x[-1]), float(self.p[-1]), float(self.t[-1]))

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])


# ---------------------------------------------------------------------------
# leapfrog kernels


@njit(cache=True, nogil=True)
def _leapfrog_run(x, p, t0, lam, omega, h, nsteps, every, out_t, out_x, out_p):
    """Advance nsteps of size h, writing every ``every``-th state plus the last.

    Returns (status, steps_done, samples_written, x, p).
    """
    half = 0.5 * h
    f = -lam * math.sin(x) * math.cos(omega * t0)
    out_t[0] = t0
    out_x[0] = x
    out_p[0] = p
    m = 1
    for k in range(1, nsteps + 1):
        ph = p + half * f
        xn = x + h * ph
        t = t0 + k * h
        f = -lam * math.sin(xn) * math.cos(omega * t)
        pn = ph + half * f
        if not (math.isfinite(xn) and math.isfinite(pn)):
            return _NONFINITE, k - 1, m, x, p
        x = xn
        p = pn
        if k % every == 0 or k == nsteps:
            out_t[m] = t
            out_x[m] = x
            out_p[m] = p
            m += 1
    return _OK, nsteps, m, x, p


@njit(cache=True, nogil=True)
def _leapfrog_tangent_run(x, p, t0, lam, omega, h, nsteps, every, out_t, out_x, out_p, out_m):
    """Leapfrog plus the exact Jacobian of the discrete map (det 1 per step)."""
    half = 0.5 * h
    a = 1.0
    b = 0.0
    c = 0.0
    d = 1.0
    ct = math.cos(omega * t0)
    f = -lam * math.sin(x) * ct
    fx = -lam * math.cos(x) * ct
    out_t[0] = t0
    out_x[0] = x
    out_p[0] = p
    out_m[0, 0] = 1.0
    out_m[0, 1] = 0.0
    out_m[0, 2] = 0.0
    out_m[0, 3] = 1.0
    m = 1
    for k in range(1, nsteps + 1):
        # rows (dx, dp) of the tangent matrix; columns are initial perturbations
        ph = p + half * f
        c = c + half * fx * a
        d = d + half * fx * b
        xn = x + h * ph
        a = a + h * c
        b = b + h * d
        t = t0 + k * h
        ct = math.cos(omega * t)
        f = -lam * math.sin(xn) * ct
        fx = -lam * math.cos(xn) * ct
        pn = ph + half * f
        c = c + half * fx * a
        d = d + half * fx * b
        if not (math.isfinite(xn) and math.isfinite(pn) and math.isfinite(a) and math.isfinite(d)):
            return _NONFINITE, k - 1, m, x, p
        x = xn
        p = pn
        if k % every == 0 or k == nsteps:
            out_t[m] = t
            out_x[m] = x
            out_p[m] = p
            out_m[m, 0] = a
            out_m[m, 1] = b
            out_m[m, 2] = c
            out_m[m, 3] = d
            m += 1
    return _OK, nsteps, m, x, p


def _step_count(span: float, dt: float) -> tuple[int, float]:
    n = max(1, int(math.ceil(span / dt - 1e-9)))
    return n, span / n


def step_symplectic(params: LatticeParams, state: PhaseState, dt: float) -> PhaseState:
    """One kick-drift-kick step. A negative ``dt`` steps backwards in time."""
    _require_nonlinear(params)
    if dt == 0 or not math.isfinite(dt):
        raise ValueError("dt must be finite and nonzero")
    lam, w = params.lam, params.omega
    half = 0.5 * dt
    ph = state.p - half * lam * math.sin(state.x) * math.cos(w * state.t)
    x = state.x + dt * ph
    t = state.t + dt
    p = ph - half * lam * math.sin(x) * math.cos(w * t)
    return PhaseState(x, p, t)


def propagate(params: LatticeParams, state: PhaseState, dt: float, nsteps: int) -> PhaseState:
    """Apply ``nsteps`` leapfrog steps of signed size ``dt``; returns the end state."""
    _require_nonlinear(params)
    buf = np.empty(2)
    status, done, _, x, p = _leapfrog_run(
        state.x, state.p, state.t, params.lam, params.omega, float(dt), int(nsteps), int(nsteps) + 1,
        buf, buf.copy(), buf.copy(),
    )
    if status != _OK:
        raise IntegrationError("non-finite state during propagation", PhaseState(x, p, state.t + done * dt), "nonfinite")
    return PhaseState(x, p, state.t + nsteps * dt)


def _check_span(initial: PhaseState, t_end: float):
    if not t_end > initial.t:
        raise ValueError(f"t_end ({t_end}) must exceed the initial time ({initial.t})")


def _sample_grid(t0: float, t_end: float, spacing: float) -> np.ndarray:
    n, _ = _step_count(t_end - t0, spacing)
    return t0 + (t_end - t0) * np.arange(n + 1) / n


def _abort_from_status(status, done, x, p, t0, h, cap_hit=False):
    last = PhaseState(float(x), float(p), t0 + done * h)
    if cap_hit:
        return IntegrationError("step-count cap exceeded", last, "step_cap")
    return IntegrationError(f"non-finite state after {done} steps at t={last.t:g}", last, "nonfinite")


def integrate(params: LatticeParams, initial: PhaseState, t_end: float,
              config: IntegratorConfig | None = None) -> Trajectory:
    """Integrate from ``initial`` to ``t_end`` and return the sampled trajectory.

    Raises :class:`IntegrationError` (with ``last_good``) on non-finite
    states or when the step cap in ``config.max_steps`` is exceeded.
    """
    _require_nonlinear(params)
    config = config or IntegratorConfig()
    _check_span(initial, t_end)
    if config.method == SYMPLECTIC:
        return _integrate_leapfrog(params, initial, t_end, config)
    return _integrate_reference(params, initial, t_end, config)


def _integrate_leapfrog(params, initial, t_end, config):
    nsteps, h = _step_count(t_end - initial.t, config.dt)
    if nsteps > config.max_steps:
        raise IntegrationError(f"{nsteps} steps requested, cap is {config.max_steps}", initial, "step_cap")
    every = int(config.sample_every)
    nsamp = nsteps // every + 2
    out_t, out_x, out_p = np.empty(nsamp), np.empty(nsamp), np.empty(nsamp)
    status, done, m, x, p = _leapfrog_run(
        initial.x, initial.p, initial.t, params.lam, params.omega, h, nsteps, every, out_t, out_x, out_p
    )
    if status != _OK:
        raise _abort_from_status(status, done, x, p, initial.t, h)
    stats = {"steps": int(nsteps), "dt_effective": h}
    t = out_t[:m]
    if params.lam == 0.0:
        # the scheme is exact for free flight; drop the accumulated round-off
        return Trajectory(params, t, initial.x + initial.p * (t - initial.t), np.full(m, initial.p), config, stats)
    return Trajectory(params, t, out_x[:m], out_p[:m], config, stats)


class _StepBudget(Exception):
    pass


def _reference_rhs(params, budget):
    lam, w = params.lam, params.omega
    calls = [0]

    def rhs(t, y):
        calls[0] += 1
        if calls[0] > budget:
            raise _StepBudget
        return [y[1], -lam * math.sin(y[0]) * math.cos(w * t)]

    return rhs, calls


def _integrate_reference(params, initial, t_end, config):
    grid = _sample_grid(initial.t, t_end, config.sample_spacing)
    if params.lam == 0.0:
        stats = {"nfev": 0, "rel_tol": config.rel_tol, "abs_tol": config.abs_tol}
        return Trajectory(params, grid, initial.x + initial.p * (grid - initial.t),
                          np.full(grid.size, initial.p), config, stats)
    # DOP853 uses 12 evaluations per step
    rhs, calls = _reference_rhs(params, 12 * config.max_steps)
    try:
        sol = solve_ivp(rhs, (initial.t, t_end), [initial.x, initial.p], method="DOP853",
                        t_eval=grid, rtol=config.rel_tol, atol=config.abs_tol)
    except _StepBudget:
        raise IntegrationError("step-count cap exceeded", initial, "step_cap") from None
    if not sol.success or not np.all(np.isfinite(sol.y)):
        finite = np.all(np.isfinite(sol.y), axis=0)
        idx = int(np.argmin(finite)) - 1 if not finite.all() else sol.y.shape[1] - 1
        last = PhaseState(float(sol.y[0, idx]), float(sol.y[1, idx]), float(sol.t[idx])) if idx >= 0 else initial
        raise IntegrationError(f"reference integration failed: {sol.message}", last, "nonfinite")
    stats = {"nfev": int(sol.nfev), "rel_tol": config.rel_tol, "abs_tol": config.abs_tol}
    return Trajectory(params, sol.t, sol.y[0], sol.y[1], config, stats)


def integrate_tangent(params: LatticeParams, initial: PhaseState, t_end: float,
                      config: IntegratorConfig | None = None) -> tuple[Trajectory, np.ndarray]:
    """Integrate the orbit together with its 2x2 tangent map.

    Returns the trajectory and an array of shape (n_samples, 2, 2) holding
    d(x, p)(t) / d(x0, p0) at each sample.
    """
    _require_nonlinear(params)
    config = config or IntegratorConfig()
    _check_span(initial, t_end)
    if config.method == SYMPLECTIC:
        nsteps, h = _step_count(t_end - initial.t, config.dt)
        if nsteps > config.max_steps:
            raise IntegrationError(f"{nsteps} steps requested, cap is {config.max_steps}", initial, "step_cap")
        every = int(config.sample_every)
        nsamp = nsteps // every + 2
        out_t, out_x, out_p = np.empty(nsamp), np.empty(nsamp), np.empty(nsamp)
        out_m = np.empty((nsamp, 4))
        status, done, m, x, p = _leapfrog_tangent_run(
            initial.x, initial.p, initial.t, params.lam, params.omega, h, nsteps, every,
            out_t, out_x, out_p, out_m,
        )
        if status != _OK:
            raise _abort_from_status(status, done, x, p, initial.t, h)
        traj = Trajectory(params, out_t[:m], out_x[:m], out_p[:m], config, {"steps": int(nsteps), "dt_effective": h})
        return traj, out_m[:m].reshape(m, 2, 2)

    lam, w = params.lam, params.omega

    def rhs(t, y):
        x, p, a, b, c, d = y
        k = -lam * math.cos(x) * math.cos(w * t)
        return [p, -lam * math.sin(x) * math.cos(w * t), c, d, k * a, k * b]

    grid = _sample_grid(initial.t, t_end, config.sample_spacing)
    sol = solve_ivp(rhs, (initial.t, t_end), [initial.x, initial.p, 1.0, 0.0, 0.0, 1.0],
                    method="DOP853", t_eval=grid, rtol=config.rel_tol, atol=config.abs_tol)
    if not sol.success or not np.all(np.isfinite(sol.y)):
        raise IntegrationError(f"reference tangent integration failed: {sol.message}", initial, "nonfinite")
    traj = Trajectory(params, sol.t, sol.y[0], sol.y[1], config, {"nfev": int(sol.nfev)})
    return traj, sol.y[2:].T.reshape(-1, 2, 2)


def reference_config(spacing: float = 1e-2, rel_tol: float = 1e-10, abs_tol: float = 1e-12) -> IntegratorConfig:
    """Reference-integrator config whose output grid has the given spacing."""
    return IntegratorConfig(method=REFERENCE, dt=spacing, rel_tol=rel_tol, abs_tol=abs_tol)


def with_method(config: IntegratorConfig, method: str) -> IntegratorConfig:
    return replace(config, method=method)
