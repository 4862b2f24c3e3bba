"""Dimensionless model of an atom in an amplitude-modulated standing wave.

Units follow the recoil scaling: positions in 1/k, momenta in hbar*k and
times in 1/omega_r with omega_r = hbar*k**2/m. In these units

    H(x, p, t) = p**2/2 - lambda*cos(x)*cos(omega*t)

and the equations of motion are x' = p, p' = -lambda*sin(x)*cos(omega*t).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class ModelDomainError(ValueError):
    """Raised when a parameter record is outside the nonlinear model's domain."""


@dataclass(frozen=True)
class LatticeParams:
    """Lattice depth ``lam``, modulation frequency ``omega`` and offset ``eps0``.

    ``omega == 0`` freezes the lattice (plain pendulum). ``eps0`` is only
    meaningful for the linearized Hill equation; the nonlinear operations
    in this module refuse it.
    """

    lam: float
    omega: float
    eps0: float = 0.0

    def __post_init__(self):
        for name in ("lam", "omega", "eps0"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ModelDomainError(f"{name} must be finite, got {value!r}")
        if self.lam < 0:
            raise ModelDomainError(f"lam must be non-negative, got {self.lam!r}")
        if self.omega < 0:
            raise ModelDomainError(f"omega must be non-negative, got {self.omega!r}")

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "omega": self.omega, "eps0": self.eps0}

    @classmethod
    def from_dict(cls, d: dict) -> "LatticeParams":
        return cls(lam=float(d["lambda"]), omega=float(d["omega"]), eps0=float(d.get("eps0", 0.0)))


@dataclass(frozen=True)
class PhaseState:
    x: float
    p: float
    t: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.p) and math.isfinite(self.t)):
            raise ModelDomainError(f"phase state must be finite: {self!r}")

    def to_dict(self) -> dict:
        return {"x": self.x, "p": self.p, "t": self.t}

    @classmethod
    def from_dict(cls, d: dict) -> "PhaseState":
        return cls(x=float(d["x"]), p=float(d["p"]), t=float(d.get("t", 0.0)))


@dataclass(frozen=True)
class Site:
    """Antinode of the lattice at x = index*pi."""

    index: int

    @property
    def center(self) -> float:
        return self.index * math.pi


def nearest_site(x):
    """Index n minimizing |x - n*pi|; exact ties at nodes go to the lower index.

    Works elementwise on arrays.
    """
    r = np.asarray(x, dtype=float) / np.pi
    n = np.ceil(r - 0.5)
    if n.ndim == 0:
        return int(n)
    return n.astype(np.int64)


def _require_nonlinear(params: LatticeParams):
    if params.eps0 != 0.0:
        raise ModelDomainError(
            "eps0 != 0 is only defined for the linearized Hill equation; "
            "use latticewalk.stability or specfun.linearized_solution"
        )


def potential(params: LatticeParams, x, t):
    _require_nonlinear(params)
    return -params.lam * np.cos(params.omega * t) * np.cos(x)


def traveling_wave_potential(params: LatticeParams, x, t):
    """Same potential written as two counter-propagating waves."""
    _require_nonlinear(params)
    wt = params.omega * t
    return -0.5 * params.lam * (np.cos(x + wt) + np.cos(x - wt))


def force(params: LatticeParams, x, t):
    _require_nonlinear(params)
    return -params.lam * np.cos(params.omega * t) * np.sin(x)


def hamiltonian(params: LatticeParams, state: PhaseState) -> float:
    return 0.5 * state.p**2 + float(potential(params, state.x, state.t))


def drift_forces(params: LatticeParams, p0: float, t):
    """The two traveling-wave forces felt by an atom moving at constant ``p0``.

    With x = p0*t the force -lam*sin(p0*t)*cos(omega*t) splits into
    components oscillating at omega + p0 and omega - p0.
    """
    half = 0.5 * params.lam
    w = params.omega
    return -half * np.sin((w + p0) * t), half * np.sin((w - p0) * t)
