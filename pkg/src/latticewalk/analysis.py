"""Trajectory diagnostics and regime classification."""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np
from numba import njit
from scipy.signal import find_peaks

from .integrate import Trajectory, _step_count
from .model import LatticeParams, PhaseState, _require_nonlinear, nearest_site

TWO_PI = 2.0 * math.pi


class AnalysisError(ValueError):
    pass


class NonUniformSamplingError(AnalysisError):
    pass


# ---------------------------------------------------------------------------
# Lyapunov spectrum


@njit(cache=True, nogil=True)
def _benettin(x, p, t0, lam, omega, h, nsteps, renorm):
    """Tangent dynamics of the leapfrog map on (x, p, theta = omega*t).

    Three tangent vectors are reorthonormalized by modified Gram-Schmidt
    every ``renorm`` steps; returns the accumulated log stretches.
    """
    half = 0.5 * h
    Q = np.eye(3)
    S = np.zeros(3)
    th = omega * t0
    st, ct = math.sin(th), math.cos(th)
    sx, cx = math.sin(x), math.cos(x)
    for k in range(1, nsteps + 1):
        fx = -lam * cx * ct
        fth = lam * sx * st
        ph = p - half * lam * sx * ct
        for j in range(3):
            Q[1, j] += half * (fx * Q[0, j] + fth * Q[2, j])
        x = x + h * ph
        for j in range(3):
            Q[0, j] += h * Q[1, j]
        th = omega * (t0 + k * h)
        st, ct = math.sin(th), math.cos(th)
        sx, cx = math.sin(x), math.cos(x)
        fx = -lam * cx * ct
        fth = lam * sx * st
        p = ph - half * lam * sx * ct
        for j in range(3):
            Q[1, j] += half * (fx * Q[0, j] + fth * Q[2, j])
        if k % renorm == 0 or k == nsteps:
            for j in range(3):
                for i in range(j):
                    dot = Q[0, j] * Q[0, i] + Q[1, j] * Q[1, i] + Q[2, j] * Q[2, i]
                    for r in range(3):
                        Q[r, j] -= dot * Q[r, i]
                nrm = math.sqrt(Q[0, j] ** 2 + Q[1, j] ** 2 + Q[2, j] ** 2)
                S[j] += math.log(nrm)
                for r in range(3):
                    Q[r, j] /= nrm
    return S


@dataclass(frozen=True)
class LyapunovResult:
    exponents: tuple
    t_total: float
    renorm_interval: float
    short_horizon: bool = False

    @property
    def largest(self) -> float:
        return self.exponents[0]

    @property
    def zero_sum_tolerance(self) -> float:
        return max(1e-3, 0.05 * abs(self.exponents[0]))

    def satisfies_zero_sum(self) -> bool:
        tol = self.zero_sum_tolerance
        return abs(self.exponents[0] + self.exponents[2]) <= tol and abs(self.exponents[1]) <= tol


def lyapunov_spectrum(params: LatticeParams, initial: PhaseState, t_total: float,
                      renorm_interval: float = 1.0, dt: float = 1e-3) -> LyapunovResult:
    """Lyapunov spectrum of the extended autonomous flow (x, p, omega*t).

    Horizons shorter than 100 renormalization intervals still run but are
    flagged with ``short_horizon``.
    """
    _require_nonlinear(params)
    if not (t_total > 0 and renorm_interval > 0 and dt > 0):
        raise AnalysisError("t_total, renorm_interval and dt must be positive")
    steps_per, h = _step_count(renorm_interval, dt)
    nsteps = max(1, int(round(t_total / h)))
    short = t_total < 100 * renorm_interval
    if short:
        warnings.warn(f"Lyapunov horizon {t_total} is shorter than 100 renormalization intervals", RuntimeWarning)
    S = _benettin(initial.x, initial.p, initial.t, params.lam, params.omega, h, nsteps, steps_per)
    exps = tuple(sorted((float(s) / (nsteps * h) for s in S), reverse=True))
    return LyapunovResult(exps, nsteps * h, steps_per * h, short)


# ---------------------------------------------------------------------------
# spectra


@dataclass(frozen=True)
class SpectrumResult:
    """One-sided power spectrum; ``freqs`` are angular frequencies.

    Normalized so that power.sum() equals the mean square of the windowed,
    mean-removed input.
    """

    freqs: np.ndarray
    power: np.ndarray

    @property
    def resolution(self) -> float:
        return float(self.freqs[1] - self.freqs[0])


MIN_SPECTRUM_SAMPLES = 256


def _uniform_dt(t) -> float:
    t = np.asarray(t, dtype=float)
    d = np.diff(t)
    if d.size == 0 or np.any(d <= 0):
        raise NonUniformSamplingError("sample times must be strictly increasing")
    dt = float((t[-1] - t[0]) / (t.size - 1))
    if np.max(np.abs(d - dt)) > 1e-9 * max(1.0, abs(t[-1])):
        raise NonUniformSamplingError("power spectrum needs uniformly spaced samples")
    return dt


def windowed(series) -> np.ndarray:
    y = np.asarray(series, dtype=float)
    return (y - y.mean()) * np.hanning(y.size)


def power_spectrum(series, dt: float | None = None, t=None) -> SpectrumResult:
    """Hann-windowed, mean-removed periodogram of uniformly sampled data.

    Pass either the spacing ``dt`` or the sample times ``t`` (checked for
    uniformity).
    """
    y = np.asarray(series, dtype=float)
    if t is not None:
        if len(t) != y.size:
            raise AnalysisError("t and series differ in length")
        dt = _uniform_dt(t)
    if dt is None or not dt > 0:
        raise AnalysisError("a positive sample spacing is required")
    n = y.size
    if n < MIN_SPECTRUM_SAMPLES:
        raise AnalysisError(f"need at least {MIN_SPECTRUM_SAMPLES} samples, got {n}")
    spec = np.abs(np.fft.rfft(windowed(y))) ** 2 / n**2
    spec[1 : (n + 1) // 2] *= 2.0
    freqs = TWO_PI * np.fft.rfftfreq(n, d=dt)
    return SpectrumResult(freqs, spec)


def trajectory_spectrum(traj: Trajectory, component: str = "p", t_max: float | None = None) -> SpectrumResult:
    sel = slice(None) if t_max is None else traj.t <= t_max
    return power_spectrum(getattr(traj, component)[sel], t=traj.t[sel])


def dominant_frequency(spec: SpectrumResult, refine: bool = True) -> float:
    """Angular frequency of the largest non-DC bin, optionally refined by a
    parabola through the log power of the neighbouring bins."""
    k = int(np.argmax(spec.power[1:])) + 1
    f = float(spec.freqs[k])
    if refine and 1 <= k < spec.power.size - 1:
        a, b, c = np.log(spec.power[k - 1 : k + 2] + 1e-300)
        den = a - 2 * b + c
        if den < 0:
            f += 0.5 * (a - c) / den * spec.resolution
    return f


def spectral_peaks(spec: SpectrumResult, floor_factor: float = 10.0, min_separation_bins: int = 8) -> np.ndarray:
    """Angular frequencies of local maxima above ``floor_factor`` x median power.

    Peaks closer than ``min_separation_bins`` are merged into the larger one,
    so a single windowed line is never counted twice.
    """
    power = spec.power[1:]
    floor = float(np.median(power))
    idx, _ = find_peaks(power, height=floor_factor * floor, distance=min_separation_bins)
    return spec.freqs[idx + 1]


# ---------------------------------------------------------------------------
# phase-space folding


def fold_phase_space(traj_or_x, p=None):
    """Map positions into the first lattice period [0, 2*pi); momenta unchanged."""
    if isinstance(traj_or_x, Trajectory):
        x, p = traj_or_x.x, traj_or_x.p
    else:
        x = np.asarray(traj_or_x, dtype=float)
    xf = np.mod(x, TWO_PI)
    xf = np.where(xf >= TWO_PI, 0.0, xf)
    return xf, (None if p is None else np.asarray(p, dtype=float))


@dataclass(frozen=True)
class Occupancy:
    counts: np.ndarray
    allowed: np.ndarray
    h_max: float

    @property
    def fraction(self) -> float:
        n = int(self.allowed.sum())
        return float((self.counts[self.allowed] > 0).sum() / n) if n else float("nan")


def folded_occupancy(traj: Trajectory, bins: int = 32, p_range=(-2.5, 2.5)) -> Occupancy:
    """Histogram of the folded orbit over [0, 2*pi) x p_range.

    A cell is energetically allowed when its center satisfies
    p**2/2 - lam*|cos x| <= H_max, where H_max is the largest instantaneous
    energy reached along the trajectory (the potential can contribute at most
    lam*|cos x| at any phase of the modulation).
    """
    lam, w = traj.params.lam, traj.params.omega
    xf, p = fold_phase_space(traj)
    counts, _, _ = np.histogram2d(xf, p, bins=bins, range=[[0.0, TWO_PI], list(p_range)])
    energy = 0.5 * traj.p**2 - lam * np.cos(traj.x) * np.cos(w * traj.t)
    h_max = float(energy.max())
    xc = (np.arange(bins) + 0.5) * TWO_PI / bins
    pc = p_range[0] + (np.arange(bins) + 0.5) * (p_range[1] - p_range[0]) / bins
    X, P = np.meshgrid(xc, pc, indexing="ij")
    allowed = 0.5 * P**2 - lam * np.abs(np.cos(X)) <= h_max
    return Occupancy(counts, allowed, h_max)


# ---------------------------------------------------------------------------
# site hopping


class SiteVisit(NamedTuple):
    site: int
    entry_time: float
    residence_time: float


SITE_BAND = math.pi / 4


def _core_entries(x, band):
    n = np.rint(x / math.pi).astype(np.int64)
    core = np.abs(x - n * math.pi) < band
    starts = [0]
    sites = [int(nearest_site(x[0]))]
    cur = sites[0]
    for i in np.flatnonzero(core):
        if n[i] != cur:
            cur = int(n[i])
            starts.append(int(i))
            sites.append(cur)
    return np.array(starts), np.array(sites, dtype=np.int64)


def _captured(x, p, start, stop, site):
    """True if momentum reverses while the atom is inside the site's well."""
    seg_x = x[start:stop]
    seg_p = p[start:stop]
    if seg_p.size < 2:
        return False
    inside = np.abs(seg_x - site * math.pi) < 0.5 * math.pi
    flips = np.signbit(seg_p[1:]) != np.signbit(seg_p[:-1])
    return bool(np.any(flips & inside[1:]))


def site_sequence(traj: Trajectory, band: float = SITE_BAND, transits: str = "keep") -> list[SiteVisit]:
    """Segment a trajectory into visits to antinodes x = n*pi.

    The occupied site changes only when the atom comes within ``band`` of a
    different site's center (hysteresis against flicker at the nodes).
    With ``transits="merge"`` visits in which the atom never turns around
    inside the well are treated as flight and dropped, and neighbouring
    visits to the same site are merged. The last visit's residence is
    censored at the end of the trajectory.
    """
    if transits not in ("keep", "merge"):
        raise AnalysisError(f"transits must be 'keep' or 'merge', got {transits!r}")
    t, x, p = traj.t, traj.x, traj.p
    starts, sites = _core_entries(x, band)
    stops = np.append(starts[1:], t.size)
    if transits == "merge":
        keep = [i == 0 or _captured(x, p, s, e, n) for i, (s, e, n) in enumerate(zip(starts, stops, sites))]
        starts, sites = starts[keep], sites[keep]
        dup = np.concatenate(([False], sites[1:] == sites[:-1]))
        starts, sites = starts[~dup], sites[~dup]
    entry = t[starts]
    ends = np.append(entry[1:], t[-1])
    return [SiteVisit(int(n), float(a), float(b - a)) for n, a, b in zip(sites, entry, ends)]


def residence_times(visits: list[SiteVisit], include_last: bool = False) -> np.ndarray:
    r = np.array([v.residence_time for v in visits])
    return r if include_last or r.size <= 1 else r[:-1]


def jump_sizes(visits: list[SiteVisit]) -> np.ndarray:
    """Signed jumps between consecutive visits, in units of pi (integers)."""
    s = np.array([v.site for v in visits], dtype=np.int64)
    return np.diff(s)


# ---------------------------------------------------------------------------
# drift


def drift_fit(traj: Trajectory) -> tuple[float, float]:
    """Least-squares line x = <p>*t + b; returns (<p>, b)."""
    if len(traj) < 100:
        raise AnalysisError("drift fit needs at least 100 samples")
    slope, intercept = np.polyfit(traj.t, traj.x, 1)
    return float(slope), float(intercept)


# ---------------------------------------------------------------------------
# regime classification


class Regime(str, enum.Enum):
    TRAPPED_OSCILLATION_JUMPING = "trapped_oscillation_jumping"
    PENDULUM_STEP_SHIFTING = "pendulum_step_shifting"
    RANDOM_CHAOTIC_TRANSPORT = "random_chaotic_transport"
    QUASI_PERIODIC_TRAPPED = "quasi_periodic_trapped"
    BALLISTIC = "ballistic"


@dataclass(frozen=True)
class RegimeThresholds:
    fast_atom_factor: float = 2.0           # p0 > factor*sqrt(lam)
    fast_modulation_factor: float = 10.0    # omega >= factor*sqrt(lam)
    displacement_ratio: float = 0.75        # |x_T - x_0| >= ratio * |p0| * T
    lyapunov_cut: float = 0.01
    trapped_excursion: float = TWO_PI
    residence_fraction: float = 0.5         # median residence >= fraction * pi/omega
    slow_ratio: float = 10.0                # (pi/omega) / (2pi/sqrt(lam)) above this: slow modulation
    pendulum_ratio_min: float = 0.5
    pendulum_oscillations: float = 3.0      # median residence >= this many oscillation periods
    transport_ratio: float = 2.0            # hop time pi/<p> below ratio * pi/omega: transport
    horizon_periods: float = 50.0


@dataclass(frozen=True)
class RegimeReport:
    label: Regime
    diagnostics: dict
    inconclusive: bool = False
    reasons: tuple = ()

    def to_dict(self) -> dict:
        return {
            "label": self.label.value,
            "inconclusive": self.inconclusive,
            "diagnostics": self.diagnostics,
            "reasons": list(self.reasons),
        }


def required_horizon(params: LatticeParams, thresholds: RegimeThresholds = RegimeThresholds()) -> float:
    periods = []
    if params.omega > 0:
        periods.append(TWO_PI / params.omega)
    if params.lam > 0:
        periods.append(TWO_PI / math.sqrt(params.lam))
    return thresholds.horizon_periods * max(periods) if periods else 0.0


def _finite_or_none(v):
    return None if v is None or not math.isfinite(v) else float(v)


def classify_regime(params: LatticeParams, initial: PhaseState, traj: Trajectory,
                    lyapunov: LyapunovResult, thresholds: RegimeThresholds = RegimeThresholds()) -> RegimeReport:
    """Name the walking regime from trajectory statistics and the largest exponent.

    Rules are applied in order: ballistic, quasi-periodic trapped, trapped
    oscillation with jumping, pendulum step-shifting, and finally random
    chaotic transport. A horizon shorter than ``horizon_periods`` times the
    longer of the modulation and oscillation periods sets ``inconclusive``.
    """
    th = thresholds
    lam, w = params.lam, params.omega
    root = math.sqrt(lam)
    T = traj.duration
    trap_time = math.pi / w if w > 0 else None
    osc_period = TWO_PI / root if lam > 0 else None
    mean_p, _ = drift_fit(traj)
    hop_time = math.pi / abs(mean_p) if abs(mean_p) > 1e-12 else None
    p0 = initial.p
    net = float(traj.x[-1] - traj.x[0])
    disp_ratio = abs(net) / (abs(p0) * T) if p0 != 0 else None
    visits = site_sequence(traj, transits="merge")
    res = residence_times(visits)
    median_res = float(np.median(res)) if res.size else T
    start_site = nearest_site(initial.x)
    excursion = float(np.max(np.abs(traj.x - start_site * math.pi)))
    ratio = trap_time / osc_period if (trap_time and osc_period) else None

    diagnostics = {
        "trapping_time": _finite_or_none(trap_time),
        "oscillation_period": _finite_or_none(osc_period),
        "hop_time": _finite_or_none(hop_time),
        "largest_lyapunov": lyapunov.largest,
        "net_displacement_ratio": _finite_or_none(disp_ratio),
        "mean_momentum": mean_p,
        "median_residence": median_res,
        "n_site_visits": len(visits),
        "excursion": excursion,
        "horizon": T,
    }
    required = required_horizon(params, th)
    inconclusive = T < required * (1.0 - 1e-9)
    reasons = []
    if inconclusive:
        reasons.append(f"horizon {T:g} shorter than required {required:g}")

    def report(label, why):
        return RegimeReport(label, diagnostics, inconclusive, tuple(reasons + [why]))

    fast_atom = abs(p0) > th.fast_atom_factor * root
    fast_mod = w >= th.fast_modulation_factor * root
    if (fast_atom or fast_mod) and disp_ratio is not None and disp_ratio >= th.displacement_ratio:
        return report(Regime.BALLISTIC, "fast atom or fast modulation with near-free displacement")
    if lyapunov.largest < th.lyapunov_cut and excursion < th.trapped_excursion:
        return report(Regime.QUASI_PERIODIC_TRAPPED, "regular orbit confined near the start site")
    slow_enough = trap_time is not None and median_res >= th.residence_fraction * trap_time
    transport = hop_time is not None and trap_time is not None and hop_time < th.transport_ratio * trap_time
    if ratio is not None and ratio > th.slow_ratio and slow_enough:
        return report(Regime.TRAPPED_OSCILLATION_JUMPING, "residence set by the slow modulation, many oscillations per trap")
    swings = osc_period is not None and median_res >= th.pendulum_oscillations * osc_period
    if ratio is not None and th.pendulum_ratio_min <= ratio <= th.slow_ratio and slow_enough and swings and not transport:
        return report(Regime.PENDULUM_STEP_SHIFTING, "residence spans a few oscillation periods")
    return report(Regime.RANDOM_CHAOTIC_TRANSPORT, "no trapping signature; hopping comparable to modulation")
