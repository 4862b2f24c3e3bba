"""Command-line front end.

    latticewalk simulate --config run.json --out results/
    latticewalk print-config > run.json

Configs are JSON documents merged over the defaults printed by
``print-config``; unknown keys are rejected. Tables are written as CSV
(floats in shortest round-trip form) or JSON, each with a ``run.json``
sidecar that echoes the resolved config. Exit codes: 0 success, 2 config
error, 3 numerical abort, 4 sweep finished with failed (NaN) cells.
"""
from __future__ import annotations

import argparse
import copy
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__, analysis, approx, sampling, stability
from .integrate import METHODS, IntegrationError, IntegratorConfig, integrate
from .model import LatticeParams, PhaseState

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_PARTIAL = 0, 2, 3, 4

OUTPUTS = ("trajectory", "spectrum", "lyapunov", "folded", "sites", "regime", "chart", "approx-compare", "ensemble")
SWEEP_FIELDS = ("lambda", "omega", "x0", "p0")

DEFAULT_CONFIG = {
    "params": {"lambda": 1.0, "omega": 0.02, "eps0": 0.0},
    "initial": {"x": 0.0, "p": 0.02, "t": 0.0},
    "integrator": {
        "method": "symplectic_verlet",
        "dt": 0.001,
        "rel_tol": 1e-10,
        "abs_tol": 1e-12,
        "sample_every": 10,
        "max_steps": 2_000_000_000,
    },
    "horizon": 2000.0,
    "seed": 0,
    "outputs": ["trajectory"],
    "lyapunov": {"t_total": 10000.0, "renorm_interval": 1.0, "dt": 0.001},
    "spectrum": {"component": "p", "t_max": None},
    "sites": {"band": math.pi / 4, "transits": "merge"},
    "folded": {"bins": 32, "p_range": [-2.5, 2.5]},
    "classify": asdict(analysis.RegimeThresholds()),
    "chart": {"eps0": 0.0, "lambda_range": [-5.0, 5.0], "omega_range": [0.05, 5.0], "resolution": 64},
    "approx": {"kind": "harmonic", "window": [0.0, 2 * math.pi], "spacing": None},
    "ensemble": {"mean_x0": 0.4, "variance": math.pi / 2, "n": 50, "samples": 256},
    "sweep": {"axes": [], "jobs": 1},
}


class ConfigError(ValueError):
    pass


class NumericalAbort(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# config parsing


def _merge(base, override, path):
    if not isinstance(override, dict):
        raise ConfigError(f"{path or 'config'}: expected an object")
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"{where}: unknown key")
        if isinstance(base[key], dict):
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = value
    return out


def _num(value, where, integer=False, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if integer:
        if int(value) != value:
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return int(value)
    if not math.isfinite(value):
        raise ConfigError(f"{where}: must be finite")
    return float(value)


def _pair(value, where):
    if not (isinstance(value, list) and len(value) == 2):
        raise ConfigError(f"{where}: expected a [low, high] pair")
    return [_num(v, f"{where}[{i}]") for i, v in enumerate(value)]


@dataclass(frozen=True)
class SweepAxis:
    field: str
    min: float
    max: float
    count: int

    def values(self) -> np.ndarray:
        return np.linspace(self.min, self.max, self.count)


@dataclass(frozen=True)
class RunConfig:
    params: LatticeParams
    initial: PhaseState
    integrator: IntegratorConfig
    horizon: float
    seed: int
    outputs: tuple
    raw: dict           # fully resolved document, as printed by print-config

    def section(self, name: str) -> dict:
        return self.raw[name]

    @property
    def sweep_axes(self) -> list[SweepAxis]:
        return _parse_axes(self.raw["sweep"]["axes"])


def _parse_axes(axes) -> list[SweepAxis]:
    if not isinstance(axes, list) or len(axes) > 2:
        raise ConfigError("sweep.axes: expected a list of at most 2 axes")
    out = []
    for i, ax in enumerate(axes):
        where = f"sweep.axes[{i}]"
        if not isinstance(ax, dict):
            raise ConfigError(f"{where}: expected an object")
        extra = set(ax) - {"field", "min", "max", "count"}
        if extra:
            raise ConfigError(f"{where}.{sorted(extra)[0]}: unknown key")
        if ax.get("field") not in SWEEP_FIELDS:
            raise ConfigError(f"{where}.field: must be one of {SWEEP_FIELDS}, got {ax.get('field')!r}")
        count = _num(ax.get("count"), f"{where}.count", integer=True)
        if count < 2:
            raise ConfigError(f"{where}.count: must be >= 2")
        out.append(SweepAxis(ax["field"], _num(ax.get("min"), f"{where}.min"),
                             _num(ax.get("max"), f"{where}.max"), count))
    if len({a.field for a in out}) != len(out):
        raise ConfigError("sweep.axes: a field may be swept only once")
    return out


def _validate(doc: dict) -> RunConfig:
    p, s, it = doc["params"], doc["initial"], doc["integrator"]
    try:
        params = LatticeParams(_num(p["lambda"], "params.lambda"), _num(p["omega"], "params.omega"),
                               _num(p["eps0"], "params.eps0"))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"params: {exc}") from None
    initial = PhaseState(_num(s["x"], "initial.x"), _num(s["p"], "initial.p"), _num(s["t"], "initial.t"))
    if it["method"] not in METHODS:
        raise ConfigError(f"integrator.method: must be one of {METHODS}, got {it['method']!r}")
    try:
        integ = IntegratorConfig(
            method=it["method"], dt=_num(it["dt"], "integrator.dt"),
            rel_tol=_num(it["rel_tol"], "integrator.rel_tol"), abs_tol=_num(it["abs_tol"], "integrator.abs_tol"),
            sample_every=_num(it["sample_every"], "integrator.sample_every", integer=True),
            max_steps=_num(it["max_steps"], "integrator.max_steps", integer=True),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"integrator: {exc}") from None
    horizon = _num(doc["horizon"], "horizon")
    if not horizon > initial.t:
        raise ConfigError("horizon: must exceed initial.t")
    seed = _num(doc["seed"], "seed", integer=True)
    if not 0 <= seed < 2**64:
        raise ConfigError("seed: must be an unsigned 64-bit integer")
    outs = doc["outputs"]
    if not isinstance(outs, list) or any(o not in OUTPUTS for o in outs):
        raise ConfigError(f"outputs: expected a list drawn from {OUTPUTS}")
    ly = doc["lyapunov"]
    for k in ("t_total", "renorm_interval", "dt"):
        if not _num(ly[k], f"lyapunov.{k}") > 0:
            raise ConfigError(f"lyapunov.{k}: must be positive")
    if doc["spectrum"]["component"] not in ("x", "p"):
        raise ConfigError("spectrum.component: must be 'x' or 'p'")
    _num(doc["spectrum"]["t_max"], "spectrum.t_max", allow_none=True)
    if doc["sites"]["transits"] not in ("keep", "merge"):
        raise ConfigError("sites.transits: must be 'keep' or 'merge'")
    _num(doc["sites"]["band"], "sites.band")
    _num(doc["folded"]["bins"], "folded.bins", integer=True)
    _pair(doc["folded"]["p_range"], "folded.p_range")
    for k, v in doc["classify"].items():
        _num(v, f"classify.{k}")
    ch = doc["chart"]
    _num(ch["eps0"], "chart.eps0")
    _pair(ch["lambda_range"], "chart.lambda_range")
    _pair(ch["omega_range"], "chart.omega_range")
    res = ch["resolution"]
    if isinstance(res, list):
        [_num(r, "chart.resolution", integer=True) for r in res]
    else:
        _num(res, "chart.resolution", integer=True)
    ap = doc["approx"]
    try:
        approx.ApproxKind(ap["kind"])
    except ValueError:
        raise ConfigError(f"approx.kind: must be one of {[k.value for k in approx.ApproxKind]}") from None
    _pair(ap["window"], "approx.window")
    _num(ap["spacing"], "approx.spacing", allow_none=True)
    en = doc["ensemble"]
    _num(en["mean_x0"], "ensemble.mean_x0")
    _num(en["variance"], "ensemble.variance")
    _num(en["n"], "ensemble.n", integer=True)
    _num(en["samples"], "ensemble.samples", integer=True)
    _parse_axes(doc["sweep"]["axes"])
    _num(doc["sweep"]["jobs"], "sweep.jobs", integer=True)
    return RunConfig(params, initial, integ, horizon, seed, tuple(outs), doc)


def parse_config(text: str | None, source: str = "config") -> RunConfig:
    """Parse a JSON config merged over the defaults; errors name line or field."""
    if text is None:
        return _validate(copy.deepcopy(DEFAULT_CONFIG))
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return _validate(_merge(DEFAULT_CONFIG, doc, ""))


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return parse_config(None)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_config(text, path)


def dump_config(cfg: RunConfig) -> str:
    return json.dumps(cfg.raw, indent=2) + "\n"


# ---------------------------------------------------------------------------
# table IO


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path: Path, columns, rows, fmt: str = "csv") -> Path:
    """Write rows as CSV (header, '\\n' endings) or as a JSON column/row document."""
    if fmt == "json":
        path = path.with_suffix(".json")
        doc = {"columns": list(columns), "rows": [[_jsonable(v) for v in r] for r in rows]}
        path.write_text(json.dumps(doc) + "\n")
        return path
    path = path.with_suffix(".csv")
    lines = [",".join(columns)]
    lines.extend(",".join(_cell(v) for v in r) for r in rows)
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def _jsonable(v):
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return v


def read_table(path) -> tuple[list, list]:
    """Inverse of :func:`write_table`; numeric CSV cells come back as float."""
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        return doc["columns"], doc["rows"]
    lines = path.read_text().split("\n")
    header = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        if not line:
            continue
        row = []
        for cell in line.split(","):
            try:
                row.append(float(cell))
            except ValueError:
                row.append(cell)
        rows.append(row)
    return header, rows


def _write_json(path: Path, doc: dict) -> Path:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------------------
# artifacts


@dataclass
class Context:
    cfg: RunConfig
    out: Path
    fmt: str
    jobs: int
    sidecar: dict

    def table(self, name, columns, rows):
        p = write_table(self.out / name, columns, rows, self.fmt)
        self.sidecar.setdefault("files", []).append(p.name)
        return p

    def document(self, name, doc):
        p = _write_json(self.out / f"{name}.json", doc)
        self.sidecar.setdefault("files", []).append(p.name)
        return p


def _simulate(cfg: RunConfig, sidecar: dict):
    try:
        traj = integrate(cfg.params, cfg.initial, cfg.horizon, cfg.integrator)
    except IntegrationError as exc:
        sidecar["status"] = "aborted"
        sidecar["abort"] = {"reason": exc.reason, "message": str(exc),
                            "last_good": exc.last_good.to_dict() if exc.last_good else None}
        raise NumericalAbort(str(exc)) from None
    sidecar["integrator_stats"] = {k: _jsonable(v) for k, v in traj.stats.items()}
    return traj


def _lyapunov(cfg: RunConfig, params=None, initial=None) -> analysis.LyapunovResult:
    ly = cfg.section("lyapunov")
    return analysis.lyapunov_spectrum(params or cfg.params, initial or cfg.initial, ly["t_total"],
                                      ly["renorm_interval"], ly["dt"])


def _thresholds(cfg: RunConfig) -> analysis.RegimeThresholds:
    names = {f.name for f in fields(analysis.RegimeThresholds)}
    return analysis.RegimeThresholds(**{k: float(v) for k, v in cfg.section("classify").items() if k in names})


def _emit(ctx: Context, kind: str, traj=None):
    cfg = ctx.cfg
    if kind == "trajectory":
        ctx.table("trajectory", ("t", "x", "p"), zip(traj.t.tolist(), traj.x.tolist(), traj.p.tolist()))
    elif kind == "spectrum":
        sp = cfg.section("spectrum")
        spec = analysis.trajectory_spectrum(traj, sp["component"], sp["t_max"])
        ctx.table("spectrum", ("omega", "power"), zip(spec.freqs.tolist(), spec.power.tolist()))
        ctx.sidecar["spectral_peaks"] = analysis.spectral_peaks(spec).tolist()
    elif kind == "lyapunov":
        res = _lyapunov(cfg)
        ctx.table("lyapunov", ("lambda", "omega", "x0", "p0", "l1", "l2", "l3"),
                  [(cfg.params.lam, cfg.params.omega, cfg.initial.x, cfg.initial.p, *res.exponents)])
        ctx.sidecar["lyapunov_short_horizon"] = res.short_horizon
    elif kind == "folded":
        xf, p = analysis.fold_phase_space(traj)
        ctx.table("folded", ("x_folded", "p"), zip(xf.tolist(), p.tolist()))
        fo = cfg.section("folded")
        occ = analysis.folded_occupancy(traj, fo["bins"], tuple(fo["p_range"]))
        ctx.sidecar["folded_occupancy"] = occ.fraction
    elif kind == "sites":
        st = cfg.section("sites")
        visits = analysis.site_sequence(traj, st["band"], st["transits"])
        ctx.table("sites", ("site", "entry_time", "residence_time"), visits)
    elif kind == "regime":
        rep = analysis.classify_regime(cfg.params, cfg.initial, traj, _lyapunov(cfg), _thresholds(cfg))
        ctx.document("regime", rep.to_dict())
    elif kind == "chart":
        _chart(ctx)
    elif kind == "approx-compare":
        _approx(ctx, cfg.section("approx")["kind"])
    elif kind == "ensemble":
        en = cfg.section("ensemble")
        ens = approx.pendulum_ensemble(cfg.params.lam, en["mean_x0"], en["variance"], en["n"], cfg.seed,
                                       samples=en["samples"])
        rows = []
        for i, orb in enumerate(ens.orbits):
            rows.extend((i % en["n"], orb.branch, orb.center, t, x, p)
                        for t, x, p in zip(orb.t.tolist(), orb.x.tolist(), orb.p.tolist()))
        ctx.table("ensemble", ("draw", "branch", "center", "t", "x", "p"), rows)
        ctx.sidecar["ensemble"] = ens.metadata()


def _chart(ctx: Context):
    ch = ctx.cfg.section("chart")
    res = tuple(ch["resolution"]) if isinstance(ch["resolution"], list) else ch["resolution"]
    try:
        chart = stability.stability_chart(ch["lambda_range"], ch["omega_range"], ch["eps0"], res, ctx.jobs)
    except stability.StabilityDomainError as exc:
        raise ConfigError(f"chart: {exc}") from None
    rows = []
    for i, lam in enumerate(chart.lambda_axis.tolist()):
        for j, w in enumerate(chart.omega_axis.tolist()):
            rows.append((lam, w, float(chart.trace[i, j]), bool(chart.stable[i, j]), float(chart.mu_imag[i, j])))
    ctx.table("chart", ("lambda", "omega", "trace", "stable", "mu_imag"), rows)
    ctx.sidecar["chart"] = {"eps0": chart.eps0, "resolution": list(chart.shape),
                            "lambda_range": ch["lambda_range"], "omega_range": ch["omega_range"],
                            "stable_fraction": chart.stable_fraction()}


def _approx(ctx: Context, kind: str):
    ap = ctx.cfg.section("approx")
    try:
        rep = approx.compare(kind, ctx.cfg.params, ctx.cfg.initial, ap["window"], ap["spacing"])
    except approx.ApproxDomainError as exc:
        raise ConfigError(f"approx: {exc}") from None
    except IntegrationError as exc:
        raise NumericalAbort(str(exc)) from None
    ctx.document("comparison", rep.to_dict())


# ---------------------------------------------------------------------------
# sweeps


def _cell_inputs(cfg: RunConfig, assignment: dict):
    vals = {"lambda": cfg.params.lam, "omega": cfg.params.omega, "x0": cfg.initial.x, "p0": cfg.initial.p}
    vals.update(assignment)
    return vals


def _grid(cfg: RunConfig) -> list[dict]:
    axes = cfg.sweep_axes
    if not axes:
        return [{}]
    grids = [[(a.field, float(v)) for v in a.values()] for a in axes]
    if len(grids) == 1:
        return [dict([g]) for g in grids[0]]
    return [dict([g0, g1]) for g0 in grids[0] for g1 in grids[1]]


def _lyapunov_cell(cfg: RunConfig, assignment: dict):
    v = _cell_inputs(cfg, assignment)
    try:
        params = LatticeParams(v["lambda"], v["omega"])
        res = _lyapunov(cfg, params, PhaseState(v["x0"], v["p0"], cfg.initial.t))
        exps = res.exponents
        reason = None if all(math.isfinite(e) for e in exps) else "nonfinite"
    except (ValueError, ArithmeticError) as exc:
        exps, reason = (math.nan,) * 3, type(exc).__name__
    if reason:
        exps = (math.nan,) * 3
    return (v["lambda"], v["omega"], v["x0"], v["p0"], *exps), reason


def _regime_cell(cfg: RunConfig, assignment: dict):
    v = _cell_inputs(cfg, assignment)
    try:
        params = LatticeParams(v["lambda"], v["omega"])
        initial = PhaseState(v["x0"], v["p0"], cfg.initial.t)
        traj = integrate(params, initial, cfg.horizon, cfg.integrator)
        ly = _lyapunov(cfg, params, initial)
        rep = analysis.classify_regime(params, initial, traj, ly, _thresholds(cfg))
        row = (v["lambda"], v["omega"], v["x0"], v["p0"], *ly.exponents,
               rep.diagnostics["mean_momentum"], rep.label.value, rep.inconclusive)
        return row, None
    except IntegrationError as exc:
        reason = exc.reason
    except (ValueError, ArithmeticError) as exc:
        reason = type(exc).__name__
    nan = math.nan
    return (v["lambda"], v["omega"], v["x0"], v["p0"], nan, nan, nan, nan, "", False), reason


def _run_cells(func, cfg, cells, jobs):
    if jobs > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(lambda c: func(cfg, c), cells))
    return [func(cfg, c) for c in cells]


def _sweep_table(ctx: Context, name, columns, func) -> int:
    cells = _grid(ctx.cfg)
    results = _run_cells(func, ctx.cfg, cells, ctx.jobs)
    ctx.table(name, columns, [r for r, _ in results])
    failures = [{"row": i, "reason": why} for i, (_, why) in enumerate(results) if why]
    ctx.sidecar["cells"] = len(cells)
    ctx.sidecar["failures"] = failures
    return EXIT_PARTIAL if failures else EXIT_OK


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(ctx: Context) -> int:
    traj = _simulate(ctx.cfg, ctx.sidecar)
    _emit(ctx, "trajectory", traj)
    for kind in ctx.cfg.outputs:
        if kind != "trajectory":
            _emit(ctx, kind, traj)
    return EXIT_OK


def cmd_lyapunov(ctx: Context) -> int:
    return _sweep_table(ctx, "lyapunov", ("lambda", "omega", "x0", "p0", "l1", "l2", "l3"), _lyapunov_cell)


def cmd_stability(ctx: Context) -> int:
    _chart(ctx)
    return EXIT_OK


def cmd_spectrum(ctx: Context) -> int:
    _emit(ctx, "spectrum", _simulate(ctx.cfg, ctx.sidecar))
    return EXIT_OK


def cmd_classify(ctx: Context) -> int:
    _emit(ctx, "regime", _simulate(ctx.cfg, ctx.sidecar))
    return EXIT_OK


def cmd_approx_compare(ctx: Context, kind: str | None = None) -> int:
    _approx(ctx, kind or ctx.cfg.section("approx")["kind"])
    return EXIT_OK


def cmd_sweep(ctx: Context) -> int:
    cols = ("lambda", "omega", "x0", "p0", "l1", "l2", "l3", "mean_momentum", "regime", "inconclusive")
    return _sweep_table(ctx, "sweep", cols, _regime_cell)


COMMANDS = {
    "simulate": cmd_simulate,
    "lyapunov": cmd_lyapunov,
    "stability": cmd_stability,
    "spectrum": cmd_spectrum,
    "classify": cmd_classify,
    "approx-compare": cmd_approx_compare,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="latticewalk", description="Cold-atom walking in a modulated optical lattice.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*COMMANDS, "print-config"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config merged over the defaults")
        sp.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides config)")
        if name == "print-config":
            continue
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--jobs", type=int, help="parallel workers for charts and sweeps")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        if name == "approx-compare":
            sp.add_argument("--kind", choices=[k.value for k in approx.ApproxKind])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            raw = copy.deepcopy(cfg.raw)
            raw["seed"] = args.seed
            cfg = _validate(raw)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "print-config":
        sys.stdout.write(dump_config(cfg))
        return EXIT_OK

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = args.jobs if args.jobs is not None else int(cfg.raw["sweep"]["jobs"])
    if jobs < 1:
        print("config error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    sidecar = {"command": args.command, "version": __version__, "config": cfg.raw,
               "rng": sampling.rng_metadata(cfg.seed), "status": "ok"}
    ctx = Context(cfg, out, args.format, jobs, sidecar)
    func = COMMANDS[args.command]
    try:
        code = func(ctx, args.kind) if args.command == "approx-compare" else func(ctx)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as exc:
        sidecar["status"] = "aborted"
        _write_json(out / "run.json", sidecar)
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if code == EXIT_PARTIAL:
        sidecar["status"] = "partial"
    _write_json(out / "run.json", sidecar)
    return code


if __name__ == "__main__":
    sys.exit(main())
