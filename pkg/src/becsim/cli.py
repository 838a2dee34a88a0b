"""Batch front-end: ``becsim run|compare|sweep|verify``.

Exit codes: 0 all checks pass (warnings allowed), 1 a check failed,
2 configuration error, 3 solver abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import tomli

from . import __version__
from . import diagnostics as dg
from . import equilibrium, model, verify
from .grid import GridError, build_grid, overlay_l1
from .initdata import FAMILIES, InitDataError, InitialSpec, load_table, prepare
from .solver import SolverConfig, SolverError, run, run_pair

log = logging.getLogger("becsim")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3
DEFAULT_OUT_DIR = "becsim_out"
SECTIONS = ("grid", "initial", "initial_b", "solver", "checks", "sweep")
SWEEP_AXES = ("epsilon", "kappa", "h", "M")


class ConfigError(ValueError):
    def __init__(self, message: str, path=None, line: int | None = None):
        where = f"{path}:{line}: " if line else (f"{path}: " if path else "")
        super().__init__(where + message)
        self.line = line


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class GridSection:
    epsilon: float = 1e-3
    M: int = 400
    grading: float = 1.0


@dataclass(frozen=True)
class ChecksSection:
    tol_scale: float = 1.0
    energy_tol: float = 1e-3
    balance_rtol: float = 1e-10
    onset_threshold: float = 1e-4
    fit_floor: float = equilibrium.DEFAULT_FLOOR
    p: float = 0.0


@dataclass(frozen=True)
class RunConfig:
    """Parsed configuration; every field defaults so a three-line file is enough."""

    grid: GridSection = GridSection()
    initial: InitialSpec = InitialSpec("scaled_equilibrium", {"a": 1.0, "mu": 0.5})
    initial_b: InitialSpec | None = None
    solver: SolverConfig = SolverConfig()
    checks: ChecksSection = ChecksSection()
    sweep: dict = field(default_factory=dict)

    def echo(self) -> dict:
        spec = lambda s: None if s is None else {"family": s.family, "params": _plain(s.params),
                                                 "kappa": s.kappa, "p": s.p}
        return {
            "grid": asdict(self.grid),
            "initial": spec(self.initial),
            "initial_b": spec(self.initial_b),
            "solver": asdict(self.solver),
            "checks": asdict(self.checks),
            "sweep": self.sweep,
        }


def _plain(params: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in params.items()}


def _key_line(text: str, section: str, key: str | None = None) -> int | None:
    """Line number of ``key`` inside ``[section]`` (or of the header itself)."""
    current = None
    for k, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("["):
            current = line.strip("[] ")
            if key is None and current == section:
                return k
            continue
        if current == section and key is not None and line.split("=", 1)[0].strip() == key:
            return k
    return None


def _expected(default):
    """Accepted TOML value types, judged from a field's default."""
    if isinstance(default, bool):
        return (bool,)
    if isinstance(default, int):
        return (int,)
    if isinstance(default, str):
        return (str,)
    return (int, float)


def _section(data, text, path, name, cls):
    raw = data.get(name, {})
    defaults = {f.name: f.default for f in fields(cls)}
    for key, val in raw.items():
        line = _key_line(text, name, key)
        if key not in defaults:
            raise ConfigError(f"unknown key {key!r} in [{name}]; allowed: {sorted(defaults)}", path, line)
        ok = _expected(defaults[key])
        if isinstance(val, bool) and bool not in ok or not isinstance(val, ok):
            raise ConfigError(f"[{name}] {key} = {val!r}: expected {' or '.join(t.__name__ for t in ok)}",
                              path, line)
    try:
        return cls(**raw)
    except (TypeError, ValueError, model.ModelError) as exc:
        raise ConfigError(f"[{name}]: {exc}", path, _key_line(text, name)) from exc


def _initial(data, text, path, name, base: Path):
    raw = dict(data.get(name, {}))
    family = raw.pop("family", "scaled_equilibrium" if name == "initial" else None)
    if family is None:
        return None
    kappa = raw.pop("kappa", None)
    p = raw.pop("p", 0.0)
    line = _key_line(text, name, "family") or _key_line(text, name)
    try:
        if family == "table":
            if "file" not in raw:
                raise ConfigError(f"[{name}]: family 'table' needs file = \"...\"", path, line)
            return load_table(base / raw["file"], kappa=kappa, p=p)
        if family not in FAMILIES:
            raise ConfigError(f"[{name}]: unknown family {family!r}; choose from {FAMILIES}", path, line)
        if family == "scaled_equilibrium":
            raw.setdefault("a", 1.0)
            raw.setdefault("mu", 0.5)
        return InitialSpec(family, raw, kappa=kappa, p=p)
    except (InitDataError, TypeError) as exc:
        raise ConfigError(f"[{name}]: {exc}", path, line) from exc


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path) from exc
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        # tomli reports "(at line L, column C)"
        line = getattr(exc, "lineno", None)
        if line is None and "line " in str(exc):
            line = int(str(exc).rsplit("line ", 1)[1].split(",")[0].rstrip(")"))
        raise ConfigError(f"TOML syntax: {exc}", path, line) from exc
    for sec, val in data.items():
        if sec not in SECTIONS or not isinstance(val, dict):
            raise ConfigError(f"unknown section [{sec}]; allowed: {list(SECTIONS)}", path,
                              _key_line(text, sec) or _key_line(text, sec, sec))
    grid = _section(data, text, path, "grid", GridSection)
    try:
        build_grid(grid.epsilon, grid.M, grid.grading)
    except GridError as exc:
        raise ConfigError(f"[grid]: {exc}", path, _key_line(text, "grid")) from exc
    solver = _section(data, text, path, "solver", SolverConfig)
    sweep = data.get("sweep", {})
    for key, vals in sweep.items():
        if key not in SWEEP_AXES:
            raise ConfigError(f"unknown sweep axis {key!r}; allowed: {list(SWEEP_AXES)}", path,
                              _key_line(text, "sweep", key))
        if not isinstance(vals, list):
            raise ConfigError(f"sweep axis {key!r} must be a list", path, _key_line(text, "sweep", key))
    return RunConfig(
        grid=grid,
        initial=_initial(data, text, path, "initial", path.parent),
        initial_b=_initial(data, text, path, "initial_b", path.parent),
        solver=solver,
        checks=_section(data, text, path, "checks", ChecksSection),
        sweep=sweep,
    )


# ---------------------------------------------------------------------------
# output


def write_trajectory(path: Path, traj) -> None:
    rows = ([t, x, v] for t, n in zip(traj.times, traj.states) for x, v in zip(traj.grid.centers, n))
    verify.write_rows(path, ["t", "x", "n"], rows)


def write_summary(path: Path, traj) -> None:
    verify.write_rows(path, dg.FIELDS, ([getattr(r, f) for f in dg.FIELDS] for r in traj.reports))


def write_manifest(path: Path, cfg: RunConfig | None, files, checks, started: float, extra=None) -> str:
    status = dg.overall(checks)
    manifest = {
        "software": {"name": "becsim", "version": __version__},
        "config": None if cfg is None else cfg.echo(),
        "wall_clock_s": time.perf_counter() - started,
        "files": [str(f) for f in files] + [str(path)],
        "checks": {c.name: {"status": c.status, "value": c.value, "limit": c.limit} for c in checks},
        "status": status,
    }
    if extra:
        manifest.update(extra)
    path.write_text(json.dumps(manifest, indent=2, default=_json_default) + "\n")
    return status


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)


def _finite(v):
    return v if v is None or np.isfinite(v) else None


# ---------------------------------------------------------------------------
# commands


def _trajectory_extras(traj, cfg: RunConfig) -> dict:
    extra = {"steps": traj.steps, "dt_largest": traj.dt_largest}
    N0 = float(traj.numbers[0])
    onset = dg.onset_detect(traj, cfg.checks.onset_threshold, after=0.0)
    extra["onset_time"] = onset
    if N0 > model.MAX_EQUILIBRIUM_NUMBER:
        extra["onset_time_bound"] = model.onset_time_bound(N0)
    N_T = float(traj.numbers[-1])
    try:
        fit = equilibrium.fit(traj.final, N_T, traj.grid, cfg.checks.fit_floor)
        extra["equilibrium_fit"] = {**asdict(fit), "mu": fit.mu, "discrepancy": fit.discrepancy}
    except (equilibrium.EquilibriumError, model.ModelError) as exc:
        extra["equilibrium_fit"] = {"error": str(exc)}
    return extra


def cmd_run(args) -> int:
    started = time.perf_counter()
    cfg = load_config(args.config)
    out = _out_dir(args)
    stem = Path(args.config).stem
    grid = build_grid(cfg.grid.epsilon, cfg.grid.M, cfg.grid.grading)
    try:
        n0 = prepare(cfg.initial, grid, cfg.solver)
    except (InitDataError, model.ModelError) as exc:
        raise ConfigError(f"[initial]: {exc}", args.config,
                          _key_line(Path(args.config).read_text(), "initial")) from exc
    traj = run(n0, grid, cfg.solver)
    files = [out / f"{stem}_trajectory.csv", out / f"{stem}_summary.csv"]
    write_trajectory(files[0], traj)
    write_summary(files[1], traj)
    tol_scale = cfg.checks.tol_scale * args.tol_scale
    checks = dg.bound_checks(traj, tol_scale, cfg.checks.energy_tol, cfg.checks.balance_rtol)
    status = write_manifest(out / f"{stem}_manifest.json", cfg, files, checks, started, _trajectory_extras(traj, cfg))
    print(f"run {stem}: {status} ({traj.steps} steps, ledger {traj.ledger[-1]:.6g}) -> {out}")
    return EXIT_OK if status != "fail" else EXIT_CHECK


def cmd_compare(args) -> int:
    started = time.perf_counter()
    cfg = load_config(args.config)
    if cfg.initial_b is None:
        raise ConfigError("compare needs an [initial_b] section with a family", args.config)
    out = _out_dir(args)
    stem = Path(args.config).stem
    grid = build_grid(cfg.grid.epsilon, cfg.grid.M, cfg.grid.grading)
    try:
        a0 = prepare(cfg.initial, grid, cfg.solver)
        b0 = prepare(cfg.initial_b, grid, cfg.solver)
    except (InitDataError, model.ModelError) as exc:
        raise ConfigError(f"initial data: {exc}", args.config) from exc
    ta, tb = run_pair(a0, b0, grid, cfg.solver)
    p = cfg.checks.p
    rep = dg.check_contraction(ta, tb, p=p)
    tol_scale = cfg.checks.tol_scale * args.tol_scale
    tol = max(dg.tol_disc(grid, t.dt_largest, tol_scale) for t in (ta, tb))
    files = [out / f"{stem}_contraction.csv", out / f"{stem}_a_summary.csv", out / f"{stem}_b_summary.csv"]
    verify.write_rows(files[0], ["t", "d", "d_plus", "gronwall_envelope"],
                      zip(rep.times, rep.distance, rep.positive, rep.envelope))
    write_summary(files[1], ta)
    write_summary(files[2], tb)
    checks = [dg.CheckResult(f"a_{c.name}", c.status, c.value, c.limit)
              for c in dg.bound_checks(ta, tol_scale, cfg.checks.energy_tol, cfg.checks.balance_rtol)]
    checks += [dg.CheckResult(f"b_{c.name}", c.status, c.value, c.limit)
               for c in dg.bound_checks(tb, tol_scale, cfg.checks.energy_tol, cfg.checks.balance_rtol)]
    worst_env = max((float(dp - env) for dp, env in zip(rep.positive, rep.envelope)), default=0.0)
    checks.append(dg.CheckResult("gronwall", "pass" if worst_env <= tol else "fail", worst_env, tol))
    extra = {"crossing": rep.crossing, "ratio": _finite(rep.ratio), "flags": rep.flags}
    status = write_manifest(out / f"{stem}_manifest.json", cfg, files, checks, started, extra)
    print(f"compare {stem}: {status} (d(T)/d(0) = {rep.ratio:.6g}) -> {out}")
    return EXIT_OK if status != "fail" else EXIT_CHECK


def _sweep_job(job):
    """One sweep member; module-level so worker processes can import it."""
    axis, value, cfg = job
    grid_s, solver = cfg.grid, cfg.solver
    spec = cfg.initial
    if axis == "epsilon":
        grid_s = replace(grid_s, epsilon=float(value))
    elif axis == "M":
        grid_s = replace(grid_s, M=int(value))
    elif axis == "kappa":
        spec = replace(spec, kappa=float(value))
    elif axis == "h":
        solver = replace(solver, mode="cutoff", h=float(value))
    grid = build_grid(grid_s.epsilon, grid_s.M, grid_s.grading)
    traj = run(prepare(spec, grid, solver), grid, solver)
    return grid, traj.final, float(traj.ledger[-1])


def cmd_sweep(args) -> int:
    started = time.perf_counter()
    cfg = load_config(args.config)
    axes = {k: v for k, v in cfg.sweep.items() if len(v) >= 2}
    if not axes:
        raise ConfigError("sweep needs an axis with at least two values in [sweep]", args.config,
                          _key_line(Path(args.config).read_text(), "sweep"))
    out = _out_dir(args)
    stem = Path(args.config).stem
    jobs = [(axis, v, cfg) for axis, vals in axes.items() for v in vals]
    if "h" in axes:
        jobs.append(("plain", None, cfg))
    try:
        if args.jobs and args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                results = list(pool.map(_sweep_job, jobs))
        else:
            results = [_sweep_job(j) for j in jobs]
    except (InitDataError, GridError, model.ModelError) as exc:
        raise ConfigError(f"sweep member rejected: {exc}", args.config) from exc
    by_job = {(a, v): r for (a, v, _), r in zip(jobs, results)}
    rows = []
    for axis, vals in axes.items():
        for k, v in enumerate(vals):
            g, n, led = by_job[(axis, v)]
            nxt = to_plain = ""
            if k + 1 < len(vals):
                g1, n1, _ = by_job[(axis, vals[k + 1])]
                nxt = overlay_l1(g, n, g1, n1, cfg.checks.p)
            if axis == "h":
                gp, npl, _ = by_job[("plain", None)]
                to_plain = overlay_l1(g, n, gp, npl, cfg.checks.p)
            rows.append([axis, float(v), led, nxt, to_plain])
    path = out / f"{stem}_sweep.csv"
    verify.write_rows(path, ["axis", "value", "ledger", "l1_to_next", "l1_to_plain"], rows)
    write_manifest(out / f"{stem}_manifest.json", cfg, [path], [], started)
    print(f"sweep {stem}: {len(rows)} rows -> {path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    started = time.perf_counter()
    out = _out_dir(args)
    level = "full" if args.full else "quick"
    results = verify.run_suite(level, args.tol_scale, out)
    for r in results:
        print(r.line())
    checks = [dg.CheckResult(f"c{r.id:02d}_{r.name.replace(' ', '_')}", r.status, r.value, r.limit)
              for r in results]
    files = sorted(p for p in out.rglob("*.csv"))
    status = write_manifest(out / "verify_manifest.json", None, files, checks, started, {"level": level})
    print(f"verify --{level}: {status}")
    return EXIT_OK if status != "fail" else EXIT_CHECK


# ---------------------------------------------------------------------------


def _out_dir(args) -> Path:
    out = Path(args.out_dir or os.environ.get("BECSIM_OUT_DIR") or DEFAULT_OUT_DIR)
    out.mkdir(parents=True, exist_ok=True)
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="becsim", description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default=None, help="output directory (default $BECSIM_OUT_DIR or ./becsim_out)")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    ap.add_argument("--tol-scale", type=float, default=1.0, help="multiplier on the discretisation tolerance")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn, helptext in (("run", cmd_run, "single run"), ("compare", cmd_compare, "two-run comparison"),
                               ("sweep", cmd_sweep, "parameter sweep")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config", help="TOML configuration file")
        p.set_defaults(func=fn)
    p = sub.add_parser("verify", help="acceptance suite")
    lvl = p.add_mutually_exclusive_group()
    lvl.add_argument("--quick", action="store_true", help="default level")
    lvl.add_argument("--full", action="store_true", help="adds three-level refinement studies")
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if not args.tol_scale > 0:
        print("error: --tol-scale must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver abort: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
