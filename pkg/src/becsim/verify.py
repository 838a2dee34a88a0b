"""The acceptance suite: fourteen property checks anchored to proved bounds.

Runs are shared between criteria through :class:`Suite`, which builds each
trajectory on first use.  ``level="full"`` adds a third refinement level to
the refinement-based criteria.
"""

from __future__ import annotations

import csv
import filecmp
import math
import tempfile
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import integrate

from . import diagnostics as dg
from . import equilibrium, model
from .grid import build_grid, overlay_l1
from .initdata import InitialSpec, flux_mismatch, integrate_strip, prepare
from .solver import SolverConfig, SolverError, run, run_pair

LEVELS = ("quick", "full")


@dataclass
class CriterionResult:
    id: int
    name: str
    passed: bool
    value: float
    limit: float
    detail: str = ""

    @property
    def status(self) -> str:
        return "pass" if self.passed else "fail"

    def line(self) -> str:
        return f"[{self.status.upper()}] {self.id:2d} {self.name}: value={self.value:.6g} limit={self.limit:.6g} {self.detail}"


@dataclass
class Suite:
    level: str = "quick"
    tol_scale: float = 1.0

    def __post_init__(self):
        if self.level not in LEVELS:
            raise ValueError(f"level must be one of {LEVELS}")

    # -- shared runs -----------------------------------------------------------

    @cached_property
    def eq_grid(self):
        return build_grid(1e-3, 400)

    @cached_property
    def equilibrium_runs(self):
        """n_mu (mu = 1/2) to T = 10 at M = 400, 800 (and 1600 on full)."""
        levels = 3 if self.level == "full" else 2
        out = []
        for k in range(levels):
            g = build_grid(1e-3, 400 * 2**k)
            cfg = SolverConfig(t_end=10.0, dt_max=1e-2 / 2**k, output_every=0.1)
            out.append(run(model.equilibrium_density(0.5, g.centers), g, cfg))
        return out

    @cached_property
    def condensing(self):
        g = build_grid(1e-3, 400)
        return run(prepare(InitialSpec("constant", {"c": 2.0}), g), g, SolverConfig(t_end=100.0, output_every=0.1))

    @cached_property
    def condensing_ladder(self):
        """Constant 2 to T = 5 on coarser and finer meshes, for violation trends."""
        Ms = (200, 400, 800) if self.level == "full" else (200, 400)
        out = []
        for k, M in enumerate(Ms):
            g = build_grid(1e-3, M)
            cfg = SolverConfig(t_end=5.0, dt_max=1e-2 / 2**k, output_every=0.1)
            out.append(run(prepare(InitialSpec("constant", {"c": 2.0}), g), g, cfg))
        return out

    @cached_property
    def absence(self):
        # the outflow n(eps)**2 leaks ~eps**2 per unit time; eps = 1e-4 keeps it below 1e-8
        g = build_grid(1e-4, 400, grading=1.01)
        spec = InitialSpec("linear_multiple", {"a": 0.5})
        return run(prepare(spec, g), g, SolverConfig(t_end=50.0, output_every=0.5))

    @cached_property
    def crossing_pair(self):
        g = self.eq_grid
        a = prepare(InitialSpec("constant", {"c": 2.0}), g)
        b = prepare(InitialSpec("linear_multiple", {"a": 3.0}), g)
        return run_pair(a, b, g, SolverConfig(t_end=1.0, output_every=0.05))

    @cached_property
    def ordered_pair(self):
        g = self.eq_grid
        a = prepare(InitialSpec("linear_multiple", {"a": 0.5}), g)
        b = prepare(InitialSpec("linear_multiple", {"a": 1.0}), g)
        return run_pair(a, b, g, SolverConfig(t_end=5.0, output_every=0.1))

    @cached_property
    def cutoff_runs(self):
        """Plain run plus cutoff runs for h in (0.2, 0.1, 0.05) on 1.2 n_{1/2}."""
        g = self.eq_grid
        spec = InitialSpec("scaled_equilibrium", {"a": 1.2, "mu": 0.5})
        plain = run(prepare(spec, g), g, SolverConfig(t_end=1.0, output_every=0.05))
        cut = {}
        for h in (0.2, 0.1, 0.05):
            cfg = SolverConfig(t_end=1.0, output_every=0.05, mode="cutoff", h=h)
            cut[h] = run(prepare(spec, g, cfg), g, cfg)
        return spec, plain, cut

    def all_runs(self) -> dict:
        _, plain, cut = self.cutoff_runs
        runs = {f"equilibrium_M{t.grid.M}": t for t in self.equilibrium_runs}
        runs["condensing"] = self.condensing
        runs.update({f"condensing_M{t.grid.M}": t for t in self.condensing_ladder})
        runs["absence"] = self.absence
        runs["crossing_a"], runs["crossing_b"] = self.crossing_pair
        runs["ordered_a"], runs["ordered_b"] = self.ordered_pair
        runs["cutoff_plain"] = plain
        runs.update({f"cutoff_h{h:g}": t for h, t in cut.items()})
        return runs

    def plain_runs(self) -> dict:
        """Runs of the unmodified equation, the scope of the barrier, slope and energy theorems."""
        return {k: tr for k, tr in self.all_runs().items() if tr.config.mode == "plain"}

    def tol(self, traj) -> float:
        return dg.tol_disc(traj.grid, traj.dt_largest, self.tol_scale)

    # -- criteria ------------------------------------------------------------

    def c01_equilibrium(self):
        runs = self.equilibrium_runs
        drifts = []
        for tr in runs:
            ref = model.equilibrium_density(0.5, tr.grid.centers)
            drifts.append(max(dg.weighted_l1(n, ref, 0.0, tr.grid) for n in tr.states))
        ratios = [drifts[k] / drifts[k + 1] if drifts[k + 1] > 0 else math.inf for k in range(len(drifts) - 1)]
        ok = drifts[0] <= 5e-3 and all(r >= 1.5 for r in ratios)
        return CriterionResult(1, "equilibrium preservation", ok, drifts[0], 5e-3,
                               f"drifts={_fmt(drifts)} ratios={_fmt(ratios)} (need >= 1.5)")

    def c02_supersolution(self):
        worst, where = _worst(self.plain_runs(), lambda tr: max(r.sup_violation for r in tr.reports) - self.tol(tr))
        ladder = [max(r.sup_violation for r in tr.reports) for tr in self.condensing_ladder]
        shrink = all(b <= a + 1e-14 for a, b in zip(ladder, ladder[1:]))
        return CriterionResult(2, "universal supersolution", worst <= 0 and shrink, worst, 0.0,
                               f"max(violation - tol_disc) at {where}; refinement violations={_fmt(ladder)}")

    def c03_oleinik(self):
        worst, where = _worst(self.plain_runs(), lambda tr: max(r.oleinik_violation for r in tr.reports) - self.tol(tr))
        cut = max(max(r.oleinik_violation for r in tr.reports) for tr in self.cutoff_runs[2].values())
        return CriterionResult(3, "Oleinik slope bound", worst <= 0, worst, 0.0,
                               f"max(violation - tol_disc) at {where}; cutoff-mode runs (not covered) peak at {cut:.3g}")

    def c04_energy(self):
        runs = self.plain_runs()
        slack = {k: dg.worst_energy_slack(tr) for k, tr in runs.items()}
        where = min(slack, key=slack.get)
        return CriterionResult(4, "energy inequality", slack[where] >= -1e-3, slack[where], -1e-3,
                               f"worst slack at {where}")

    def c05_balance(self):
        worst, where = _worst(self.all_runs(),
                              lambda tr: float(dg.photon_balance(tr).max()) / (1.0 + tr.numbers[0]))
        return CriterionResult(5, "photon balance", worst <= 1e-10, worst, 1e-10,
                               f"max |N + ledger - N0|/(1 + N0) at {where}")

    def c06_onset(self):
        tr = self.condensing
        bound = model.onset_time_bound(2.0)
        k = int(np.searchsorted(tr.times, bound, side="right")) - 1
        led = float(tr.ledger[k])
        pers = dg.check_persistence(tr, tol=self.tol(tr))
        deficit = float(pers.deficits.max())
        ok = led > 1e-6 and pers.ok
        return CriterionResult(6, "condensation onset", ok, led, 1e-6,
                               f"ledger at t={tr.times[k]:.4g} <= {bound:.4g}; onset t*={pers.t_star:.4g}, "
                               f"max floor deficit={deficit:.3g} vs tol_disc={self.tol(tr):.3g}")

    def c07_absence(self):
        tr = self.absence
        led = float(tr.ledger[-1])
        dN = abs(float(tr.numbers[-1]) - 0.25)
        return CriterionResult(7, "absence of condensation", led <= 1e-8 and dN <= 1e-3, led, 1e-8,
                               f"|N(T) - 0.25|={dN:.3g} (limit 1e-3)")

    def c08_mass_limit(self):
        tr = self.absence
        mu_star = model.solve_mu(0.25)
        fit = equilibrium.fit(tr.final, float(tr.numbers[-1]), tr.grid)
        dmu = abs(fit.mu - mu_star)
        dist = dg.weighted_l1(tr.final, model.equilibrium_density(mu_star, tr.grid.centers), 0.0, tr.grid)
        return CriterionResult(8, "conserved-mass limit", dmu <= 2e-2 and dist <= 1e-2, dmu, 2e-2,
                               f"mu*={mu_star:.6g} fit={fit.mu:.6g} ({fit.selected}, discrepancy "
                               f"{fit.discrepancy:.3g}); L1 to n_mu*={dist:.3g} (limit 1e-2)")

    def c09_dominating_limit(self):
        tr = self.condensing
        T = float(tr.times[-1])
        dist = dg.weighted_l1(tr.final, tr.grid.centers, 0.0, tr.grid)
        lim = equilibrium.dominating_envelope(T, tr.grid) + self.tol(tr)
        fit = equilibrium.fit(tr.final, float(tr.numbers[-1]), tr.grid)
        return CriterionResult(9, "dominating-data limit", dist <= lim and fit.mu <= 2e-2, dist, lim,
                               f"fitted mu={fit.mu:.3g} ({fit.selected}; limit 2e-2)")

    def c10_contraction(self):
        a, b = self.crossing_pair
        rep = dg.check_contraction(a, b, p=0.0)
        ok = rep.ok and rep.distance[-1] < rep.distance[0] and rep.crossing
        return CriterionResult(10, "L1 contraction", ok, float(rep.ratio), 1.0,
                               f"d(T)/d(0); crossing={rep.crossing}; flags={len(rep.flags)}")

    def c11_comparison(self):
        a, b = self.ordered_pair
        tol = max(self.tol(a), self.tol(b))
        rep0 = dg.check_contraction(a, b, p=0.0)
        rep2 = dg.check_contraction(a, b, p=2.0)
        pos = float(rep0.positive.max())
        d2 = rep2.distance
        mono = bool(np.all(np.diff(d2) <= 1e-8 * max(d2[0], 1.0)))
        ok = pos <= tol and rep2.ok and mono
        return CriterionResult(11, "comparison principle", ok, pos, tol,
                               f"Gronwall flags={len(rep2.flags)}; weighted p=2 distance nonincreasing={mono}")

    def c12_cutoff(self):
        spec, plain, cut = self.cutoff_runs
        g = plain.grid
        hs = sorted(cut, reverse=True)
        dists = [overlay_l1(g, cut[h].final, g, plain.final) for h in hs]
        mism = []
        for h in hs:
            prof = model.CutoffProfile(h)
            nodes = g.centers[g.centers >= prof.strip_start]
            sol = integrate_strip(spec, prof, nodes)
            mism.append(flux_mismatch(spec, prof, sol, nodes))
        mono = all(b < a for a, b in zip(dists, dists[1:]))
        ok = mono and max(mism) <= 1e-8
        return CriterionResult(12, "cutoff-mode consistency", ok, max(mism), 1e-8,
                               f"h={_fmt(hs)} distances at T=1: {_fmt(dists)}")

    def c13_oracles(self):
        mus = np.logspace(-4, 3, 100)
        trip = max(abs(model.solve_mu(model.equilibrium_number(m)) - m) for m in mus)
        ref, _ = integrate.quad(lambda x: x * x / (x + 1.0), 0.0, 1.0, epsabs=1e-14, epsrel=1e-14)
        err = abs(model.equilibrium_number(1.0) - ref)
        return CriterionResult(13, "oracle round trips", trip <= 1e-10 and err <= 1e-12, trip, 1e-10,
                               f"N(1) vs quadrature error={err:.3g} (limit 1e-12)")

    CRITERIA = (
        c01_equilibrium, c02_supersolution, c03_oleinik, c04_energy, c05_balance, c06_onset,
        c07_absence, c08_mass_limit, c09_dominating_limit, c10_contraction, c11_comparison,
        c12_cutoff, c13_oracles,
    )

    def evaluate(self) -> list[CriterionResult]:
        out = []
        for k, fn in enumerate(self.CRITERIA, start=1):
            try:
                out.append(fn(self))
            except (SolverError, ValueError) as exc:
                out.append(CriterionResult(k, fn.__name__[4:], False, math.nan, math.nan, f"error: {exc}"))
        return out

    def write(self, results, out_dir: Path) -> list[Path]:
        """Scoreboard plus one summary CSV per suite run; returns the paths written."""
        out_dir = Path(out_dir)
        (out_dir / "runs").mkdir(parents=True, exist_ok=True)
        paths = [out_dir / "scoreboard.csv"]
        write_rows(paths[0], ["id", "name", "status", "value", "limit", "detail"],
                   [[r.id, r.name, r.status, r.value, r.limit, r.detail] for r in results])
        try:
            runs = self.all_runs()
        except (SolverError, ValueError):
            runs = {}
        for name, tr in runs.items():
            p = out_dir / "runs" / f"{name}_summary.csv"
            write_rows(p, dg.FIELDS, [[getattr(r, f) for f in dg.FIELDS] for r in tr.reports])
            paths.append(p)
        return paths


def determinism(level: str, tol_scale: float, reference: list[Path], ref_root: Path) -> CriterionResult:
    """Criterion 14: a fresh suite must reproduce every CSV byte for byte."""
    with tempfile.TemporaryDirectory() as tmp:
        again = Suite(level, tol_scale)
        paths = again.write(again.evaluate(), Path(tmp))
        rel_new = {p.relative_to(tmp) for p in paths}
        rel_ref = {p.relative_to(ref_root) for p in reference}
        same = rel_new == rel_ref
        differing = [str(r) for r in sorted(rel_ref & rel_new)
                     if not filecmp.cmp(ref_root / r, Path(tmp) / r, shallow=False)]
    ok = same and not differing
    return CriterionResult(14, "determinism", ok, float(len(differing)), 0.0,
                           f"{len(rel_ref)} CSV files compared; differing={differing[:3]}")


def run_suite(level: str = "quick", tol_scale: float = 1.0, out_dir: Path | None = None,
              check_determinism: bool = True) -> list[CriterionResult]:
    suite = Suite(level, tol_scale)
    results = suite.evaluate()
    if out_dir is None:
        return results
    paths = suite.write(results, out_dir)
    if check_determinism:
        results.append(determinism(level, tol_scale, paths, Path(out_dir)))
        # rewrite the scoreboard so it carries the final row too
        write_rows(Path(out_dir) / "scoreboard.csv", ["id", "name", "status", "value", "limit", "detail"],
                   [[r.id, r.name, r.status, r.value, r.limit, r.detail] for r in results])
    return results


def write_rows(path: Path, header, rows) -> None:
    """CSV with floats in repr form, so equal numbers give equal bytes."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _worst(runs: dict, measure):
    vals = {k: measure(tr) for k, tr in runs.items()}
    where = max(vals, key=vals.get)
    return vals[where], where


def _fmt(values) -> str:
    return "[" + ", ".join(f"{v:.3g}" for v in values) + "]"
