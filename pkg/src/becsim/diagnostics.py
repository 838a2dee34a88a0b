"""Checks of discrete trajectories against the continuum bounds.

Continuum inequalities are compared with a discretisation-aware slack
``tol_disc = C (dx + dt)``; conservation and ordering statements that the
scheme satisfies exactly are checked at rounding level instead.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import model
from .grid import Grid, quad

# C in tol_disc = C (dx + dt); pinned from the equilibrium-preservation run
TOL_DISC_C = 2.0
# relative entropy rise tolerated before the soft check warns; a steady
# state drifts towards its discrete counterpart and H moves by ~1e-7
ENTROPY_TOL = 1e-6


def tol_disc(grid: Grid, dt: float, scale: float = 1.0) -> float:
    return scale * TOL_DISC_C * (grid.max_width + dt)


@dataclass
class BoundReport:
    t: float
    N: float
    ledger: float
    sup_violation: float
    oleinik_violation: float
    energy_slack: float
    entropy: float
    n_eps: float
    clip_mass: float

    def as_row(self) -> dict:
        return asdict(self)


FIELDS = [f for f in BoundReport.__dataclass_fields__]


def check_bounds(n, t: float, envelopes: model.BoundEnvelopes, grid: Grid) -> dict:
    """Positive parts of the barrier and one-sided slope violations at time t."""
    n = grid.check(n)
    s = t + envelopes.tau1
    if s <= 0:
        raise ValueError("barrier needs t + tau1 > 0")
    sup = float(np.max(n - model.supersolution(grid.centers, t, envelopes.tau1)))
    slopes = np.diff(n) / grid.spacing
    floor = envelopes.oleinik_floor(t)
    ole = float(np.max(floor - slopes, initial=-math.inf)) if slopes.size else 0.0
    return {"sup_violation": max(sup, 0.0), "oleinik_violation": max(ole, 0.0)}


def make_report(n, t, envelopes, grid, ledger, clip_mass, energy_slack) -> BoundReport:
    b = check_bounds(n, t, envelopes, grid)
    return BoundReport(
        t=float(t),
        N=quad(n, 0, grid),
        ledger=float(ledger),
        sup_violation=b["sup_violation"],
        oleinik_violation=b["oleinik_violation"],
        energy_slack=math.nan if energy_slack is None else float(energy_slack),
        entropy=model.entropy(n, grid),
        n_eps=float(n[0]),
        clip_mass=float(clip_mass),
    )


def weighted_l1(a, b, p: float, grid: Grid) -> float:
    return quad(np.abs(grid.check(a) - grid.check(b)), p, grid)


def positive_part_l1(a, b, p: float, grid: Grid) -> float:
    return quad(np.maximum(grid.check(a) - grid.check(b), 0.0), p, grid)


# ---------------------------------------------------------------------------
# trajectory-level checks


@dataclass
class ContractionReport:
    times: np.ndarray
    distance: np.ndarray
    positive: np.ndarray
    envelope: np.ndarray
    flags: list = field(default_factory=list)
    crossing: bool = False
    ratio: float = math.nan

    @property
    def ok(self) -> bool:
        return not self.flags


def check_contraction(traj_a, traj_b, p: float = 0.0, rtol: float = 1e-8, atol: float = 1e-12) -> ContractionReport:
    """Weighted distance history of two runs against the exp(c_p t) envelope."""
    grid = traj_a.grid
    if traj_b.grid is not grid and not np.array_equal(traj_b.grid.centers, grid.centers):
        raise ValueError("trajectories live on different grids")
    if not np.array_equal(traj_a.times, traj_b.times):
        raise ValueError("trajectories have different output times")
    times = traj_a.times
    d = np.array([weighted_l1(a, b, p, grid) for a, b in zip(traj_a.states, traj_b.states)])
    dp = np.array([positive_part_l1(a, b, p, grid) for a, b in zip(traj_a.states, traj_b.states)])
    env = np.exp(model.gronwall_constant(p) * times) * dp[0]
    flags = []
    for k, t in enumerate(times):
        if dp[k] > env[k] * (1.0 + rtol) + atol:
            flags.append((float(t), "positive part above Gronwall envelope"))
        if p == 0 and k > 0 and d[k] > d[k - 1] + rtol * max(d[0], 1.0):
            flags.append((float(t), "L1 distance increased"))
    diff0 = traj_a.states[0] - traj_b.states[0]
    crossing = bool(np.any(diff0 > 0) and np.any(diff0 < 0))
    ratio = float(d[-1] / d[0]) if d[0] > 0 else math.nan
    return ContractionReport(times, d, dp, env, flags, crossing, ratio)


def check_energy(traj, s_index: int, t_index: int, grid: Grid | None = None) -> float:
    """Slack of the energy inequality between two output times.

    The dissipation integral is the solver's step sum when available and a
    trapezoid over output times otherwise.
    """
    grid = traj.grid if grid is None else grid
    if not (0 <= s_index < t_index < len(traj.times)):
        raise IndexError(f"need 0 <= s_index < t_index < {len(traj.times)}")
    cum = _dissipated(traj)
    dissipated = float(cum[t_index] - cum[s_index])
    ns, nt = traj.states[s_index], traj.states[t_index]
    rhs = quad(ns * ns, 0, grid) + 8.0 / 3.0 * (traj.times[t_index] - traj.times[s_index])
    return rhs - quad(nt * nt, 0, grid) - dissipated


def _dissipated(traj) -> np.ndarray:
    if getattr(traj, "dissipated", None) is not None:
        return traj.dissipated
    rates = traj.dissipation
    return np.concatenate([[0.0], np.cumsum(0.5 * (rates[1:] + rates[:-1]) * np.diff(traj.times))])


def worst_energy_slack(traj) -> float:
    """Minimum slack over all output pairs s < t."""
    k = len(traj.times)
    if k < 2:
        return math.inf
    n2 = np.array([quad(n * n, 0, traj.grid) for n in traj.states])
    cum = _dissipated(traj)
    # slack(s, t) = a(s) - a(t)
    a = n2 + cum - 8.0 / 3.0 * traj.times
    min_a = np.minimum.accumulate(a)
    return float(np.min(min_a[:-1] - a[1:]))


def onset_detect(traj, threshold: float, after: float = -math.inf):
    """First output time (strictly after ``after``) with boundary trace above threshold."""
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    for t, v in zip(traj.times, traj.n_eps):
        if t > after and v > threshold:
            return float(t)
    return None


@dataclass
class PersistenceReport:
    t_star: float
    n0_star: float
    floors: np.ndarray
    deficits: np.ndarray
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations


def check_persistence(traj, threshold: float = 1e-4, tol: float = 0.0) -> PersistenceReport:
    """Boundary trace after onset against the exponential persistence floor."""
    t_star = onset_detect(traj, threshold, after=0.0)
    if t_star is None:
        raise ValueError("no condensate onset in this trajectory")
    k0 = int(np.searchsorted(traj.times, t_star))
    n0 = float(traj.n_eps[k0])
    later = traj.times[k0:]
    floors = np.array([model.persistence_floor(t, t_star, n0) for t in later])
    deficits = floors - traj.n_eps[k0:]
    # the floor at t_star equals the trace up to rounding
    slack = tol + 1e-12 * n0
    bad = [(float(t), float(d)) for t, d in zip(later, deficits) if d > slack]
    return PersistenceReport(t_star, n0, floors, deficits, bad)


def entropy_monotone(traj, tol: float = ENTROPY_TOL) -> bool:
    """Soft check: entropy nonincreasing up to tol; warns instead of failing."""
    h = np.array([r.entropy for r in traj.reports])
    rises = np.diff(h) > tol * (1.0 + np.abs(h[:-1]))
    if np.any(rises):
        warnings.warn(
            f"entropy increased at {int(rises.sum())} output times", RuntimeWarning, stacklevel=2
        )
        return False
    return True


def photon_balance(traj) -> np.ndarray:
    """|N(t) + ledger(t) - N(0)| at every output time."""
    N = traj.numbers
    return np.abs(N + traj.ledger - N[0])


def total_variation(n, grid: Grid) -> float:
    return float(np.sum(np.abs(np.diff(grid.check(n)))))


# ---------------------------------------------------------------------------
# per-trajectory verdicts

STATUSES = ("pass", "warn", "fail")


@dataclass(frozen=True)
class CheckResult:
    name: str
    status: str
    value: float
    limit: float

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"status must be one of {STATUSES}")


def _verdict(ok: bool, soft: bool = False) -> str:
    return "pass" if ok else ("warn" if soft else "fail")


def bound_checks(traj, tol_scale: float = 1.0, energy_tol: float = 1e-3,
                 balance_rtol: float = 1e-10, entropy_tol: float = ENTROPY_TOL) -> list[CheckResult]:
    """Hard checks (barrier, slope, energy, balance) and soft ones (entropy, clipping)."""
    tol = tol_disc(traj.grid, traj.dt_largest, tol_scale)
    sup = max(r.sup_violation for r in traj.reports)
    ole = max(r.oleinik_violation for r in traj.reports)
    energy = worst_energy_slack(traj)
    bal = float(photon_balance(traj).max())
    bal_lim = balance_rtol * (1.0 + traj.numbers[0])
    h = np.array([r.entropy for r in traj.reports])
    rise = float(np.max(np.diff(h) / (1.0 + np.abs(h[:-1])), initial=0.0))
    return [
        CheckResult("supersolution", _verdict(sup <= tol), sup, tol),
        CheckResult("oleinik", _verdict(ole <= tol), ole, tol),
        CheckResult("energy", _verdict(energy >= -energy_tol), energy, -energy_tol),
        CheckResult("photon_balance", _verdict(bal <= bal_lim), bal, bal_lim),
        CheckResult("entropy", _verdict(rise <= entropy_tol, soft=True), rise, entropy_tol),
        CheckResult("clipping", _verdict(traj.clip_mass == 0.0, soft=True), traj.clip_mass, 0.0),
    ]


def overall(results) -> str:
    statuses = {r.status for r in results}
    return "fail" if "fail" in statuses else ("warn" if "warn" in statuses else "pass")
