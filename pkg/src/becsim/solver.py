"""IMEX finite-volume time stepping for the truncated problem on [epsilon, 1].

Per step the Rusanov interface values of the nonlinear flux are taken
explicitly and the linear diffusion x**2 dn/dx theta-implicitly, so each
step costs one tridiagonal solve.  Boundary fluxes are J = n_1**2 at the
left end (outflow, taken from the first cell) and J = 0 at x = 1.  Because
interface fluxes telescope, the photon number plus the outflow ledger is
conserved to rounding.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.linalg import lapack

from . import model
from .grid import Grid, overlay_l1, quad

log = logging.getLogger(__name__)

SPEED_GUARD = 1e-12


class SolverError(RuntimeError):
    """Non-finite state or failed linear solve; carries the last good state."""

    def __init__(self, message, t=None, last_state=None):
        super().__init__(message)
        self.t = t
        self.last_state = last_state


@dataclass(frozen=True)
class SolverConfig:
    t_end: float = 1.0
    cfl: float = 0.45
    dt_max: float = 1e-2
    mode: str = "plain"
    h: float | None = None
    theta: float = 1.0
    output_every: float = 0.1

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if not (0.0 < self.cfl <= 1.0):
            raise ValueError(f"cfl must lie in (0, 1], got {self.cfl}")
        if not self.dt_max > 0:
            raise ValueError(f"dt_max must be positive, got {self.dt_max}")
        if not (0.5 <= self.theta <= 1.0):
            raise ValueError(f"theta must lie in [0.5, 1], got {self.theta}")
        if not self.output_every > 0:
            raise ValueError(f"output_every must be positive, got {self.output_every}")
        if self.mode not in ("plain", "cutoff"):
            raise ValueError(f"mode must be 'plain' or 'cutoff', got {self.mode!r}")
        if self.mode == "cutoff":
            model.CutoffProfile(self.h if self.h is not None else -1.0)

    @property
    def profile(self) -> model.CutoffProfile | None:
        return model.CutoffProfile(self.h) if self.mode == "cutoff" else None


@dataclass(frozen=True)
class State:
    """Cell values at time t; ``outflow``/``clipped`` describe the step that produced it."""

    t: float
    n: np.ndarray
    outflow: float = 0.0
    clipped: float = 0.0


@dataclass
class Trajectory:
    grid: Grid
    config: SolverConfig
    envelopes: model.BoundEnvelopes
    times: np.ndarray
    states: np.ndarray  # (len(times), M)
    ledger: np.ndarray
    reports: list = field(default_factory=list)
    clip_mass: float = 0.0
    steps: int = 0
    dt_largest: float = 0.0
    # dissipation rate at output times and its step-by-step time integral
    dissipation: np.ndarray | None = None
    dissipated: np.ndarray | None = None

    def state(self, k: int) -> State:
        return State(float(self.times[k]), self.states[k])

    @property
    def n_eps(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def numbers(self) -> np.ndarray:
        return self.states @ self.grid.widths

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


# ---------------------------------------------------------------------------
# discrete operator


@dataclass(frozen=True, eq=False)
class _Operator:
    grid: Grid
    profile: model.CutoffProfile | None
    x_face: np.ndarray  # interior interfaces
    diff: np.ndarray  # x**2 / spacing at interior interfaces
    inv_width: np.ndarray
    chi_face: np.ndarray | None = None
    chi_center: np.ndarray | None = None

    def _g(self, chi):
        if chi is None:
            return model.convective
        return lambda n, x: model.convective_cut(n, x, chi)

    def _speed(self, chi):
        if chi is None:
            return model.convective_speed
        return lambda n, x: model.convective_cut_speed(n, x, chi)

    def speed(self, n, x):
        """Characteristic speed at the cell centres."""
        return self._speed(self.chi_center)(n, x)

    def convective_faces(self, n: np.ndarray) -> np.ndarray:
        """Explicit flux at all M + 1 interfaces, boundary values included."""
        out = np.empty(n.size + 1)
        out[0] = n[0] * n[0]
        out[-1] = 0.0
        out[1:-1] = model.rusanov(n[:-1], n[1:], self.x_face, self._g(self.chi_face), self._speed(self.chi_face))
        return out

    def diffusive_faces(self, n: np.ndarray) -> np.ndarray:
        out = np.zeros(n.size + 1)
        out[1:-1] = self.diff * np.diff(n)
        return out

    def dissipation(self, n: np.ndarray) -> float:
        """Discrete int n**2 + x**2 (dn/dx)**2, slopes as in the diffusion stencil."""
        slopes = np.diff(n) / self.grid.spacing
        return float(
            np.dot(self.grid.widths, n * n)
            + np.dot(self.grid.spacing, self.x_face**2 * slopes**2)
        )


@lru_cache(maxsize=64)
def _operator(grid: Grid, h: float | None) -> _Operator:
    x_face = np.asarray(grid.inner_interfaces)
    if h is None:
        return _Operator(grid, None, x_face, x_face**2 / grid.spacing, 1.0 / grid.widths)
    profile = model.CutoffProfile(h)
    return _Operator(
        grid, profile, x_face, x_face**2 / grid.spacing, 1.0 / grid.widths,
        profile.chi(x_face), profile.chi(grid.centers),
    )


def operator_for(grid: Grid, config: SolverConfig) -> _Operator:
    return _operator(grid, config.h if config.mode == "cutoff" else None)


def advance(n: np.ndarray, dt: float, op: _Operator, theta: float = 1.0):
    """One IMEX step; returns (new values, boundary outflow rate, clipped mass)."""
    conv = op.convective_faces(n)
    rhs = n + dt * op.inv_width * np.diff(conv)
    if theta < 1.0:
        rhs += (1.0 - theta) * dt * op.inv_width * np.diff(op.diffusive_faces(n))
    c = theta * dt * op.diff
    upper = -c * op.inv_width[:-1]
    lower = -c * op.inv_width[1:]
    diag = np.ones_like(n)
    diag[:-1] += c * op.inv_width[:-1]
    diag[1:] += c * op.inv_width[1:]
    *_, new, info = lapack.dgtsv(lower, diag, upper, rhs)
    if info != 0:
        raise SolverError(f"tridiagonal solve failed (info={info})")
    if not np.all(np.isfinite(new)):
        raise SolverError("non-finite state after step", last_state=n)
    clipped = 0.0
    if new.min() < 0.0:
        neg = np.minimum(new, 0.0)
        clipped = -float(np.dot(op.grid.widths, neg))
        new = new - neg
    return new, float(conv[0]), clipped


def step(state: State, t: float, dt: float, grid: Grid, config: SolverConfig) -> State:
    """Advance ``state`` from t to t + dt."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    n = grid.check(state.n)
    if not np.all(np.isfinite(n)):
        raise SolverError("non-finite input state", t=t)
    new, outflow, clipped = advance(n, dt, operator_for(grid, config), config.theta)
    return State(t + dt, new, outflow, clipped)


def adaptive_dt(state, grid: Grid, config: SolverConfig) -> float:
    """CFL step for the explicit convective part, capped at ``dt_max``."""
    n = grid.check(state.n if isinstance(state, State) else state)
    op = operator_for(grid, config)
    alpha = np.abs(op.speed(n, grid.centers))
    # the first cell also drains through the outflow face at speed 2 n_1
    alpha[0] = max(alpha[0], 2.0 * n[0])
    alpha += SPEED_GUARD
    dt = config.cfl * float(np.min(grid.widths / alpha))
    return min(config.dt_max, dt)


def output_times(config: SolverConfig) -> np.ndarray:
    k = int(math.floor(config.t_end / config.output_every + 1e-9))
    times = config.output_every * np.arange(k + 1)
    if config.t_end - times[-1] > 1e-9 * config.t_end:
        times = np.append(times, config.t_end)
    return times


def run(initial, grid: Grid, config: SolverConfig, envelopes: model.BoundEnvelopes | None = None) -> Trajectory:
    """Integrate from t = 0 to ``config.t_end``, reporting at every output time."""
    from .diagnostics import make_report

    n = grid.check(initial.n if isinstance(initial, State) else initial).copy()
    if np.any(n < 0) or not np.all(np.isfinite(n)):
        raise ValueError("initial state must be finite and nonnegative")
    if envelopes is None:
        envelopes = model.BoundEnvelopes.from_initial(n, grid)
    op = operator_for(grid, config)
    targets = output_times(config)

    states = [n.copy()]
    ledger = [0.0]
    dissipation = [op.dissipation(n)]
    dissipated = [0.0]
    reports = [make_report(n, 0.0, envelopes, grid, 0.0, 0.0, None)]
    t, total_out, clip, steps, dt_largest, diss = 0.0, 0.0, 0.0, 0, 0.0, 0.0

    for target in targets[1:]:
        while t < target:
            dt = adaptive_dt(n, grid, config)
            last = t + dt >= target * (1.0 - 1e-12)
            if last:
                dt = target - t
            try:
                n, outflow, clipped = advance(n, dt, op, config.theta)
            except SolverError as exc:
                raise SolverError(f"{exc} at t={t:.6g}", t=t, last_state=State(t, states[-1])) from exc
            total_out += dt * outflow
            diss += dt * op.dissipation(n)
            clip += clipped
            steps += 1
            dt_largest = max(dt_largest, dt)
            t = target if last else t + dt
        states.append(n.copy())
        ledger.append(total_out)
        prev_t = reports[-1].t
        slack = energy_slack(states[-2], n, diss - dissipated[-1], target - prev_t, grid)
        dissipation.append(op.dissipation(n))
        dissipated.append(diss)
        reports.append(make_report(n, target, envelopes, grid, total_out, clip, slack))

    traj = Trajectory(
        grid=grid,
        config=config,
        envelopes=envelopes,
        times=targets,
        states=np.array(states),
        ledger=np.array(ledger),
        reports=reports,
        clip_mass=clip,
        steps=steps,
        dt_largest=dt_largest,
        dissipation=np.array(dissipation),
        dissipated=np.array(dissipated),
    )
    return traj


def energy_slack(n_s, n_t, dissipated, span, grid) -> float:
    """Right minus left side of the energy inequality over one interval.

    ``dissipated`` is the step sum of dt times the discrete dissipation of
    each new state, i.e. the scheme's own time integral.
    """
    lhs = quad(n_t * n_t, 0, grid) + dissipated
    rhs = quad(n_s * n_s, 0, grid) + 8.0 / 3.0 * span
    return rhs - lhs


def run_pair(initial_a, initial_b, grid: Grid, config: SolverConfig):
    """Advance two data sets on a shared step sequence.

    A common dt keeps the discrete solution map identical for both runs, so
    the monotone scheme's comparison and L1 contraction carry over exactly.
    """
    from .diagnostics import make_report

    a = grid.check(initial_a).copy()
    b = grid.check(initial_b).copy()
    env = [model.BoundEnvelopes.from_initial(v, grid) for v in (a, b)]
    op = operator_for(grid, config)
    targets = output_times(config)
    hist = [[a.copy()], [b.copy()]]
    led = [[0.0], [0.0]]
    diss = [[op.dissipation(a)], [op.dissipation(b)]]
    cum = [[0.0], [0.0]]
    acc = [0.0, 0.0]
    reps = [[make_report(a, 0.0, env[0], grid, 0.0, 0.0, None)], [make_report(b, 0.0, env[1], grid, 0.0, 0.0, None)]]
    out = [0.0, 0.0]
    clip = [0.0, 0.0]
    t, steps, dt_largest = 0.0, 0, 0.0
    cur = [a, b]
    for target in targets[1:]:
        while t < target:
            dt = min(adaptive_dt(cur[0], grid, config), adaptive_dt(cur[1], grid, config))
            last = t + dt >= target * (1.0 - 1e-12)
            if last:
                dt = target - t
            for j in range(2):
                cur[j], outflow, clipped = advance(cur[j], dt, op, config.theta)
                out[j] += dt * outflow
                acc[j] += dt * op.dissipation(cur[j])
                clip[j] += clipped
            steps += 1
            dt_largest = max(dt_largest, dt)
            t = target if last else t + dt
        for j in range(2):
            slack = energy_slack(hist[j][-1], cur[j], acc[j] - cum[j][-1], target - reps[j][-1].t, grid)
            hist[j].append(cur[j].copy())
            led[j].append(out[j])
            diss[j].append(op.dissipation(cur[j]))
            cum[j].append(acc[j])
            reps[j].append(make_report(cur[j], target, env[j], grid, out[j], clip[j], slack))
    trajs = []
    for j in range(2):
        trajs.append(Trajectory(grid, config, env[j], targets, np.array(hist[j]), np.array(led[j]), reps[j],
                                clip[j], steps, dt_largest, np.array(diss[j]), np.array(cum[j])))
    return trajs[0], trajs[1]


# ---------------------------------------------------------------------------
# refinement


@dataclass
class ConvergenceTable:
    Ms: list
    differences: list  # L1(x^p) between consecutive levels at t_end
    orders: list  # log2 of successive difference ratios
    trajectories: list = field(repr=False, default_factory=list)


def refine_study(spec, base_M: int, levels: int, config: SolverConfig, epsilon: float = 1e-3,
                 grading: float = 1.0, p: float | None = None) -> ConvergenceTable:
    """Self-convergence study at M, 2M, 4M, ... with dt_max halved alongside."""
    from .grid import build_grid
    from .initdata import prepare

    if levels < 2:
        raise ValueError("a refinement study needs at least two levels")
    p = spec.p if p is None else p
    Ms = [base_M * 2**k for k in range(levels)]
    cfgs = [replace(config, dt_max=config.dt_max / 2**k) for k in range(levels)]
    grids = [build_grid(epsilon, M, grading) for M in Ms]
    trajs = [run(prepare(spec, g, c), g, c) for g, c in zip(grids, cfgs)]
    diffs = [
        overlay_l1(grids[k], trajs[k].final, grids[k + 1], trajs[k + 1].final, p)
        for k in range(levels - 1)
    ]
    orders = [math.log2(diffs[k] / diffs[k + 1]) if diffs[k + 1] > 0 else math.inf for k in range(len(diffs) - 1)]
    return ConvergenceTable(Ms, diffs, orders, trajs)
