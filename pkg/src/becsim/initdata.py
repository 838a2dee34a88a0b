"""Initial densities: analytic families, mollified data, cutoff-compatible data."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from . import model
from .grid import Grid

FAMILIES = ("constant", "linear_multiple", "scaled_equilibrium", "bump", "table")

# Gauss-Legendre nodes across the (clipped) kernel support
MOLLIFIER_NODES = model.KERNEL_NODES


class InitDataError(ValueError):
    pass


@dataclass(frozen=True)
class InitialSpec:
    """A named family with its parameters; ``kappa=None`` means raw sampling."""

    family: str
    params: dict = field(default_factory=dict)
    kappa: float | None = None
    p: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InitDataError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.kappa is not None and not (0.0 < self.kappa <= 0.1):
            raise InitDataError(f"kappa must lie in (0, 0.1], got {self.kappa}")
        if self.p < 0:
            raise InitDataError(f"weight exponent p must be >= 0, got {self.p}")
        need = {
            "constant": ("c",),
            "linear_multiple": ("a",),
            "scaled_equilibrium": ("a", "mu"),
            "bump": ("center", "width", "height"),
            "table": ("x", "n"),
        }[self.family]
        missing = [k for k in need if k not in self.params]
        if missing:
            raise InitDataError(f"family {self.family!r} needs parameters {missing}")
        P = self.params
        if self.family == "constant" and P["c"] < 0:
            raise InitDataError("constant must be nonnegative")
        if self.family == "linear_multiple" and P["a"] < 0:
            raise InitDataError("slope multiple must be nonnegative")
        if self.family == "scaled_equilibrium" and (P["a"] < 0 or P["mu"] < 0):
            raise InitDataError("scaled equilibrium needs a >= 0 and mu >= 0")
        if self.family == "bump" and (P["width"] <= 0 or P["height"] < 0):
            raise InitDataError("bump needs width > 0 and height >= 0")
        if self.family == "table":
            x = np.asarray(P["x"], dtype=float)
            n = np.asarray(P["n"], dtype=float)
            if x.shape != n.shape or x.size < 2:
                raise InitDataError("table needs matching x and n columns with >= 2 rows")
            if np.any(np.diff(x) <= 0):
                raise InitDataError("table x column must be strictly increasing")
            if np.any(n < 0):
                raise InitDataError("table densities must be nonnegative")

    # -- pointwise evaluation -------------------------------------------------

    def value(self, x):
        x = np.asarray(x, dtype=float)
        P = self.params
        f = self.family
        if f == "constant":
            return np.full_like(x, float(P["c"]))
        if f == "linear_multiple":
            return P["a"] * x
        if f == "scaled_equilibrium":
            return P["a"] * model.equilibrium_density(P["mu"], x)
        if f == "bump":
            u = (x - P["center"]) / P["width"]
            return P["height"] * math.e * model._bump(u)
        tx, tn = np.asarray(P["x"], float), np.asarray(P["n"], float)
        self._cover(tx, float(np.min(x)), float(np.max(x)))
        return np.interp(x, tx, tn)

    def slope(self, x):
        x = np.asarray(x, dtype=float)
        P = self.params
        f = self.family
        if f == "constant":
            return np.zeros_like(x)
        if f == "linear_multiple":
            return np.full_like(x, float(P["a"]))
        if f == "scaled_equilibrium":
            return P["a"] * model.equilibrium_slope(P["mu"], x)
        if f == "bump":
            w = P["width"]
            u = (x - P["center"]) / w
            out = np.zeros_like(u)
            inside = np.abs(u) < 1
            ui = u[inside]
            out[inside] = -2.0 * ui / (1.0 - ui**2) ** 2 * np.exp(-1.0 / (1.0 - ui**2))
            return P["height"] * math.e * out / w
        tx, tn = np.asarray(P["x"], float), np.asarray(P["n"], float)
        k = np.clip(np.searchsorted(tx, x, side="right") - 1, 0, tx.size - 2)
        return (tn[k + 1] - tn[k]) / (tx[k + 1] - tx[k])

    @staticmethod
    def _cover(tx, lo, hi):
        if tx[0] > lo + 1e-12 or tx[-1] < hi - 1e-12:
            raise InitDataError(
                f"table covers [{tx[0]:g}, {tx[-1]:g}] but [{lo:g}, {hi:g}] is needed"
            )


def load_table(path, **kw) -> InitialSpec:
    """Read a two-column (x, n) CSV with a header row into a ``table`` spec."""
    xs, ns = [], []
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise InitDataError(f"{path}: expected a header row with two columns")
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            try:
                xs.append(float(row[0]))
                ns.append(float(row[1]))
            except (ValueError, IndexError) as exc:
                raise InitDataError(f"{path}:{lineno}: bad row {row!r}") from exc
    return InitialSpec("table", {"x": tuple(xs), "n": tuple(ns)}, **kw)


def sample_raw(spec: InitialSpec, grid: Grid) -> np.ndarray:
    """Pointwise values at the cell centres."""
    if spec.family == "table":
        InitialSpec._cover(np.asarray(spec.params["x"], float), grid.epsilon, 1.0)
    return np.maximum(spec.value(grid.centers), 0.0)


# ---------------------------------------------------------------------------
# mollification


@dataclass(frozen=True)
class Mollified:
    """Smoothed data: bump-kernel average of x^p n_in on [2k, 1-2k] plus tails.

    The added tail makes the result exactly k x**2 below x = k and exactly
    the steady state k x**2/(k x + 1) above x = 1 - k.
    """

    spec: InitialSpec

    @property
    def kappa(self) -> float:
        return self.spec.kappa

    def _smoothed(self, x, derivative=False):
        k, p = self.kappa, self.spec.p
        nodes, weights = np.polynomial.legendre.leggauss(MOLLIFIER_NODES)
        # kernel variable u = (x - y)/k restricted to y in [2k, 1 - 2k]
        lo = np.clip((x - (1 - 2 * k)) / k, -1.0, 1.0)
        hi = np.clip((x - 2 * k) / k, -1.0, 1.0)
        half = 0.5 * np.maximum(hi - lo, 0.0)
        u = lo[:, None] + half[:, None] * (nodes[None, :] + 1.0)
        y = x[:, None] - k * u
        f = np.where(half[:, None] > 0, y**p * self.spec.value(np.clip(y, 2 * k, 1 - 2 * k)), 0.0)
        if derivative:
            return half * ((f * model.kernel_derivative(u)) @ weights) / k
        return half * ((f * model.kernel(u)) @ weights)

    def _tail(self, x):
        k, p = self.kappa, self.spec.p
        c = model.smooth_step(4 * x - 2)
        return k * x ** (2 + p) / (1 + k * x * c)

    def _tail_slope(self, x):
        k, p = self.kappa, self.spec.p
        c = model.smooth_step(4 * x - 2)
        dc = 4 * model.kernel(4 * x - 2)
        den = 1 + k * x * c
        return k * ((2 + p) * x ** (1 + p) * den - x ** (2 + p) * k * (c + x * dc)) / den**2

    def value(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return (self._smoothed(x) + self._tail(x)) / x**self.spec.p

    def slope(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        p = self.spec.p
        weighted = self._smoothed(x) + self._tail(x)
        dweighted = self._smoothed(x, derivative=True) + self._tail_slope(x)
        return dweighted / x**p - p * weighted / x ** (p + 1)


def mollify(spec: InitialSpec, grid: Grid) -> np.ndarray:
    """Mollified data at the cell centres; strictly positive."""
    if spec.kappa is None:
        raise InitDataError("mollify needs kappa")
    if spec.family == "table":
        InitialSpec._cover(np.asarray(spec.params["x"], float), 2 * spec.kappa, 1 - 2 * spec.kappa)
    return Mollified(spec).value(grid.centers)


# ---------------------------------------------------------------------------
# cutoff-compatible data


class _SplineSource:
    def __init__(self, values, grid: Grid):
        self._s = CubicSpline(grid.centers, values)
        self._ds = self._s.derivative()

    def value(self, x):
        return self._s(x)

    def slope(self, x):
        return self._ds(x)


def target_flux(source, x):
    """Flux without cutoff of a pointwise source."""
    return model.pointwise_flux(source.value(x), source.slope(x), x)


@dataclass
class StripSolution:
    x: np.ndarray  # fine RK4 nodes, x[0] = 1 - 2h
    n: np.ndarray

    def at(self, xq):
        return CubicSpline(self.x, self.n)(xq)


def integrate_strip(source, profile: model.CutoffProfile, nodes, substeps: int = 16) -> StripSolution:
    """RK4 for x**2 n' = J_target + 2xn - n**2 - (3n - n**2) chi_h from x = 1 - 2h.

    ``nodes`` are the required output abscissae in (1 - 2h, 1]; each gap
    between consecutive nodes is split into ``substeps`` RK4 steps.
    """
    x0 = profile.strip_start
    pts = np.concatenate([[x0], np.asarray(nodes, dtype=float)])
    if np.any(np.diff(pts) <= 0):
        raise InitDataError("strip nodes must increase from 1 - 2h")
    # all RK4 stage abscissae up front, so the source is evaluated in one call
    frac = np.arange(substeps) / substeps
    left = (pts[:-1, None] + np.diff(pts)[:, None] * frac).ravel()
    hs = np.repeat(np.diff(pts) / substeps, substeps)
    stages = np.stack([left, left + hs / 2, left + hs])
    jt = target_flux(source, stages.ravel()).reshape(stages.shape)
    chi = profile.chi(stages)

    def rhs(k, j, n):
        x = stages[k, j]
        return (jt[k, j] + 2 * x * n - n * n - (3 * n - n * n) * chi[k, j]) / (x * x)

    xs = [x0]
    n = float(np.atleast_1d(source.value(np.atleast_1d(x0)))[0])
    ns = [n]
    for j, h in enumerate(hs):
        k1 = rhs(0, j, n)
        k2 = rhs(1, j, n + h / 2 * k1)
        k3 = rhs(1, j, n + h / 2 * k2)
        k4 = rhs(2, j, n + h * k3)
        n = n + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not math.isfinite(n) or n < 0:
            raise InitDataError(
                f"cutoff strip ODE blew up near x={stages[2, j]:.6g}; h={profile.h} is too large for this data"
            )
        xs.append(stages[2, j])
        ns.append(n)
    xs[-1] = pts[-1]
    return StripSolution(np.array(xs), np.array(ns))


def cutoff_compatible(state, profile: model.CutoffProfile, grid: Grid, source=None, substeps: int = 16) -> np.ndarray:
    """Replace the strip [1 - 2h, 1] so the cutoff flux equals the plain flux at t = 0.

    ``source`` provides pointwise ``value``/``slope``; without it a cubic
    spline through ``state`` is used.
    """
    n = grid.check(state).copy()
    strip = grid.centers >= profile.strip_start
    if not np.any(strip):
        return n
    if source is None:
        source = _SplineSource(n, grid)
    sol = integrate_strip(source, profile, grid.centers[strip], substeps)
    n[strip] = sol.at(grid.centers[strip])
    return n


def flux_mismatch(source, profile: model.CutoffProfile, sol: StripSolution, xq) -> float:
    """max |J_h[n_h] - J[source]| at xq, n_h' from a spline through the RK4 nodes."""
    spline = CubicSpline(sol.x, sol.n)
    n = spline(xq)
    jh = model.cutoff_flux(n, spline.derivative()(xq), xq, profile)
    return float(np.max(np.abs(jh - target_flux(source, np.asarray(xq, float)))))


# ---------------------------------------------------------------------------


def prepare(spec: InitialSpec, grid: Grid, config=None) -> np.ndarray:
    """Initial cell values for a run: raw or mollified, then cutoff-adjusted if needed."""
    if spec.kappa is not None:
        if grid.epsilon >= spec.kappa:
            raise InitDataError("mollified data needs epsilon < kappa")
        source = Mollified(spec)
        n = source.value(grid.centers)
    else:
        source = spec
        n = sample_raw(spec, grid)
    if config is not None and config.mode == "cutoff":
        n = cutoff_compatible(n, config.profile, grid, source=source)
    return n
