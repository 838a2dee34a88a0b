"""Cell-centred mesh on the truncated interval [epsilon, 1].

States live at cell centres, fluxes at interfaces.  With ``grading > 1``
the cell widths grow geometrically away from ``epsilon``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class GridError(ValueError):
    """Invalid grid parameters or mismatched sample arrays."""


@dataclass(frozen=True, eq=False)
class Grid:
    epsilon: float
    centers: np.ndarray
    interfaces: np.ndarray
    widths: np.ndarray
    grading: float

    @property
    def M(self) -> int:
        return self.centers.size

    @property
    def spacing(self) -> np.ndarray:
        """Centre-to-centre distances across the M - 1 interior interfaces."""
        return np.diff(self.centers)

    @property
    def inner_interfaces(self) -> np.ndarray:
        return self.interfaces[1:-1]

    @property
    def max_width(self) -> float:
        return float(self.widths.max())

    def check(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape != (self.M,):
            raise GridError(f"expected {self.M} cell values, got shape {values.shape}")
        return values


def build_grid(epsilon: float, M: int, grading: float = 1.0) -> Grid:
    """Build the mesh on [epsilon, 1] with M cells and geometric ratio ``grading``."""
    if not (0.0 < epsilon < 1.0):
        raise GridError(f"epsilon must lie in (0, 1), got {epsilon}")
    if int(M) != M or M < 2:
        raise GridError(f"M must be an integer >= 2, got {M}")
    if grading < 1.0:
        raise GridError(f"grading must be >= 1, got {grading}")
    M = int(M)
    length = 1.0 - epsilon
    if grading == 1.0:
        widths = np.full(M, length / M)
    else:
        first = length * (grading - 1.0) / (grading**M - 1.0)
        widths = first * grading ** np.arange(M)
    interfaces = np.empty(M + 1)
    interfaces[0] = epsilon
    interfaces[1:] = epsilon + np.cumsum(widths)
    # pin the right end; the cumulative sum drifts by a few ulps
    interfaces[-1] = 1.0
    widths = np.diff(interfaces)
    if np.any(widths <= 0.0):
        raise GridError("grading too strong for double precision")
    centers = 0.5 * (interfaces[:-1] + interfaces[1:])
    for arr in (centers, interfaces, widths):
        arr.setflags(write=False)
    return Grid(float(epsilon), centers, interfaces, widths, float(grading))


def quad(values, p: float, grid: Grid) -> float:
    """Midpoint rule for the integral of x**p * n over [epsilon, 1]."""
    if p < 0:
        raise GridError(f"weight exponent must be >= 0, got {p}")
    values = grid.check(values)
    if p == 0:
        return float(np.dot(grid.widths, values))
    return float(np.dot(grid.widths * grid.centers**p, values))


def overlay_l1(grid_a: Grid, a, grid_b: Grid, b, p: float = 0.0) -> float:
    """Weighted L1 distance between two piecewise-constant fields on different grids.

    Integrates |a - b| x**p exactly over the common refinement of both meshes
    restricted to the overlap [max(eps_a, eps_b), 1]; x**p uses the midpoint
    of each overlay piece.
    """
    a = grid_a.check(a)
    b = grid_b.check(b)
    lo = max(grid_a.epsilon, grid_b.epsilon)
    edges = np.union1d(grid_a.interfaces, grid_b.interfaces)
    edges = edges[edges >= lo]
    mids = 0.5 * (edges[:-1] + edges[1:])
    ia = np.clip(np.searchsorted(grid_a.interfaces, mids) - 1, 0, grid_a.M - 1)
    ib = np.clip(np.searchsorted(grid_b.interfaces, mids) - 1, 0, grid_b.M - 1)
    return float(np.sum(np.diff(edges) * mids**p * np.abs(a[ia] - b[ib])))
