"""Identification of the large-time steady state x**2/(x + mu) of a run.

Two estimators are always computed and cross-reported: one inverts the
photon number, the other reads mu off the profile through
g(x) = x - x**2/n, which is identically -mu on a steady state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import model
from .diagnostics import weighted_l1
from .grid import Grid

DEFAULT_FLOOR = 1e-6
# weighted standard deviation of g below which the state counts as equilibrated
SPREAD_TOL = 1e-2
# photon numbers slightly above 1/2 come from finite-time lag towards n = x
NUMBER_TOL = 0.05


class EquilibriumError(ValueError):
    pass


@dataclass(frozen=True)
class EquilibriumFit:
    mu_from_number: float
    mu_from_profile: float
    spread: float
    residual_l1: float
    selected: str
    reason: str

    @property
    def mu(self) -> float:
        return self.mu_from_number if self.selected == "number" else self.mu_from_profile

    @property
    def discrepancy(self) -> float:
        return abs(self.mu_from_number - self.mu_from_profile)


def profile_mu(n, grid: Grid, floor: float = DEFAULT_FLOOR) -> tuple[float, float]:
    """Weighted least-squares constant -g and the weighted spread of g about it.

    Weights are cell width times n, which tames x**2/n in near-vacuum cells.
    """
    n = grid.check(n)
    keep = n > floor
    if not np.any(keep):
        raise EquilibriumError(f"every cell is below the floor {floor:g}; nothing to fit")
    x = grid.centers[keep]
    w = grid.widths[keep] * n[keep]
    g = x - x * x / n[keep]
    mu = -float(np.dot(w, g) / w.sum())
    spread = math.sqrt(float(np.dot(w, (g + mu) ** 2) / w.sum()))
    return max(mu, 0.0), spread


def fit(final, N_final: float, grid: Grid, floor: float = DEFAULT_FLOOR,
        number_tol: float = NUMBER_TOL, spread_tol: float = SPREAD_TOL) -> EquilibriumFit:
    """Fit mu to a final state; ``final`` may be an array or a :class:`~becsim.solver.State`."""
    n = grid.check(getattr(final, "n", final))
    if np.any(n < 0):
        raise EquilibriumError("final state has negative cells")
    if not (0.0 < N_final <= model.MAX_EQUILIBRIUM_NUMBER + number_tol):
        raise EquilibriumError(
            f"photon number {N_final:g} outside (0, {model.MAX_EQUILIBRIUM_NUMBER + number_tol:g}]"
        )
    mu_prof, spread = profile_mu(n, grid, floor)
    mu_num = model.solve_mu(min(N_final, model.MAX_EQUILIBRIUM_NUMBER))
    if spread <= spread_tol:
        selected, reason = "number", f"profile spread {spread:.3g} <= {spread_tol:g}: state equilibrated"
    else:
        selected, reason = "profile", f"profile spread {spread:.3g} > {spread_tol:g}: not yet equilibrated"
    mu = mu_num if selected == "number" else mu_prof
    resid = weighted_l1(n, model.equilibrium_density(mu, grid.centers), 0.0, grid)
    return EquilibriumFit(mu_num, mu_prof, spread, resid, selected, reason)


def convergence_time(traj, fit: EquilibriumFit, tol: float):
    """First output time at which the L1 distance to the fitted steady state drops below tol."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    target = model.equilibrium_density(fit.mu, traj.grid.centers)
    for t, n in zip(traj.times, traj.states):
        if weighted_l1(n, target, 0.0, traj.grid) < tol:
            return float(t)
    return None


def dominating_envelope(t: float, grid: Grid) -> float:
    """L1 bound on [epsilon, 1] for |n - x| when the data lie above x."""
    if not t > 0:
        return math.inf
    return (1.0 - grid.epsilon) * (1.0 / t + 2.0 / math.sqrt(t))
