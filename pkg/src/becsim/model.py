"""Closed-form pieces of the model: fluxes, equilibria, barriers and constants.

The unknown is the number density n(x, t) on (0, 1] and the conservative
flux is

    J = x**2 dn/dx + n**2 - 2 x n,      dn/dt = dJ/dx,

with J = 0 at x = 1.  Everything here is a pure function of its arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize

# closed-form photon number loses relative accuracy beyond this mu
SERIES_SWITCH_MU = 10.0
_SERIES_TERMS = 24

MAX_EQUILIBRIUM_NUMBER = 0.5

# Gauss-Legendre order for bump integrals; 64 nodes leave a 2e-12 mass error
KERNEL_NODES = 128


class ModelError(ValueError):
    """Argument outside the domain of a model formula."""


# ---------------------------------------------------------------------------
# smooth kernel and step


def _bump(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    return out


@lru_cache(maxsize=None)
def _gauss_legendre(order: int = KERNEL_NODES):
    return np.polynomial.legendre.leggauss(order)


@lru_cache(maxsize=None)
def _bump_mass() -> float:
    nodes, weights = _gauss_legendre()
    return float(np.dot(weights, _bump(nodes)))


def kernel(u):
    """Unit-mass C-infinity bump supported on (-1, 1)."""
    return _bump(u) / _bump_mass()


def kernel_derivative(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    out[inside] = -2.0 * ui / (1.0 - ui**2) ** 2 * np.exp(-1.0 / (1.0 - ui**2))
    return out / _bump_mass()


def smooth_step(y):
    """Running integral of :func:`kernel`: 0 for y <= -1, 1 for y >= 1."""
    y = np.asarray(y, dtype=float)
    nodes, weights = _gauss_legendre()
    yc = np.clip(y, -1.0, 1.0)
    half = 0.5 * (yc + 1.0)
    # Gauss-Legendre on [-1, yc]; all derivatives of the bump vanish at -1
    pts = -1.0 + half[..., None] * (nodes + 1.0)
    vals = half * (_bump(pts) @ weights) / _bump_mass()
    return np.where(y >= 1.0, 1.0, np.where(y <= -1.0, 0.0, vals))


# ---------------------------------------------------------------------------
# fluxes


def convective(n, x):
    """Nonlinear part g(n, x) = n**2 - 2 x n of the flux."""
    return n * n - 2.0 * x * n


def convective_speed(n, x):
    return 2.0 * n - 2.0 * x


def rusanov(n_left, n_right, x, g=convective, speed=convective_speed):
    """Local Lax-Friedrichs interface value of g for dn/dt = d(g)/dx.

    Information travels towards smaller x where the speed 2n - 2x is positive,
    hence the + sign on the dissipative term.
    """
    alpha = np.maximum(np.abs(speed(n_left, x)), np.abs(speed(n_right, x)))
    return 0.5 * (g(n_left, x) + g(n_right, x)) + 0.5 * alpha * (n_right - n_left)


def flux_model(n_left, n_right, x, dn_dx):
    """Interface flux x**2 dn/dx plus the Rusanov value of n**2 - 2xn."""
    return x * x * dn_dx + rusanov(n_left, n_right, x)


@dataclass(frozen=True)
class CutoffProfile:
    """Switch that removes the nonlinear flux term in the strip [1 - 2h, 1]."""

    h: float

    def __post_init__(self):
        if not (0.0 < self.h < 0.5):
            raise ModelError(f"cutoff width must lie in (0, 0.5), got {self.h}")

    @property
    def strip_start(self) -> float:
        return 1.0 - 2.0 * self.h

    def chi(self, x):
        return smooth_step(1.0 + (np.asarray(x, dtype=float) - 1.0) / self.h)

    def g(self, n, x):
        return convective_cut(n, x, self.chi(x))

    def speed(self, n, x):
        return convective_cut_speed(n, x, self.chi(x))


def convective_cut(n, x, chi):
    """n**2 - 2xn + (3n - n**2) chi for a precomputed switch value chi."""
    return n * n - 2.0 * x * n + (3.0 * n - n * n) * chi


def convective_cut_speed(n, x, chi):
    return 2.0 * n * (1.0 - chi) + 3.0 * chi - 2.0 * x


def cutoff_flux(n, dn_dx, x, profile: CutoffProfile):
    """Pointwise flux with the nonlinearity switched off near x = 1.

    At x = 1 it equals dn/dx + n, so J = 0 there is a Robin condition.
    """
    return x * x * dn_dx + profile.g(n, x)


def pointwise_flux(n, dn_dx, x):
    return x * x * dn_dx + convective(n, x)


# ---------------------------------------------------------------------------
# barriers and envelopes


def supersolution(x, t, tau1: float = 0.0):
    """Universal upper barrier x + (1 - x)/s + 2/sqrt(s) at s = t + tau1."""
    s = t + tau1
    if np.any(np.asarray(s) <= 0):
        raise ModelError("shifted time must be positive")
    x = np.asarray(x, dtype=float)
    if np.isinf(s):
        return x.copy() if x.ndim else float(x)
    return x + (1.0 - x) / s + 2.0 / np.sqrt(s)


@dataclass(frozen=True)
class BoundEnvelopes:
    """Time shifts under which the barrier and slope bounds hold from t = 0."""

    tau1: float
    tau2: float

    @classmethod
    def from_initial(cls, n_in, grid) -> "BoundEnvelopes":
        n_in = grid.check(n_in)
        top = float(n_in.max(initial=0.0))
        tau1 = 4.0 / top**2 if top > 0 else math.inf
        slopes = np.diff(n_in) / grid.spacing
        # J = 0 at x = 1 forces dn/dx = 2n - n**2 there at t = 0+
        right = 2.0 * n_in[-1] - n_in[-1] ** 2
        steepest = min(float(slopes.min(initial=0.0)), right)
        tau2 = 4.0 / -steepest if steepest < 0 else math.inf
        if top > 2.0:
            # the slope barrier at x = 1 needs tau2 <= tau1 once n(1) may exceed 2
            tau2 = min(tau2, tau1)
        return cls(tau1, tau2)

    def oleinik_floor(self, t):
        s = t + self.tau2
        return -4.0 / s if s > 0 else -math.inf

    def bv_bound(self, t) -> float:
        """Total-variation bound 1 + 2/sqrt(t + tau1) + 8/(t + tau2)."""
        s1, s2 = t + self.tau1, t + self.tau2
        return 1.0 + (2.0 / math.sqrt(s1) if s1 > 0 else math.inf) + (8.0 / s2 if s2 > 0 else math.inf)


# ---------------------------------------------------------------------------
# equilibria


def equilibrium_density(mu, x):
    """Steady state x**2 / (x + mu)."""
    if np.any(np.asarray(mu) < 0):
        raise ModelError("mu must be nonnegative")
    x = np.asarray(x, dtype=float)
    if np.isinf(mu):
        return np.zeros_like(x) if x.ndim else 0.0
    return x * x / (x + mu)


def equilibrium_slope(mu, x):
    x = np.asarray(x, dtype=float)
    return x * (x + 2.0 * mu) / (x + mu) ** 2


def equilibrium_number(mu: float) -> float:
    """Photon number 1/2 - mu + mu**2 log(1 + 1/mu) of the steady state x**2/(x+mu)."""
    mu = float(mu)
    if mu < 0 or math.isnan(mu):
        raise ModelError(f"mu must be nonnegative, got {mu}")
    if mu == 0.0:
        return MAX_EQUILIBRIUM_NUMBER
    if math.isinf(mu):
        return 0.0
    if mu < 1.0:
        # 1/mu may overflow; log(1 + 1/mu) = log1p(mu) - log(mu)
        return 0.5 - mu + mu * mu * (math.log1p(mu) - math.log(mu))
    if mu <= SERIES_SWITCH_MU:
        return 0.5 - mu + mu * mu * math.log1p(1.0 / mu)
    u = 1.0 / mu
    # sum_j (-1)**(j+1) u**j / (j + 2), Horner from the tail
    acc = 0.0
    for j in range(_SERIES_TERMS, 0, -1):
        acc = u * ((-1.0) ** (j + 1) / (j + 2) + acc)
    return acc


def solve_mu(N: float, xtol: float = 1e-12) -> float:
    """Invert :func:`equilibrium_number` by bisection."""
    N = float(N)
    if not (0.0 < N <= MAX_EQUILIBRIUM_NUMBER):
        if N > MAX_EQUILIBRIUM_NUMBER:
            raise ModelError(
                f"no steady state carries photon number {N} > 1/2 "
                "(the excess must go into the condensate)"
            )
        raise ModelError(f"photon number must be positive, got {N}")
    if N == MAX_EQUILIBRIUM_NUMBER:
        return 0.0
    hi = 1.0 / (3.0 * N) + 1.0
    return optimize.bisect(lambda m: equilibrium_number(m) - N, 0.0, hi, xtol=xtol, maxiter=400)


# ---------------------------------------------------------------------------
# condensate timing


def onset_time_bound(N_in: float) -> float:
    """Time after which data with photon number N_in > 1/2 must be condensing."""
    if not N_in > 0.5:
        raise ModelError(f"no onset guarantee for N_in = {N_in} <= 1/2")
    delta = 0.5 * (N_in - 0.5)
    return 1.0 / (4.0 * (math.sqrt(1.0 + delta) - 1.0) ** 2)


def persistence_floor(t: float, t_star: float, n0_star: float) -> float:
    """Lower bound for the boundary trace at t >= t_star once it was n0_star > 0."""
    if not (t_star > 0 and n0_star > 0 and t >= t_star):
        raise ModelError("need t >= t_star > 0 and n0_star > 0")
    # (1 + t*/4) e^{2(t - t*)} - 1 written so that t = t* gives exactly t*/4
    denom = (1.0 + t_star / 4.0) * math.expm1(2.0 * (t - t_star)) + t_star / 4.0
    x_hat = min(t_star * n0_star / 4.0, 1.0)
    return x_hat / denom


def gronwall_constant(p: float) -> float:
    return p * (p + 3.0)


# ---------------------------------------------------------------------------
# entropy


def entropy(n, grid, floor: float | None = None) -> float:
    """Midpoint value of H[n] = int x n - x**2 log n over [epsilon, 1]."""
    n = grid.check(n)
    if floor is None:
        top = float(n.max(initial=0.0))
        floor = 1e-30 * top if top > 0 else 1e-300
    if floor <= 0:
        raise ModelError("entropy floor must be positive")
    x = grid.centers
    integrand = x * n - x * x * np.log(np.maximum(n, floor))
    return float(np.dot(grid.widths, integrand))
