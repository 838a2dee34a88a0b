import math

import numpy as np
import pytest

from becsim import equilibrium, model
from becsim.grid import build_grid
from becsim.solver import SolverConfig, run


@pytest.fixture(scope="module")
def g():
    return build_grid(1e-3, 400)


def test_fit_mu_one(g):
    n = model.equilibrium_density(1.0, g.centers)
    fit = equilibrium.fit(n, math.log(2) - 0.5, g)
    assert fit.mu_from_number == pytest.approx(1.0, abs=1e-10)
    assert fit.mu_from_profile == pytest.approx(1.0, abs=1e-12)
    assert fit.discrepancy <= 1e-3
    assert fit.selected == "number"
    assert fit.residual_l1 < 1e-12


def test_fit_maximal_state(g):
    fit = equilibrium.fit(g.centers, 0.5, g)
    assert fit.mu_from_number == 0.0
    assert fit.mu_from_profile == pytest.approx(0.0, abs=1e-14)


def test_fit_vacuum_and_bad_input(g):
    with pytest.raises(equilibrium.EquilibriumError):
        equilibrium.fit(np.zeros(400), 0.1, g)
    with pytest.raises(equilibrium.EquilibriumError):
        equilibrium.fit(g.centers, 0.7, g)
    with pytest.raises(equilibrium.EquilibriumError):
        equilibrium.fit(-g.centers, 0.2, g)


def test_fit_far_from_equilibrium_uses_profile(g):
    n = np.full(400, 0.3)
    fit = equilibrium.fit(n, 0.3, g)
    assert fit.selected == "profile"
    assert fit.mu_from_number >= 0 and fit.mu_from_profile >= 0
    assert "not yet" in fit.reason


def test_convergence_time(g):
    n = model.equilibrium_density(0.5, g.centers)
    tr = run(n, g, SolverConfig(t_end=1.0))
    fit = equilibrium.fit(tr.final, float(tr.numbers[-1]), g)
    assert equilibrium.convergence_time(tr, fit, 1e-2) == 0.0
    assert equilibrium.convergence_time(tr, fit, 1e-12) is None
    with pytest.raises(ValueError):
        equilibrium.convergence_time(tr, fit, 0.0)


def test_dominating_data_envelope(condensing_run):
    tr = condensing_run
    for t, n in zip(tr.times[1:], tr.states[1:]):
        dist = float(np.dot(tr.grid.widths, np.abs(n - tr.grid.centers)))
        assert dist <= equilibrium.dominating_envelope(t, tr.grid) + 0.03


def test_number_conserved_for_data_below_x():
    g = build_grid(1e-4, 400, 1.01)
    tr = run(0.5 * g.centers, g, SolverConfig(t_end=20.0, output_every=1.0))
    mu0 = model.solve_mu(float(tr.numbers[0]))
    fit = equilibrium.fit(tr.final, float(tr.numbers[-1]), g)
    assert fit.mu_from_number == pytest.approx(mu0, abs=1e-6)
    assert fit.mu == pytest.approx(model.solve_mu(0.25), abs=2e-2)


def test_residual_decreases_after_equilibration():
    g = build_grid(1e-4, 400, 1.01)
    tr = run(0.5 * g.centers, g, SolverConfig(t_end=20.0, output_every=1.0))
    res = [equilibrium.fit(n, float(N), g).residual_l1 for n, N in zip(tr.states[5:], tr.numbers[5:])]
    assert all(b <= a + 1e-9 for a, b in zip(res, res[1:]))
