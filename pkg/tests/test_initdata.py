import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.interpolate import CubicSpline

from becsim import model
from becsim.grid import build_grid, quad
from becsim.initdata import (
    InitDataError,
    InitialSpec,
    Mollified,
    cutoff_compatible,
    flux_mismatch,
    integrate_strip,
    load_table,
    mollify,
    prepare,
    sample_raw,
)
from becsim.solver import SolverConfig


@pytest.fixture(scope="module")
def g():
    return build_grid(1e-3, 400)


def test_sample_raw_families(g):
    np.testing.assert_array_equal(sample_raw(InitialSpec("constant", {"c": 2.0}), g), 2.0)
    np.testing.assert_allclose(sample_raw(InitialSpec("linear_multiple", {"a": 1.0}), g), g.centers)
    np.testing.assert_allclose(
        sample_raw(InitialSpec("scaled_equilibrium", {"a": 1.0, "mu": 0.5}), g),
        g.centers**2 / (g.centers + 0.5),
    )
    bump = sample_raw(InitialSpec("bump", {"center": 0.5, "width": 0.2, "height": 3.0}), g)
    assert bump.max() == pytest.approx(3.0, rel=1e-4)
    assert np.all(bump[(g.centers < 0.3) | (g.centers > 0.7)] == 0.0)


@pytest.mark.parametrize(
    "family,params,kw",
    [
        ("nope", {}, {}),
        ("constant", {}, {}),
        ("constant", {"c": -1.0}, {}),
        ("bump", {"center": 0.5, "width": 0.0, "height": 1.0}, {}),
        ("constant", {"c": 1.0}, {"kappa": 0.2}),
        ("constant", {"c": 1.0}, {"p": -1.0}),
        ("table", {"x": (0.0, 0.5, 0.4), "n": (1.0, 1.0, 1.0)}, {}),
    ],
)
def test_spec_validation(family, params, kw):
    with pytest.raises(InitDataError):
        InitialSpec(family, params, **kw)


def test_table_roundtrip(tmp_path, g):
    path = tmp_path / "data.csv"
    path.write_text("x,n\n0.0,0.0\n0.5,1.0\n\n1.0,2.0\n")
    spec = load_table(path)
    np.testing.assert_allclose(sample_raw(spec, g), np.interp(g.centers, [0, 0.5, 1], [0, 1, 2]))
    short = tmp_path / "short.csv"
    short.write_text("x,n\n0.1,0.0\n0.5,1.0\n")
    with pytest.raises(InitDataError, match="covers"):
        sample_raw(load_table(short), g)
    bad = tmp_path / "bad.csv"
    bad.write_text("x,n\n0.0,1\n0.5,abc\n")
    with pytest.raises(InitDataError, match=":3:"):
        load_table(bad)


# -- mollification ---------------------------------------------------------------


SPECS = [
    InitialSpec("constant", {"c": 1.0}, kappa=0.05),
    InitialSpec("linear_multiple", {"a": 3.0}, kappa=0.1),
    InitialSpec("bump", {"center": 0.4, "width": 0.2, "height": 2.0}, kappa=0.03, p=1.0),
]


@pytest.mark.parametrize("spec", SPECS)
def test_mollified_endpoint_laws(spec):
    k = spec.kappa
    m = Mollified(spec)
    x = np.array([k / 4, k / 2, 0.9 * k])
    np.testing.assert_allclose(m.value(x), k * x**2, rtol=1e-12)
    x = np.array([1 - 0.9 * k, 1 - k / 2, 1.0])
    np.testing.assert_allclose(m.value(x), k * x**2 / (k * x + 1), rtol=1e-12)


@pytest.mark.parametrize("spec", SPECS)
def test_mollified_slope_is_derivative(spec):
    m = Mollified(spec)
    x = np.linspace(0.01, 0.99, 37)
    d = 1e-6
    fd = (m.value(x + d) - m.value(x - d)) / (2 * d)
    np.testing.assert_allclose(m.slope(x), fd, atol=1e-6 * (1 + np.abs(fd).max()))


def test_mollified_interior_matches_quadrature():
    spec = InitialSpec("linear_multiple", {"a": 2.0}, kappa=0.1, p=1.0)
    k, x = 0.1, 0.5
    conv, _ = integrate.quad(lambda y: model.kernel((x - y) / k) / k * y * 2 * y, 0.2, 0.8, epsabs=1e-14)
    expect = (conv + k * x**3 / (1 + k * x * model.smooth_step(4 * x - 2))) / x
    assert Mollified(spec).value(x)[0] == pytest.approx(expect, rel=1e-10)


def test_mollify_converges_to_raw():
    g = build_grid(1e-4, 1600)
    raw = np.ones(g.M)
    dists = [quad(np.abs(mollify(InitialSpec("constant", {"c": 1.0}, kappa=k), g) - raw), 0, g)
             for k in (0.1, 0.05, 0.025, 0.0125)]
    assert all(b < a for a, b in zip(dists, dists[1:]))
    assert dists[-1] < 0.07


def test_mollify_positive_and_smooth():
    spec = InitialSpec("bump", {"center": 0.5, "width": 0.1, "height": 1.0}, kappa=0.05)
    second = []
    for M in (200, 400, 800):
        g = build_grid(1e-3, M)
        n = mollify(spec, g)
        assert np.all(n > 0)
        second.append(np.abs(np.diff(n, 2) / np.diff(g.centers)[:-1] ** 2).max())
    assert max(second) < 2 * min(second)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 3), st.floats(0, 3))
def test_mollify_monotone_in_data(c1, c2):
    g = build_grid(1e-3, 100)
    lo, hi = sorted((c1, c2))
    a = mollify(InitialSpec("constant", {"c": lo}, kappa=0.05), g)
    b = mollify(InitialSpec("constant", {"c": hi}, kappa=0.05), g)
    assert np.all(a <= b + 1e-15)


def test_mollify_needs_kappa(g):
    with pytest.raises(InitDataError):
        mollify(InitialSpec("constant", {"c": 1.0}), g)
    with pytest.raises(InitDataError):
        prepare(InitialSpec("constant", {"c": 1.0}, kappa=1e-3), build_grid(2e-3, 50))


# -- cutoff-compatible data ------------------------------------------------------


def _strip_oracle(source, profile, x_end):
    def rhs(x, n):
        jt = model.pointwise_flux(source.value(np.array([x]))[0], source.slope(np.array([x]))[0], x)
        c = profile.chi(np.array(x))
        return [(jt + 2 * x * n[0] - n[0] ** 2 - (3 * n[0] - n[0] ** 2) * c) / x**2]

    x0 = profile.strip_start
    sol = integrate.solve_ivp(rhs, (x0, x_end), [source.value(np.array([x0]))[0]],
                              method="DOP853", rtol=1e-13, atol=1e-15)
    return sol.y[0, -1]


def test_cutoff_endpoint_matches_ode_oracle():
    spec = InitialSpec("constant", {"c": 1.0}, kappa=0.1)
    src, prof = Mollified(spec), model.CutoffProfile(0.05)
    g = build_grid(1e-3, 400)
    nodes = g.centers[g.centers >= prof.strip_start]
    sol = integrate_strip(src, prof, np.append(nodes, 1.0))
    assert sol.n[-1] == pytest.approx(_strip_oracle(src, prof, 1.0), abs=1e-8)


@pytest.mark.parametrize("h", [0.2, 0.1, 0.05])
def test_cutoff_flux_matches_plain_flux(h):
    spec = InitialSpec("scaled_equilibrium", {"a": 1.2, "mu": 0.5})
    prof = model.CutoffProfile(h)
    g = build_grid(1e-3, 400)
    nodes = g.centers[g.centers >= prof.strip_start]
    assert flux_mismatch(spec, prof, integrate_strip(spec, prof, nodes), nodes) <= 1e-8


def test_cutoff_leaves_outside_untouched(g):
    spec = InitialSpec("scaled_equilibrium", {"a": 1.2, "mu": 0.5})
    cfg = SolverConfig(mode="cutoff", h=0.1)
    raw, adj = sample_raw(spec, g), prepare(spec, g, cfg)
    outside = g.centers < 0.8
    np.testing.assert_array_equal(adj[outside], raw[outside])
    assert np.any(adj[~outside] != raw[~outside])



def test_cutoff_strip_satisfies_robin_condition():
    # J = 0 at x = 1 becomes dn/dx = -n once the cutoff is complete
    spec = InitialSpec("scaled_equilibrium", {"a": 1.0, "mu": 0.5})
    prof = model.CutoffProfile(0.1)
    sol = integrate_strip(spec, prof, np.linspace(0.81, 1.0, 20))
    spline = CubicSpline(sol.x, sol.n)
    assert spline(1.0, 1) == pytest.approx(-spline(1.0), abs=1e-8)


def test_cutoff_degenerate_strip_is_identity(g):
    n = sample_raw(InitialSpec("constant", {"c": 1.0}), g)
    out = cutoff_compatible(n, model.CutoffProfile(1e-5), g)
    np.testing.assert_array_equal(out, n)


def test_cutoff_blow_up_is_reported():
    spec = InitialSpec("constant", {"c": 1.0}, kappa=0.1)
    g = build_grid(1e-3, 200)
    with pytest.raises(InitDataError, match="too large"):
        prepare(spec, g, SolverConfig(mode="cutoff", h=0.2))
