import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from satint.equilibrium import build_map, equilibria, equilibrium_at, invert_G, shifted_gain, solve_equilibrium
from satint.errors import Assumption2Violated, EquilibriumNotFound, InvalidArgument, ReferenceOutOfRange
from satint.plant import PlantModel, get_plant
from satint.saturator import SaturatorSpec

SPEC = SaturatorSpec(-1.0, 1.0)


@pytest.fixture(scope="module")
def maps():
    return {name: build_map(get_plant(name), SPEC) for name in ("linear1d", "osc_cubic", "scalar_cubic")}


def test_linear_map_is_identity(maps):
    m = maps["linear1d"]
    np.testing.assert_allclose(m.xi_values[:, 0], m.u_grid, atol=1e-12)
    assert m.alpha == pytest.approx(1.0)
    assert m.mu == pytest.approx(0.5)
    assert (m.y_min, m.y_max) == pytest.approx((-1.0, 1.0))


def test_osc_inverse_solves_cubic(maps):
    u = invert_G(maps["osc_cubic"], 1.0)
    # root of u + u^3 = 1 (exact equilibrium x1 = u)
    assert u == pytest.approx(0.6823278, abs=5e-4)
    x = equilibrium_at(get_plant("osc_cubic"), maps["osc_cubic"], u)
    np.testing.assert_allclose(x, [u, 0.0], atol=1e-10)


def test_scalar_cubic_equilibrium(maps):
    x = equilibrium_at(get_plant("scalar_cubic"), maps["scalar_cubic"], 0.5)
    assert x[0] ** 3 + x[0] == pytest.approx(0.5, abs=1e-10)


@given(u=st.floats(-1, 1))
def test_batched_newton_matches_scalar(maps, u):
    plant = get_plant("scalar_cubic")
    a = equilibria(plant, maps["scalar_cubic"], np.array([u]))[0]
    b = equilibrium_at(plant, maps["scalar_cubic"], u)
    np.testing.assert_allclose(a, b, atol=1e-9)


@given(r=st.floats(-0.99, 0.99))
def test_G_monotone_and_invertible(maps, r):
    m = maps["linear1d"]
    assert np.all(np.diff(m.g_values) > 0)
    assert m.G(m.invert_G(r)) == pytest.approx(r, abs=1e-12)


def test_shifted_gain_vanishes_at_origin(maps):
    m = maps["osc_cubic"]
    u_r = m.invert_G(1.0)
    Gr = shifted_gain(m, u_r)
    assert Gr(0.0) == pytest.approx(0.0, abs=1e-12)
    assert Gr(0.1) > 0 > Gr(-0.1)


def test_reference_out_of_range(maps):
    with pytest.raises(ReferenceOutOfRange):
        maps["linear1d"].invert_G(2.0)
    with pytest.raises(ReferenceOutOfRange):
        maps["linear1d"].invert_G(1.0)


def test_decreasing_gain_detected():
    plant = PlantModel.from_polynomial("flip", 1, [[(-1.0, [1, 0]), (1.0, [0, 1])]], [(-1.0, [1])])
    with pytest.raises(Assumption2Violated):
        build_map(plant, SPEC)


def test_no_equilibrium():
    # x' = x^2 + 1 + u has no real equilibrium for u > -1
    plant = PlantModel.from_polynomial(
        "none", 1, [[(1.0, [2, 0]), (1.0, [0, 0]), (1.0, [0, 1])]], [(1.0, [1])])
    with pytest.raises(EquilibriumNotFound):
        solve_equilibrium(plant, 0.5, np.array([0.0]))


def test_down_direction_agrees(maps):
    down = build_map(get_plant("scalar_cubic"), SPEC, direction="down")
    np.testing.assert_allclose(down.xi_values, maps["scalar_cubic"].xi_values, atol=1e-9)
    with pytest.raises(InvalidArgument):
        build_map(get_plant("linear1d"), SPEC, grid_size=1)


def test_generic_plant_uses_differences():
    plant = get_plant("osc_cubic").generic()
    x = solve_equilibrium(plant, 0.4)
    np.testing.assert_allclose(x, [0.4, 0.0], atol=1e-9)
