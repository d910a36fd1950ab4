import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from satint.errors import Diverged, InvalidArgument
from satint.plant import (
    PlantModel,
    get_plant,
    gradient_g,
    jacobian_u,
    jacobian_x,
    load_plant,
    open_loop_batch,
    plant_from_config,
    plant_to_config,
    simulate_constant_input,
    simulate_input,
)

from conftest import PLANT_NAMES


def riccati():
    # x' = x^2 + u escapes in finite time from x0 = 1, u = -0.5
    return PlantModel.from_polynomial("riccati", 1, [[(1.0, [2, 0]), (1.0, [0, 1])]], [(1.0, [1])])


def test_linear1d_closed_form():
    traj = simulate_constant_input(get_plant("linear1d"), [2.0], 0.5, 3.0, dt=1e-3)
    expected = 0.5 + 1.5 * np.exp(-traj.times)
    np.testing.assert_allclose(traj.states[:, 0], expected, atol=1e-10)
    np.testing.assert_allclose(traj.outputs, traj.states[:, 0])


def test_osc_cubic_settles_at_input():
    traj = simulate_constant_input(get_plant("osc_cubic"), [0.0, 0.0], 0.3, 40.0, dt=1e-2)
    np.testing.assert_allclose(traj.final_state, [0.3, 0.0], atol=1e-6)
    assert traj.outputs[-1] == pytest.approx(0.3 + 0.3**3, abs=1e-6)


def test_finite_escape_raises():
    with pytest.raises(Diverged) as err:
        simulate_constant_input(riccati(), [1.0], -0.5, 10.0, dt=1e-3)
    # exact escape time for x' = x^2 - 1/2 from 1
    a = np.sqrt(0.5)
    t_escape = np.arctanh(a / 1.0) / a
    assert err.value.escape_time == pytest.approx(t_escape, abs=0.05)


@pytest.mark.parametrize("name", PLANT_NAMES)
def test_compiled_matches_numpy(name):
    plant = get_plant(name)
    rng = np.random.default_rng(0)
    X0 = rng.uniform(-1, 1, (5, plant.n))
    U = rng.uniform(-1, 1, (5, 501))
    a, _ = open_loop_batch(plant, X0, U, 1e-2, 500, 10)
    b, _ = open_loop_batch(plant.generic(), X0, U, 1e-2, 500, 10)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("name", PLANT_NAMES)
@given(seed=st.integers(0, 10_000))
def test_analytic_derivatives_match_differences(name, seed):
    plant = get_plant(name)
    rng = np.random.default_rng(seed)
    x, u = rng.uniform(-2, 2, plant.n), float(rng.uniform(-1, 1))
    gen = plant.generic()
    np.testing.assert_allclose(jacobian_x(plant, x, u), jacobian_x(gen, x, u), rtol=1e-5, atol=1e-6)
    np.testing.assert_allclose(jacobian_u(plant, x, u), jacobian_u(gen, x, u), rtol=1e-5, atol=1e-6)
    np.testing.assert_allclose(gradient_g(plant, x), gradient_g(gen, x), rtol=1e-5, atol=1e-6)


def test_simulate_input_tracks_ramp():
    dt = 1e-3
    t = np.arange(2001) * dt
    traj = simulate_input(get_plant("linear1d"), [0.0], 0.1 * t, dt)
    # x' = -x + 0.1 t  =>  x = 0.1 (t - 1 + e^{-t})
    np.testing.assert_allclose(traj.states[:, 0], 0.1 * (t - 1 + np.exp(-t)), atol=1e-10)


def test_bad_inputs():
    plant = get_plant("osc_cubic")
    with pytest.raises(InvalidArgument):
        simulate_constant_input(plant, [0.0], 0.0, 1.0)
    with pytest.raises(InvalidArgument):
        simulate_constant_input(plant, [0.0, 0.0], 0.0, -1.0)
    with pytest.raises(InvalidArgument):
        get_plant("nope")


@pytest.mark.parametrize("name", PLANT_NAMES)
def test_config_round_trip(name, tmp_path):
    plant = get_plant(name)
    path = tmp_path / "plant.json"
    path.write_text(json.dumps(plant_to_config(plant)))
    again = load_plant(str(path))
    x = np.array([0.3, -0.2][: plant.n])
    np.testing.assert_allclose(again.f(x, 0.4), plant.f(x, 0.4))
    assert again.g(x) == pytest.approx(plant.g(x))
    assert again.u_bounds == plant.u_bounds


def test_config_errors(tmp_path):
    with pytest.raises(InvalidArgument):
        plant_from_config({"n": 1, "f": [[{"coeff": 1.0}]], "g": []})
    with pytest.raises(InvalidArgument):
        plant_from_config({"n": 1, "g": []})
    with pytest.raises(InvalidArgument):
        load_plant(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(InvalidArgument):
        load_plant(str(bad))
