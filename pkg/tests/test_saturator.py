import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from satint.errors import InvalidArgument
from satint.saturator import (
    SampledSignal,
    SaturatorSpec,
    SaturatorState,
    eval_S,
    integrate,
    l1_deviation_bound_check,
    step,
)

SPEC = SaturatorSpec(-1.0, 1.0)
finite = st.floats(-1e6, 1e6, allow_nan=False)


def reference_S(spec, u, w):
    if u <= spec.u_min:
        return max(w, 0.0)
    if u >= spec.u_max:
        return min(w, 0.0)
    return w


@pytest.mark.parametrize("u,w,expected", [
    (0.0, 0.7, 0.7), (0.0, -0.7, -0.7),
    (-1.0, -2.0, 0.0), (-1.0, 3.0, 3.0),
    (1.0, 3.0, 0.0), (1.0, -3.0, -3.0),
    (-1.5, -1.0, 0.0), (1.5, 1.0, 0.0),
])
def test_truth_table(u, w, expected):
    assert eval_S(SPEC, u, w) == expected


@given(u=finite, w=finite)
def test_matches_branch_definition(u, w):
    assert eval_S(SPEC, u, w) == reference_S(SPEC, u, w)


def test_vectorized_shape():
    u = np.linspace(-2, 2, 12).reshape(3, 4)
    out = eval_S(SPEC, u, np.ones_like(u))
    assert out.shape == (3, 4)


@pytest.mark.parametrize("lo,hi", [(1.0, 1.0), (2.0, -1.0), (np.nan, 1.0), (-np.inf, 0.0)])
def test_spec_rejects_bad_bounds(lo, hi):
    with pytest.raises(InvalidArgument):
        SaturatorSpec(lo, hi)


def test_initial_state_outside_interval():
    with pytest.raises(InvalidArgument):
        SPEC.initial_state(1.5)
    assert SPEC.initial_state(0.25) == SaturatorState(0.25)


def test_step_examples():
    assert step(SaturatorState(1.0), SPEC, 5.0, 0.1).u == 1.0
    assert step(SaturatorState(0.95), SPEC, 1.0, 0.1).u == 1.0
    assert step(SaturatorState(0.0), SPEC, lambda t: -2.0, 0.1).u == pytest.approx(-0.2)
    with pytest.raises(InvalidArgument):
        step(SaturatorState(0.0), SPEC, 1.0, 0.0)


@given(u0=st.floats(-1, 1), w=st.lists(st.floats(-50, 50), min_size=2, max_size=60),
       dt=st.floats(1e-4, 0.5))
def test_integrate_stays_in_interval(u0, w, dt):
    u = integrate(SPEC, u0, np.array(w), dt)
    assert np.all(u >= SPEC.u_min) and np.all(u <= SPEC.u_max)


def test_integrate_batched_matches_loop():
    rng = np.random.default_rng(3)
    w = rng.normal(0, 3, (4, 200))
    batched = integrate(SPEC, np.zeros(4), w, 0.01)
    for i in range(4):
        np.testing.assert_array_equal(batched[i], integrate(SPEC, 0.0, w[i], 0.01))


def test_sampled_signal_helpers():
    sig = SampledSignal.piecewise_constant([0.0, 1.0], [2.0, -1.0], 2.0, 0.5)
    np.testing.assert_array_equal(sig.values, [2, 2, -1, -1, -1])
    assert sig.horizon == 2.0
    assert sig(0.25) == pytest.approx(2.0)
    with pytest.raises(InvalidArgument):
        SampledSignal(np.array([1.0]), 0.1)


def test_l1_identical_signals_have_zero_gap():
    w = SampledSignal.from_function(np.sin, 5.0, 1e-3)
    rep = l1_deviation_bound_check(SPEC, 0.2, 0.2, w, w, 5.0)
    assert rep.lhs == 0.0 and rep.holds


def test_l1_constant_offset_before_saturation():
    # two unsaturated ramps drifting apart linearly: gap equals the integral
    w1 = SampledSignal.from_function(lambda t: 0.0 * t, 1.0, 1e-3)
    w2 = SampledSignal.from_function(lambda t: 0.0 * t + 0.5, 1.0, 1e-3)
    rep = l1_deviation_bound_check(SPEC, 0.0, 0.0, w1, w2, 1.0)
    assert rep.lhs == pytest.approx(0.5, rel=1e-9)
    assert rep.rhs == pytest.approx(0.5, rel=1e-9)


@given(seed=st.integers(0, 2**32 - 1))
def test_l1_bound_property(seed):
    rng = np.random.default_rng(seed)
    dt = 1e-2
    w1 = SampledSignal(rng.normal(0, 4, 301), dt)
    w2 = SampledSignal(rng.normal(0, 4, 301), dt)
    u1, u2 = rng.uniform(-1, 1, 2)
    assert l1_deviation_bound_check(SPEC, u1, u2, w1, w2, 3.0).holds


def test_l1_rejects_mismatched_grids():
    a = SampledSignal(np.zeros(11), 0.1)
    b = SampledSignal(np.zeros(21), 0.05)
    with pytest.raises(InvalidArgument):
        l1_deviation_bound_check(SPEC, 0, 0, a, b, 1.0)
    with pytest.raises(InvalidArgument):
        l1_deviation_bound_check(SPEC, 0, 0, a, a, 2.0)
