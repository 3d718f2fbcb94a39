import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cvsm.errors import InvalidArgument, InvalidInput
from cvsm.numerics import check_finite, gaussian_init, make_rng, matvec, sigmoid_act, tanh_act, tanh_grad


def test_tanh_at_zero():
    assert np.array_equal(tanh_act(np.zeros(2)), np.zeros(2))
    assert tanh_grad(np.zeros(1))[0] == 1.0


def test_tanh_matches_reference_values():
    # reference: math.tanh in double precision, rounded to 6 places
    ref = [round(math.tanh(1.0), 6), round(math.tanh(2.0), 6)]
    assert ref == [0.761594, 0.964028]
    np.testing.assert_allclose(tanh_act(np.array([1.0, 2.0])), ref, atol=1e-6)


def test_sigmoid_values():
    assert sigmoid_act(np.zeros(1))[0] == 0.5
    assert abs(sigmoid_act(np.array([50.0]))[0] - 1.0) < 1e-12
    assert round(1 / (1 + math.exp(1.0)), 6) == 0.268941
    assert abs(sigmoid_act(np.array([-1.0]))[0] - 0.268941) < 1e-6


def test_sigmoid_does_not_overflow_on_large_negative():
    with np.errstate(over="raise"):
        out = sigmoid_act(np.array([-800.0, 800.0]))
    assert out[0] == 0.0 and out[1] == 1.0


@pytest.mark.parametrize("fn", [tanh_act, tanh_grad, sigmoid_act])
def test_nonfinite_input_rejected(fn):
    with pytest.raises(InvalidInput):
        fn(np.array([0.0, np.nan]))
    with pytest.raises(InvalidInput):
        fn(np.array([np.inf]))


@given(st.floats(-5, 5))
def test_tanh_grad_matches_numerical_derivative(z):
    h = 1e-6
    num = (math.tanh(z + h) - math.tanh(z - h)) / (2 * h)
    an = tanh_grad(np.array([z]))[0]
    assert abs(an - num) <= 1e-6 * max(1.0, abs(an) + abs(num))


def test_gaussian_zero_variance_is_constant():
    assert np.array_equal(gaussian_init(2, 2, 0.0, 0.0, make_rng(0)), np.zeros((2, 2)))


def test_gaussian_negative_variance_rejected():
    with pytest.raises(InvalidArgument):
        gaussian_init(2, 2, 0.0, -1.0, make_rng(0))


def test_gaussian_sample_moments():
    m = gaussian_init(100_000, 1, 0.0, 0.1, make_rng(3))
    assert abs(m.mean()) < 0.005
    # sigma2 is a variance
    assert abs(m.var() - 0.1) < 0.005


def test_gaussian_reproducible():
    a = gaussian_init(3, 4, 0.0, 0.1, make_rng(9))
    b = gaussian_init(3, 4, 0.0, 0.1, make_rng(9))
    assert np.array_equal(a, b)


def test_matvec_shape_check():
    assert matvec(np.ones((3, 2)), np.ones(2)).shape == (3,)
    with pytest.raises(InvalidArgument):
        matvec(np.ones((3, 2)), np.ones(3))


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=8))
def test_activations_finite_on_finite_input(xs):
    z = np.array(xs)
    for fn in (tanh_act, tanh_grad, sigmoid_act):
        assert np.all(np.isfinite(fn(z)))
    assert np.all(check_finite(z) == z)
