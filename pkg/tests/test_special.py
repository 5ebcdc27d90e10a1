import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from superarrival.special import erfc

mpmath.mp.dps = 40


def _ref(z):
    return float(mpmath.erfc(mpmath.mpf(float(z))))


def test_erfc_zero():
    assert erfc(0.0) == 1.0


def test_erfc_one_matches_reference_value():
    assert abs(erfc(1.0) - 0.1572992070502851) <= 1e-15


def test_erfc_minus_one_reflection():
    assert abs(erfc(-1.0) - (2.0 - erfc(1.0))) <= 1e-15


def test_against_high_precision_on_core_range():
    z = np.linspace(-6, 6, 1000)
    err = np.abs(erfc(z) - np.array([_ref(v) for v in z]))
    assert err.max() <= 1e-13


def test_against_high_precision_full_domain():
    z = np.linspace(-30, 30, 601)
    err = np.abs(erfc(z) - np.array([_ref(v) for v in z]))
    assert err.max() <= 1e-13


def test_underflow_is_zero_not_nan():
    v = erfc(np.array([27.0, 30.0, 40.0]))
    assert np.all(np.isfinite(v)) and np.all(v >= 0) and v[-1] < 1e-300


def test_reflection_grid():
    z = np.linspace(-6, 6, 1000)
    assert np.max(np.abs(erfc(-z) - (2.0 - erfc(z)))) <= 1e-13


def test_scalar_and_array_agree():
    z = np.array([-2.5, 0.3, 4.1])
    assert np.array_equal(erfc(z), np.array([erfc(float(v)) for v in z]))


def test_nan_propagates():
    assert math.isnan(erfc(float("nan")))


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=-30, max_value=30))
def test_reflection_property(z):
    assert abs(erfc(-z) - (2.0 - erfc(z))) <= 1e-13


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=-30, max_value=30), st.floats(min_value=1e-6, max_value=5))
def test_monotone_decreasing(z, h):
    assert erfc(z + h) <= erfc(z) + 1e-16


@pytest.mark.parametrize("z", [-5.99, -3.0, -2.999, 2.999, 3.0, 3.001, 5.5])
def test_switchover_neighbourhood(z):
    assert abs(erfc(z) - _ref(z)) <= 1e-13
