import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from fockrg import cutoffs


@given(st.floats(-1.0, 3.0))
def test_partition_of_unity(x):
    assert abs(cutoffs.chi(x) ** 2 + cutoffs.chibar(x) ** 2 - 1.0) < 1e-15


def test_plateaus():
    low = np.linspace(0.0, 0.75, 101)
    high = np.linspace(1.0, 5.0, 101)
    assert np.all(cutoffs.chi(low) == 1.0)
    assert np.all(cutoffs.chibar(low) == 0.0)
    assert np.all(cutoffs.chi(high) == 0.0)
    assert np.all(cutoffs.chibar(high) == 1.0)


def test_monotone_transition():
    x = np.linspace(0.75, 1.0, 2001)
    assert np.all(np.diff(cutoffs.chi(x)) <= 0.0)
    assert np.all(np.diff(cutoffs.chibar(x)) >= 0.0)


@settings(max_examples=50)
@given(st.floats(0.76, 0.99))
def test_derivatives_match_central_differences(x):
    h = 1e-6
    fd = (cutoffs.chi(x + h) - cutoffs.chi(x - h)) / (2 * h)
    fdb = (cutoffs.chibar(x + h) - cutoffs.chibar(x - h)) / (2 * h)
    assert abs(cutoffs.chi_prime(x) - fd) < 1e-6
    assert abs(cutoffs.chibar_prime(x) - fdb) < 1e-6


@given(st.floats(0.0, 0.2), st.floats(0.01, 0.25))
def test_scaled_cutoff(x, rho):
    assert cutoffs.chi_rho(x, rho) == cutoffs.chi(x / rho)
    assert cutoffs.chibar_rho(x, rho) == cutoffs.chibar(x / rho)


def test_sup_derivatives():
    a, b = cutoffs.sup_derivatives()
    x = np.linspace(0.75, 1.0, 200001)
    assert abs(a - b) < 1e-12 * a  # mirror images of each other
    assert abs(a - np.abs(cutoffs.chi_prime(x)).max()) < 1e-3 * a
