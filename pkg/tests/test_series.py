import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fockrg.series import (TailCertificate, binomial_weight, external_groups, index_tuples,
                           max_alive, series_tail)

SECTORS = [(2, 0), (1, 1), (0, 2), (1, 0), (0, 1)]


def _brute_force(sectors, M, N, L):
    """Every split of every sector choice, filtered by photon bookkeeping."""
    factors = []
    for a, b in sectors:
        for m in range(a + 1):
            for n in range(b + 1):
                factors.append((m, a - m, n, b - n))
    out = set()
    for tup in itertools.product(factors, repeat=L):
        if sum(f[0] for f in tup) != M or sum(f[2] for f in tup) != N:
            continue
        alive, ok = 0, True
        for m, p, n, q in reversed(tup):
            if q > alive:
                ok = False
                break
            alive += p - q
        if ok and alive == 0:
            out.add(tup)
    return sorted(out)


@pytest.mark.parametrize("M,N,L", [(0, 0, 1), (0, 0, 2), (0, 0, 3), (2, 0, 2), (1, 1, 2),
                                   (0, 2, 3), (1, 1, 3), (2, 2, 2), (0, 0, 4)])
def test_index_tuples_against_brute_force(M, N, L):
    assert list(index_tuples(SECTORS, M, N, L)) == _brute_force(SECTORS, M, N, L)


def test_index_tuples_even_sectors_only():
    even = [(2, 0), (1, 1), (0, 2)]
    assert list(index_tuples(even, 0, 0, 3)) == _brute_force(even, 0, 0, 3)
    assert index_tuples(even, 1, 0, 2) == ()


def test_bookkeeping_helpers():
    tup = ((0, 0, 1, 1), (0, 0, 0, 1), (1, 1, 0, 0), (0, 1, 0, 0))
    assert binomial_weight(tup) == 2 * 1 * 2 * 1
    assert max_alive(tup) == 2
    assert external_groups(tup) == ([3], [1])


def _tail(norms, L_max, unknown=0.0):
    return series_tail(norms, 3.0, 2.0, lambda L: 1.0 + L, 1.0, 5.0,
                       lambda M, N, L: (M + N) % 2 == 1 or (M + N <= 2 and L <= 2), L_max,
                       unknown=unknown)


def test_zero_norms_give_zero_tail():
    t = _tail({(2, 0): 0.0, (1, 1): 0.0}, 4)
    assert t == TailCertificate(0.0, 0.0, 0.0)


@settings(max_examples=40)
@given(st.floats(1e-6, 1e-3), st.floats(1e-6, 1e-3), st.integers(2, 5))
def test_tail_does_not_grow_with_more_explicit_orders(a, b, L):
    norms = {(2, 0): a, (0, 2): a, (1, 1): b}
    lo = _tail(norms, L)
    hi = _tail(norms, L + 1)
    # going from L to L+1 only moves terms from "beyond" to "enumerated but skipped"
    assert hi.interaction <= lo.interaction * (1 + 1e-12)
    assert hi.vacuum <= lo.vacuum * (1 + 1e-12)


@given(st.floats(1e-6, 1e-3), st.floats(0.0, 1e-3))
def test_unknown_input_only_increases_the_tail(a, u):
    norms = {(2, 0): a, (0, 2): a, (1, 1): a}
    base = _tail(norms, 3)
    more = _tail(norms, 3, unknown=u)
    assert more.interaction >= base.interaction
    assert more.vacuum >= base.vacuum


def test_divergent_series_is_rejected():
    with pytest.raises(ArithmeticError):
        _tail({(1, 1): 1.0}, 3)
