import os
import subprocess
import sys

import numpy as np
import pytest

from fockrg import backend
from fockrg._fallback import bary_weights
from fockrg.initial import InitialSeriesConfig, ToyModel, initial_kernel
from fockrg.kernel_space import RadialGrid
from fockrg.rg import RGConfig, _block_transitions, renormalize, v_term

SMALL = RadialGrid(n_r=9, n_k=4)
compiled = pytest.mark.skipif(backend._core is None, reason="compiled extension not built")


def test_barycentric_weights_reproduce_polynomials():
    c = np.array([0.5, -1.0, 3.0, 0.25])
    s = np.concatenate([np.linspace(0.0, 1.0, 50), SMALL.r_nodes, [1.5]])
    W = bary_weights(SMALL.r_nodes, SMALL.r_bary, s)
    got = W @ np.polynomial.polynomial.polyval(SMALL.r_nodes, c)
    want = np.where(s <= 1.0, np.polynomial.polynomial.polyval(np.clip(s, 0, 1), c), 0.0)
    assert np.max(np.abs(got - want)) <= 1e-13


@compiled
def test_bary_rows_agree(rng):
    table = rng.normal(size=(64, SMALL.n_r)) + 1j * rng.normal(size=(64, SMALL.n_r))
    rows = rng.integers(0, 64, 5000)
    s = np.concatenate([rng.uniform(-0.1, 1.1, 4990), SMALL.r_nodes[:5], [1.0, 0.0, 1.0 + 1e-13, 2.0, -1.0]])
    a = backend.bary_rows(table, SMALL.r_nodes, SMALL.r_bary, rows, s, impl="compiled")
    b = backend.bary_rows(table, SMALL.r_nodes, SMALL.r_bary, rows, s, impl="numpy")
    assert np.max(np.abs(a - b)) <= 1e-13


@compiled
@pytest.mark.parametrize("pqn", [(1, 0, 1), (0, 1, 2), (1, 1, 1), (2, 0, 0)])
def test_propagators_agree(rng, pqn):
    grid = SMALL
    src, tgt, emid, amp, slot, emid_u, eidx, d_out = _block_transitions(3, grid, *pqn)
    B = 40
    d_in = int(src.max()) + 1 if src.size else 1
    vec = rng.normal(size=(B, d_in)) + 1j * rng.normal(size=(B, d_in))
    n_slot = int(slot.max()) + 1 if slot.size else 1
    tab = rng.normal(size=(B * n_slot, grid.n_r)) + 1j * rng.normal(size=(B * n_slot, grid.n_r))
    brow = np.arange(B, dtype=np.int64) * n_slot
    shift_u = np.linspace(0.0, 0.2, 7)
    sidx = rng.integers(0, shift_u.size, B)
    lw = bary_weights(grid.r_nodes, grid.r_bary, (shift_u[:, None] + emid_u[None, :]).ravel()).reshape(
        shift_u.size, emid_u.size, grid.n_r)
    largs = (vec, src, tgt, eidx, amp, slot, brow, sidx, lw, tab, d_out)
    a = backend.propagate_lagrange(*largs, impl="compiled")
    b = backend.propagate_lagrange(*largs, impl="numpy")
    assert np.max(np.abs(a - b)) <= 1e-12
    bargs = (vec, src, tgt, emid, amp, slot, brow, shift_u[sidx], tab, grid.r_nodes, grid.r_bary, d_out)
    c = backend.propagate_bary(*bargs, impl="compiled")
    d = backend.propagate_bary(*bargs, impl="numpy")
    assert np.max(np.abs(c - d)) <= 1e-12
    # the two interpolation routes evaluate the same table at the same points
    assert np.max(np.abs(a - c)) <= 1e-12


@compiled
def test_renormalization_step_agrees():
    w0 = initial_kernel(ToyModel(), InitialSeriesConfig(grid=SMALL)).kernel
    a = renormalize(w0, RGConfig(), impl="compiled").kernel
    b = renormalize(w0, RGConfig(), impl="numpy").kernel
    for key in a.comps:
        assert np.max(np.abs(a.comps[key] - b.comps[key])) <= 1e-15
    seq = w0.at(0.01)
    tup = ((0, 0, 0, 2), (0, 2, 0, 0))
    a, b = v_term(tup, seq, 0.1, impl="compiled"), v_term(tup, seq, 0.1, impl="numpy")
    assert np.any(b)
    assert np.max(np.abs(a - b)) <= 1e-13 * np.max(np.abs(b))


def test_pure_python_switch():
    env = dict(os.environ, FOCKRG_PURE_PYTHON="1")
    res = subprocess.run([sys.executable, "-c", "from fockrg import backend; print(backend.NAME, backend._core)"],
                         capture_output=True, text=True, env=env)
    assert res.returncode == 0, res.stderr
    assert res.stdout.split() == ["numpy", "None"]
