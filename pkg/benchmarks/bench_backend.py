"""Compiled vs numpy backend: per-loop timings and one full renormalization step.

    python3 benchmarks/bench_backend.py [--repeat N] [--skip-step]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from fockrg import backend
from fockrg._fallback import bary_weights
from fockrg.initial import InitialSeriesConfig, ToyModel, initial_kernel
from fockrg.kernel_space import DEFAULT_GRID
from fockrg.rg import RGConfig, _block_transitions, renormalize


def _best(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def bench_loops(repeat: int) -> list[tuple[str, float, float, float]]:
    rng = np.random.default_rng(0)
    grid = DEFAULT_GRID
    rows = []

    table = rng.standard_normal((4096, grid.n_r)) + 1j * rng.standard_normal((4096, grid.n_r))
    r = rng.integers(0, 4096, 200_000)
    s = rng.uniform(0, 1, r.size)
    args = (table, grid.r_nodes, grid.r_bary, r, s)
    tc, a = _best(lambda: backend.bary_rows(*args, impl="compiled"), repeat)
    tn, b = _best(lambda: backend.bary_rows(*args, impl="numpy"), repeat)
    rows.append(("bary_rows (2e5 evals)", tc, tn, float(np.max(np.abs(a - b)))))

    src, tgt, emid, amp, slot, emid_u, eidx, d_out = _block_transitions(2, grid, 1, 0, 1)
    B = 2000
    vec = rng.standard_normal((B, grid.n_k)) + 0j
    n_slot = int(slot.max()) + 1
    tab = rng.standard_normal((B * n_slot, grid.n_r)) + 1j * rng.standard_normal((B * n_slot, grid.n_r))
    brow = np.arange(B, dtype=np.int64) * n_slot
    shift_u = np.linspace(0, 0.1, 40)
    sidx = rng.integers(0, shift_u.size, B)
    lw = bary_weights(grid.r_nodes, grid.r_bary, (shift_u[:, None] + emid_u[None, :]).ravel()).reshape(
        shift_u.size, emid_u.size, grid.n_r)
    largs = (vec, src, tgt, eidx, amp, slot, brow, sidx, lw, tab, d_out)
    tc, a = _best(lambda: backend.propagate_lagrange(*largs, impl="compiled"), repeat)
    tn, b = _best(lambda: backend.propagate_lagrange(*largs, impl="numpy"), repeat)
    rows.append((f"propagate_lagrange ({B} rows)", tc, tn, float(np.max(np.abs(a - b)))))

    shift = shift_u[sidx]
    bargs = (vec, src, tgt, emid, amp, slot, brow, shift, tab, grid.r_nodes, grid.r_bary, d_out)
    tc, a = _best(lambda: backend.propagate_bary(*bargs, impl="compiled"), repeat)
    tn, b = _best(lambda: backend.propagate_bary(*bargs, impl="numpy"), repeat)
    rows.append((f"propagate_bary ({B} rows)", tc, tn, float(np.max(np.abs(a - b)))))
    return rows


def bench_step() -> tuple[float, float, float]:
    w0 = initial_kernel(ToyModel(), InitialSeriesConfig()).kernel
    t = time.perf_counter()
    a = renormalize(w0, RGConfig(), impl="compiled").kernel
    tc = time.perf_counter() - t
    t = time.perf_counter()
    b = renormalize(w0, RGConfig(), impl="numpy").kernel
    tn = time.perf_counter() - t
    diff = max(float(np.max(np.abs(a.comps[k] - b.comps[k]))) for k in a.comps)
    return tc, tn, diff


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--skip-step", action="store_true")
    args = p.parse_args(argv)
    if backend._core is None:
        print("compiled extension not built; only the numpy backend is available")
        return
    print(f"{'kernel':<34}{'compiled [s]':>14}{'numpy [s]':>12}{'speedup':>10}{'max diff':>12}")
    rows = bench_loops(args.repeat)
    if not args.skip_step:
        tc, tn, d = bench_step()
        rows.append(("renormalize, reference kernel", tc, tn, d))
    for name, tc, tn, d in rows:
        print(f"{name:<34}{tc:>14.4f}{tn:>12.4f}{tn / tc:>10.1f}{d:>12.2e}")


if __name__ == "__main__":
    main()
