"""Truncated bosonic Fock space over quadrature modes."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import backend
from .kernel_space import DEFAULT_GRID, Kernel, KernelSequence, RadialGrid, SampledSequence

ENERGY_TOL = 1e-12


class DiscreteFockSpace:
    """Occupation-number basis with total photon number <= n_ph_max.

    States are ordered by photon number, then lexicographically as sorted mode
    tuples, so the vacuum has index 0. With ``e_max`` set, only states of field
    energy <= e_max are kept.
    """

    def __init__(self, n_ph_max: int, grid: RadialGrid = DEFAULT_GRID, e_max: float | None = None):
        if n_ph_max < 0:
            raise ValueError("n_ph_max must be non-negative")
        self.grid = grid
        self.n_modes = grid.n_k
        self.n_ph_max = int(n_ph_max)
        self.e_max = e_max
        k = grid.k_nodes
        states = []
        for n in range(self.n_ph_max + 1):
            for s in itertools.combinations_with_replacement(range(self.n_modes), n):
                if e_max is None or sum(k[list(s)]) <= e_max + ENERGY_TOL:
                    states.append(s)
        self.basis = states
        self.dim = len(states)
        self.index = {s: i for i, s in enumerate(states)}
        occ = np.zeros((self.dim, self.n_modes), dtype=np.int64)
        for i, s in enumerate(states):
            for mode in s:
                occ[i, mode] += 1
        self.occupations = occ
        self.number = occ.sum(axis=1)
        self.energies = occ @ k

    def __repr__(self) -> str:
        return f"DiscreteFockSpace(n_modes={self.n_modes}, n_ph_max={self.n_ph_max}, dim={self.dim})"

    @property
    def vacuum(self) -> np.ndarray:
        v = np.zeros(self.dim, complex)
        v[0] = 1.0
        return v

    @cached_property
    def reduced(self) -> np.ndarray:
        """Mask of states in the range of P_red (field energy <= 1)."""
        return self.energies <= 1.0 + ENERGY_TOL

    @cached_property
    def ladder(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Index/amplitude tables for adding and removing one photon per mode (-1 if absent)."""
        up = -np.ones((self.dim, self.n_modes), dtype=np.int64)
        up_amp = np.zeros((self.dim, self.n_modes))
        down = -np.ones((self.dim, self.n_modes), dtype=np.int64)
        down_amp = np.zeros((self.dim, self.n_modes))
        for i, s in enumerate(self.basis):
            for mode in range(self.n_modes):
                t = tuple(sorted(s + (mode,)))
                j = self.index.get(t)
                if j is not None:
                    up[i, mode] = j
                    up_amp[i, mode] = np.sqrt(self.occupations[i, mode] + 1)
                    down[j, mode] = i
                    down_amp[j, mode] = up_amp[i, mode]
        return up, up_amp, down, down_amp


@dataclass(frozen=True, eq=False)
class FockOperator:
    matrix: object
    space: DiscreteFockSpace

    def __post_init__(self):
        if self.matrix.shape != (self.space.dim, self.space.dim):
            raise ValueError("operator shape does not match the Fock space")

    def dense(self) -> np.ndarray:
        return self.matrix.toarray() if sp.issparse(self.matrix) else np.asarray(self.matrix)

    def adjoint(self) -> "FockOperator":
        return FockOperator(self.matrix.conj().T, self.space)

    def __matmul__(self, other):
        if isinstance(other, FockOperator):
            return FockOperator(self.matrix @ other.matrix, self.space)
        return self.matrix @ other


def _check_mode(space: DiscreteFockSpace, mode: int) -> None:
    if not 0 <= mode < space.n_modes:
        raise IndexError(f"mode {mode} out of range for {space.n_modes} modes")


def creation(space: DiscreteFockSpace, mode: int) -> FockOperator:
    _check_mode(space, mode)
    up, amp, _, _ = space.ladder
    src = np.flatnonzero(up[:, mode] >= 0)
    mat = sp.csr_matrix((amp[src, mode].astype(complex), (up[src, mode], src)),
                        shape=(space.dim, space.dim))
    return FockOperator(mat, space)


def annihilation(space: DiscreteFockSpace, mode: int) -> FockOperator:
    return creation(space, mode).adjoint()


def free_field(space: DiscreteFockSpace) -> FockOperator:
    return FockOperator(sp.diags(space.energies.astype(complex)).tocsr(), space)


def pull_through_check(space: DiscreteFockSpace, f, mode: int) -> float:
    """Frobenius norm of f(H_f) a*(k) - a*(k) f(H_f + k) on the capped space."""
    c = creation(space, mode).matrix
    k = space.grid.k_nodes[mode]
    left = sp.diags(np.asarray(f(space.energies), dtype=complex)) @ c
    right = c @ sp.diags(np.asarray(f(space.energies + k), dtype=complex))
    diff = (left - right).tocoo()
    return float(np.sqrt(np.sum(np.abs(diff.data) ** 2))) if diff.nnz else 0.0


@dataclass(frozen=True)
class Transitions:
    """Matrix elements of a*(X) a(Y) between basis states, one row per ordered mode tuple.

    ``amp`` includes the bosonic factors and the discrete weights sqrt(mu/k) per
    internal mode; ``slot`` is the C-order flat index of (x_1..x_p, y_1..y_q).
    """

    p: int
    q: int
    src: np.ndarray
    tgt: np.ndarray
    emid: np.ndarray
    amp: np.ndarray
    slot: np.ndarray

    @property
    def size(self) -> int:
        return self.src.size


def _expand(cur, amp, digits, table, table_amp, modes_weight):
    rows, cols = np.nonzero(table[cur] >= 0)
    new_cur = table[cur[rows], cols]
    new_amp = amp[rows] * table_amp[cur[rows], cols] * modes_weight[cols]
    return new_cur, new_amp, rows, cols


_TRANSITION_CACHE: dict = {}


def transitions(space: DiscreteFockSpace, p: int, q: int, reduced: bool = True,
                src_states: np.ndarray | None = None) -> Transitions:
    """All nonzero <t| a*(x_1)..a*(x_p) a(y_1)..a(y_q) |s> with discrete weights."""
    key = (id(space), p, q, reduced, None if src_states is None else src_states.tobytes())
    hit = _TRANSITION_CACHE.get(key)
    if hit is not None and hit[0] is space:
        return hit[1]
    up, up_amp, down, down_amp = space.ladder
    wmode = np.sqrt(space.grid.mu / space.grid.k_nodes)
    if src_states is None:
        src = np.flatnonzero(space.reduced) if reduced else np.arange(space.dim)
    else:
        src = np.asarray(src_states, dtype=np.int64)
    cur = src.copy()
    amp = np.ones(src.size)
    digits = np.zeros((src.size, p + q), dtype=np.int64)
    for pos in range(p + q - 1, p - 1, -1):
        cur, amp, rows, cols = _expand(cur, amp, digits, down, down_amp, wmode)
        src, digits = src[rows], digits[rows]
        digits[:, pos] = cols
    mid = cur
    for pos in range(p - 1, -1, -1):
        cur, amp, rows, cols = _expand(cur, amp, digits, up, up_amp, wmode)
        src, mid, digits = src[rows], mid[rows], digits[rows]
        digits[:, pos] = cols
    tgt = cur
    if reduced:
        keep = space.reduced[tgt]
        src, tgt, mid, amp, digits = src[keep], tgt[keep], mid[keep], amp[keep], digits[keep]
    slot = np.zeros(src.size, dtype=np.int64)
    for pos in range(p + q):
        slot = slot * space.n_modes + digits[:, pos]
    out = Transitions(p, q, src, tgt, space.energies[mid], amp, slot)
    _TRANSITION_CACHE[key] = (space, out)
    return out


def _kernel_table(values: np.ndarray) -> np.ndarray:
    """Reorder kernel values (r, slots...) into rows (slots) x columns (r)."""
    return np.ascontiguousarray(np.moveaxis(values, 0, -1).reshape(-1, values.shape[0]))


def sector_matrix(w: Kernel, space: DiscreteFockSpace, r_shift: float = 0.0) -> sp.csr_matrix:
    """H_{m,n}(w) on the capped space, with P_red on both sides."""
    if w.grid != space.grid:
        raise ValueError("grid mismatch between kernel and Fock space")
    tr = transitions(space, w.m, w.n, reduced=True)
    grid = w.grid
    vals = backend.bary_rows(_kernel_table(w.values), grid.r_nodes, grid.r_bary,
                             tr.slot, tr.emid + r_shift)
    return sp.csr_matrix((tr.amp * vals, (tr.tgt, tr.src)), shape=(space.dim, space.dim))


def assemble_H(w, z: complex | None, space: DiscreteFockSpace) -> FockOperator:
    """Matrix of H(w) = sum over sectors of P_red H_{m,n}(w_{m,n}) P_red."""
    if isinstance(w, SampledSequence):
        if z is None:
            raise ValueError("a sampled sequence needs a spectral parameter")
        w = w.at(z)
    if w.grid != space.grid:
        raise ValueError("grid mismatch between kernel sequence and Fock space")
    total = sp.csr_matrix((space.dim, space.dim), dtype=complex)
    for (m, n), k in sorted(w.components.items()):
        if not np.any(k.values):
            continue
        total = total + sector_matrix(k, space)
    return FockOperator(total.tocsr(), space)


def sharp_quadrature_norm(w: Kernel, space: DiscreteFockSpace) -> float:
    """Quadrature analogue of the form-bound norm of a kernel.

    Squares |w|^2 times the products of (r + partial momentum sums), takes the
    sup over r, and sums over nodes with weight mu/k^2 per slot.
    """
    grid = w.grid
    m, n = w.m, w.n
    r = np.unique(np.concatenate([grid.r_fine, space.energies[space.reduced]]))
    vals = np.tensordot(grid.r_interp_matrix(r), w.values, axes=(1, 0))
    d = m + n
    k = grid.k_nodes

    def axis(a):
        return k.reshape((1,) * (a + 1) + (-1,) + (1,) * (d - a - 1))

    weight = np.abs(vals) ** 2
    rr = r.reshape((-1,) + (1,) * d)
    partial = np.zeros((1,) * (d + 1))
    for a in range(m):
        partial = partial + axis(a)
        weight = weight * (rr + partial)
    partial = np.zeros((1,) * (d + 1))
    for b in range(n):
        partial = partial + axis(m + b)
        weight = weight * (rr + partial)
    sup = weight.max(axis=0)
    meas = np.ones(())
    for a in range(d):
        meas = meas[..., None] * (grid.mu / k**2)
    return float(np.sqrt(np.sum(meas * sup)))


def trivial_identity_residual(space: DiscreteFockSpace, phi: np.ndarray, n: int = 1) -> float:
    """|LHS - RHS| for the weighted annihilation identity of order n.

    LHS sums prod_l k_l ||prod_l (H_f + k_1 + .. + k_l)^(-1/2) b_1..b_n phi||^2 over
    ordered mode tuples; RHS is the squared norm of the part of phi with at
    least n photons (for n = 1, the part orthogonal to the vacuum).
    """
    k = space.grid.k_nodes
    a = [annihilation(space, i).matrix for i in range(space.n_modes)]
    E = space.energies
    # the mode applied last carries the first partial sum
    states = [(phi.astype(complex), (), 1.0)]
    for _ in range(n):
        nxt = []
        for vec, ks, wt in states:
            for i in range(space.n_modes):
                v = a[i] @ vec
                if np.any(v):
                    nxt.append((v, (k[i],) + ks, wt * k[i]))
        states = nxt
    out = []
    for v, ks, wt in states:
        for s in np.cumsum(ks):
            v = v / np.sqrt(E + s)
        out.append((v, None, wt))
    states = out
    lhs = sum(wt * np.vdot(v, v).real for v, _, wt in states)
    rhs = float(np.sum(np.abs(phi[space.number >= n]) ** 2))
    return abs(lhs - rhs)


@dataclass(frozen=True)
class SharpBoundVerdict:
    operator_norm: float
    sharp_bound: float
    identity_residual: float
    holds: bool

    @property
    def slack(self) -> float:
        return self.sharp_bound - self.operator_norm


def sharp_bound_check(w: Kernel, space: DiscreteFockSpace, n_vectors: int = 20,
                      seed: int = 0) -> SharpBoundVerdict:
    """Check ||H_{m,n}(w)|| <= ||w||_sharp and the annihilation identity on random vectors."""
    mat = sector_matrix(w, space).toarray()
    norm = float(np.linalg.norm(mat, 2)) if mat.size else 0.0
    bound = sharp_quadrature_norm(w, space)
    rng = np.random.default_rng(seed)
    res = 0.0
    for _ in range(n_vectors):
        phi = rng.normal(size=space.dim) + 1j * rng.normal(size=space.dim)
        phi /= np.linalg.norm(phi)
        res = max(res, trivial_identity_residual(space, phi, 1))
    holds = norm <= bound * (1 + 1e-12) + 1e-14 and res <= 1e-10
    return SharpBoundVerdict(norm, bound, res, holds)


def exact_ground_state(matrix, herm_tol: float = 1e-10, dense_limit: int = 5000):
    """Lowest eigenpair of a self-adjoint matrix (dense up to dense_limit, else Lanczos)."""
    A = matrix.matrix if isinstance(matrix, FockOperator) else matrix
    diff = A - A.conj().T
    asym = (np.abs(diff.data).max() if diff.nnz else 0.0) if sp.issparse(diff) else np.abs(diff).max()
    if asym > herm_tol:
        raise ValueError(f"operator not self-adjoint (deviation {asym:.2e})")
    n = A.shape[0]
    if n <= dense_limit:
        M = A.toarray() if sp.issparse(A) else np.asarray(A)
        vals, vecs = sla.eigh(M, subset_by_index=[0, 0])
        e, v = vals[0], vecs[:, 0]
    else:
        try:
            vals, vecs = spla.eigsh(sp.csr_matrix(A), k=1, which="SA", tol=1e-14, maxiter=20000)
        except spla.ArpackNoConvergence as exc:
            raise RuntimeError("eigensolver did not converge") from exc
        e, v = vals[0], vecs[:, 0]
    k = int(np.argmax(np.abs(v)))
    v = v * (abs(v[k]) / v[k])
    return float(np.real(e)), v / np.linalg.norm(v)


def export_triplets(path, op) -> None:
    """Write 'row col re im' lines (1-based indices) after a 'rows cols nnz' header."""
    A = sp.coo_matrix(op.matrix if isinstance(op, FockOperator) else op)
    with Path(path).open("w") as fh:
        fh.write(f"{A.shape[0]} {A.shape[1]} {A.nnz}\n")
        for i, j, v in zip(A.row, A.col, A.data):
            fh.write(f"{i + 1} {j + 1} {float(v.real)!r} {float(v.imag)!r}\n")


def export_eigenpair(path, energy: complex, vector: np.ndarray, residual: float) -> None:
    payload = {"energy": [float(np.real(energy)), float(np.imag(energy))],
               "vector_norm": float(np.linalg.norm(vector)), "residual": float(residual),
               "dim": int(vector.size)}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def dump_vector(path, vector: np.ndarray, meta: dict | None = None) -> None:
    """Fock-vector binary format: JSON header plus complex128 amplitudes."""
    header = {"format": "fockrg-vector", "version": 1, "dim": int(vector.size)}
    header.update(meta or {})
    with Path(path).open("wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header)), vector=np.asarray(vector, complex))


def load_vector(path) -> tuple[np.ndarray, dict]:
    with np.load(path) as f:
        return f["vector"], json.loads(str(f["header"]))
