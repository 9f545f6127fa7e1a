"""Toy atom-field model and its first Feshbach reduction to a kernel sequence."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import cutoffs
from .feshbach import FeshbachPair, feshbach_map
from .fock import DiscreteFockSpace, transitions
from .kernel_space import (DEFAULT_GRID, Kernel, KernelSequence, RadialGrid, SampledSequence,
                           project_support, symmetrize)
from .series import (TailCertificate, binomial_weight, external_groups, index_tuples, max_alive,
                     series_tail)

_MEMORY_BUDGET = 1 << 22  # complex entries per propagated block


def _default_quadratic(k, beta):
    return k * np.exp(1j * beta * k) / math.sqrt(2.0)


def _default_linear(k, beta):
    return k * np.cos(beta * k) / math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class ToyModel:
    """Finite atom coupled to a scalar field by linear and quadratic terms.

    H = H_at + H_f + g (A (x) [a*(f) + a(f)]) + g**2 :(a*(c) + a(c))**2:

    with form factors f = linear * kappa(k) * linear_fn(k, beta) and
    c = coupling * kappa(k) * coupling_fn(k, beta), where kappa = chi_1(k / cutoff).
    A is the nearest-neighbour hopping matrix (sigma_x for two levels), so the
    parity (-1)**level * (-1)**N is conserved.
    """

    g: complex = 0.05
    beta: float = 0.0
    coupling: float = 0.04
    linear: float = 0.04
    cutoff: float = 1.0
    atom_dim: int = 2
    H_at: np.ndarray | None = None
    coupling_fn: Callable | None = None
    linear_fn: Callable | None = None

    def __post_init__(self):
        if self.atom_dim < 2:
            raise ValueError("the atom needs at least two levels")
        H = np.diag(np.arange(self.atom_dim, dtype=float)) if self.H_at is None else np.asarray(self.H_at, complex)
        if H.shape != (self.atom_dim, self.atom_dim):
            raise ValueError("H_at has the wrong shape")
        if not np.allclose(H, H.conj().T, atol=1e-12):
            raise ValueError("H_at must be Hermitian")
        if np.any(np.abs(H - np.diag(np.diag(H))) > 1e-12):
            raise ValueError("H_at must be diagonal in the parity basis")
        lev = np.diag(H).real
        if abs(lev[0]) > 1e-12 or np.any(lev[1:] < 1.0 - 1e-12) or abs(lev[1:].min() - 1.0) > 1e-12:
            raise ValueError("H_at needs a simple ground level 0 at index 0 and gap exactly 1")
        if not 0.0 < self.cutoff <= 1.0:
            raise ValueError("cutoff must lie in (0, 1]")
        object.__setattr__(self, "H_at", np.diag(lev).astype(complex))

    @property
    def levels(self) -> np.ndarray:
        return np.diag(self.H_at).real

    @property
    def hopping(self) -> np.ndarray:
        d = self.atom_dim
        return (np.eye(d, k=1) + np.eye(d, k=-1)).astype(complex)

    def kappa(self, k):
        return cutoffs.chi(np.asarray(k, float) / self.cutoff)

    def quadratic_form(self, k) -> np.ndarray:
        fn = self.coupling_fn or _default_quadratic
        return self.coupling * self.kappa(k) * np.asarray(fn(np.asarray(k, float), self.beta), complex)

    def linear_form(self, k) -> np.ndarray:
        fn = self.linear_fn or _default_linear
        return self.linear * self.kappa(k) * np.asarray(fn(np.asarray(k, float), self.beta), complex)

    def with_(self, **kw) -> "ToyModel":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        g = complex(self.g)
        return {"g": [g.real, g.imag], "beta": self.beta, "coupling": self.coupling,
                "linear": self.linear, "cutoff": self.cutoff, "atom_dim": self.atom_dim,
                "custom_coupling": self.coupling_fn is not None or self.linear_fn is not None}


@dataclass(frozen=True)
class Sector:
    """One interaction term coef * atom (x) a*(u_1)..a*(u_m) a(v_1)..a(v_n)."""

    m: int
    n: int
    coef: complex
    atom: np.ndarray
    cre: tuple  # node values of each creation form factor
    ann: tuple

    @property
    def key(self) -> tuple[int, int]:
        return (self.m, self.n)

    @property
    def atom_is_identity(self) -> bool:
        return np.array_equal(self.atom, np.eye(self.atom.shape[0]))

    def profile(self, slots_cre: range, slots_ann: range) -> np.ndarray:
        """Outer product of the selected form factors, C-order over slots."""
        out = np.ones(())
        for i in slots_cre:
            out = np.multiply.outer(out, self.cre[i])
        for j in slots_ann:
            out = np.multiply.outer(out, self.ann[j])
        return out


def model_sectors(model: ToyModel, grid: RadialGrid = DEFAULT_GRID) -> dict:
    k = grid.k_nodes
    c = model.quadratic_form(k)
    f = model.linear_form(k)
    for name, v in (("coupling", c), ("linear", f)):
        if not np.all(np.isfinite(v)):
            raise ValueError(f"{name} form factor is not finite on the grid")
    g = complex(model.g)
    I = np.eye(model.atom_dim, dtype=complex)
    A = model.hopping
    out = {}
    if np.any(f) and g != 0:
        out[(1, 0)] = Sector(1, 0, g, A, (f,), ())
        out[(0, 1)] = Sector(0, 1, g, A, (), (f.conj(),))
    if np.any(c) and g != 0:
        out[(2, 0)] = Sector(2, 0, g * g, I, (c, c), ())
        out[(0, 2)] = Sector(0, 2, g * g, I, (), (c.conj(), c.conj()))
        out[(1, 1)] = Sector(1, 1, 2 * g * g, I, (c,), (c.conj(),))
    return out


@dataclass(frozen=True, eq=False)
class InteractionKernels:
    """Atom-matrix valued interaction kernels and their ground-state projections."""

    sectors: dict
    projected: KernelSequence

    def atom_valued(self, key) -> np.ndarray:
        s = self.sectors[key]
        prof = s.profile(range(s.m), range(s.n))
        return s.coef * np.multiply.outer(s.atom, prof)


def interaction_kernels(model: ToyModel, grid: RadialGrid = DEFAULT_GRID, xi: float = 0.2) -> InteractionKernels:
    sectors = model_sectors(model, grid)
    comps = {}
    for key, s in sectors.items():
        vac = s.coef * s.atom[0, 0]
        vals = vac * s.profile(range(s.m), range(s.n))
        if key in ((1, 0), (0, 1)):
            if np.any(np.abs(vals) > 0):
                raise ValueError("projected m+n=1 kernels must vanish")
            continue
        comps[key] = Kernel(s.m, s.n, np.broadcast_to(vals, (grid.n_r,) + vals.shape), grid)
    comps[(0, 0)] = Kernel.from_function(0, 0, lambda r: r, grid)
    return InteractionKernels(sectors, KernelSequence(comps, xi=xi, grid=grid))


def model_hamiltonian(model: ToyModel, space: DiscreteFockSpace) -> sp.csr_matrix:
    """H_at (x) 1 + 1 (x) H_f + interaction on atom (x) capped Fock space (atom-major)."""
    D = space.dim
    H = sp.kron(sp.csr_matrix(model.H_at), sp.identity(D)) + sp.kron(
        sp.identity(model.atom_dim), sp.diags(space.energies.astype(complex)))
    for s in model_sectors(model, space.grid).values():
        tr = transitions(space, s.m, s.n, reduced=False)
        vals = tr.amp * s.coef * s.profile(range(s.m), range(s.n)).ravel()[tr.slot]
        M = sp.csr_matrix((vals, (tr.tgt, tr.src)), shape=(D, D))
        H = H + sp.kron(sp.csr_matrix(s.atom), M)
    return H.tocsr()


def free_hamiltonian(model: ToyModel, space: DiscreteFockSpace) -> sp.csr_matrix:
    D = space.dim
    return (sp.kron(sp.csr_matrix(model.H_at), sp.identity(D))
            + sp.kron(sp.identity(model.atom_dim), sp.diags(space.energies.astype(complex)))).tocsr()


def initial_partition(model: ToyModel, space: DiscreteFockSpace) -> tuple[np.ndarray, np.ndarray]:
    """Diagonals of chi = P_at (x) chi_1(H_f) and its complement."""
    chi = np.zeros((model.atom_dim, space.dim))
    chi[0] = cutoffs.chi(space.energies)
    chibar = np.sqrt(np.clip(1.0 - chi**2, 0.0, None))
    chibar[0] = cutoffs.chibar(space.energies)
    return chi.ravel(), chibar.ravel()


def initial_feshbach_matrix(model: ToyModel, z: complex, space: DiscreteFockSpace) -> np.ndarray:
    """F_chi(H - z, H_0 - z) on the atom ground block, by dense block elimination."""
    H = model_hamiltonian(model, space) - z * sp.identity(model.atom_dim * space.dim)
    T = free_hamiltonian(model, space) - z * sp.identity(model.atom_dim * space.dim)
    chi, chibar = initial_partition(model, space)
    F = feshbach_map(FeshbachPair(H, T, chi, chibar, check=False))
    return np.asarray(F)[: space.dim, : space.dim]


@dataclass(frozen=True, eq=False)
class InitialSeriesConfig:
    """Truncation of the initial series.

    ``L_max`` is used for the vacuum sector, ``L_int`` for sectors with M+N >= 1.
    """

    L_max: int = 4
    L_int: int = 2
    M_max: int = 2
    xi: float = 0.2
    n_z: int = 16
    radius: float = 0.3
    grid: RadialGrid = field(default=DEFAULT_GRID)
    g_max: float = 0.1

    def __post_init__(self):
        if self.L_max < 2 or self.L_int < 1 or self.L_int > self.L_max:
            raise ValueError("need L_max >= 2 and 1 <= L_int <= L_max")
        if not 0.0 < self.radius < 0.5:
            raise ValueError("z samples must lie in the disc of radius 1/2")
        if self.M_max < 2:
            raise ValueError("M_max must be at least 2")

    @property
    def z_samples(self) -> np.ndarray:
        return SampledSequence.contour(self.n_z, self.radius)

    def L_for(self, M: int, N: int) -> int:
        return self.L_max if M + N == 0 else self.L_int

    def to_dict(self) -> dict:
        return {"L_max": self.L_max, "L_int": self.L_int, "M_max": self.M_max, "xi": self.xi,
                "n_z": self.n_z, "radius": self.radius, "grid": self.grid.to_dict(),
                "g_max": self.g_max}


class _InternalSpace:
    def __init__(self, cap: int, grid: RadialGrid):
        self.space = DiscreteFockSpace(cap, grid)
        n = self.space.number
        self.starts = np.searchsorted(n, np.arange(cap + 2))

    def block(self, n: int) -> slice:
        return slice(int(self.starts[n]), int(self.starts[n + 1]))

    def energies(self, n: int) -> np.ndarray:
        return self.space.energies[self.block(n)]


@lru_cache(maxsize=8)
def _internal_space(cap: int, grid: RadialGrid) -> _InternalSpace:
    return _InternalSpace(cap, grid)


def _factor_matrix(isp: _InternalSpace, prof: np.ndarray, p: int, q: int, n_in: int) -> sp.csr_matrix:
    """Internal part of one factor as a map between photon-number blocks."""
    bi = isp.block(n_in)
    bo = isp.block(n_in - q + p)
    tr = transitions(isp.space, p, q, reduced=False, src_states=np.arange(bi.start, bi.stop))
    vals = tr.amp * prof.ravel()[tr.slot]
    return sp.csr_matrix((vals, (tr.tgt - bo.start, tr.src - bi.start)),
                         shape=(bo.stop - bo.start, bi.stop - bi.start))


def _resolvent(levels: np.ndarray, x: np.ndarray, z: np.ndarray) -> np.ndarray:
    """chibar^(I)(x)**2 / (eps_a + x - z) per atom level, shape (A,) + x.shape."""
    out = np.empty((levels.size,) + np.broadcast(x, z).shape, complex)
    cb2 = cutoffs.chibar(x) ** 2
    out[0] = np.where(cb2 > 0.0, cb2 / np.where(cb2 > 0.0, x - z, 1.0), 0.0)
    for a in range(1, levels.size):
        out[a] = 1.0 / (levels[a] + x - z)
    return out


def _shifts(tup, grid: RadialGrid) -> tuple[np.ndarray, list[np.ndarray]]:
    """External momentum shifts S_l, l = 0..L, flattened over the external slots."""
    k = grid.k_nodes
    cre, ann = external_groups(tup)
    slots = [("c", g) for g in cre] + [("a", g) for g in ann]
    d = len(slots)
    shape = (grid.n_k,) * d
    L = len(tup)
    S = []
    for l in range(L + 1):
        s = np.zeros(shape)
        for j, (kind, g) in enumerate(slots):
            if (kind == "a" and g <= l) or (kind == "c" and g > l):
                s = s + k.reshape((1,) * j + (-1,) + (1,) * (d - j - 1))
        S.append(np.broadcast_to(s, shape).ravel())
    return np.zeros(()), S


class _InitialEngine:
    """Evaluates vacuum expectations of alternating products of interaction factors."""

    def __init__(self, model: ToyModel, grid: RadialGrid):
        self.model = model
        self.grid = grid
        self.sectors = model_sectors(model, grid)
        self.levels = model.levels
        self._mats: dict = {}

    def factor(self, isp, key, p, q, n_in):
        ck = (id(isp), key, p, q, n_in)
        M = self._mats.get(ck)
        if M is None:
            s = self.sectors[key]
            a, b = key
            prof = s.profile(range(a - p, a), range(b - q, b))
            M = _factor_matrix(isp, prof, p, q, n_in)
            self._mats[ck] = M
        return M

    def ext_profile(self, tup) -> np.ndarray:
        out = np.ones(())
        coef = 1.0 + 0j
        cre_parts, ann_parts = [], []
        for (m, p, n, q) in tup:
            s = self.sectors[(m + p, n + q)]
            coef *= s.coef
            cre_parts += [s.cre[i] for i in range(m)]
            ann_parts += [s.ann[j] for j in range(n)]
        for v in cre_parts + ann_parts:
            out = np.multiply.outer(out, v)
        return coef * out.ravel()

    def amplitude(self, tup, z: np.ndarray, r: np.ndarray) -> np.ndarray:
        """V for all (z, r, external nodes); shape (Nz, n_r, n_ext)."""
        L = len(tup)
        cap = max_alive(tup)
        isp = _internal_space(max(cap, 1), self.grid)
        _, S = _shifts(tup, self.grid)
        n_ext = S[0].size
        mid = np.stack(S[1:L], axis=1) if L > 1 else np.zeros((n_ext, 0))
        uniq, inv = np.unique(mid, axis=0, return_inverse=True)
        inv = np.asarray(inv).ravel()
        Nz, Nr, Nu = z.size, r.size, uniq.shape[0]
        zz = np.repeat(z, Nr * Nu)
        rr = np.tile(np.repeat(r, Nu), Nz)
        uu = np.tile(np.arange(Nu), Nz * Nr)
        B = zz.size
        A = self.levels.size
        dmax = max(isp.block(n).stop - isp.block(n).start for n in range(cap + 1))
        step = max(1, _MEMORY_BUDGET // max(1, A * dmax))
        G = np.empty(B, complex)
        for lo in range(0, B, step):
            sl = slice(lo, min(B, lo + step))
            G[sl] = self._chain(tup, isp, zz[sl], rr[sl], uniq[uu[sl]])
        G = G.reshape(Nz, Nr, Nu)[:, :, inv]
        ends = cutoffs.chi(r[:, None] + S[0][None, :]) * cutoffs.chi(r[:, None] + S[L][None, :])
        return G * (ends * self.ext_profile(tup)[None, :])[None]

    def _chain(self, tup, isp, z, r, mid):
        L = len(tup)
        A = self.levels.size
        vec = np.zeros((A, 1, z.size), complex)
        vec[0, 0, :] = 1.0
        alive = 0
        for l in range(L, 0, -1):
            m, p, n, q = tup[l - 1]
            key = (m + p, n + q)
            M = self.factor(isp, key, p, q, alive)
            atom = self.sectors[key].atom
            new = np.stack([M @ vec[a] for a in range(A)])
            if not self.sectors[key].atom_is_identity:
                new = np.einsum("ij,jdb->idb", atom, new)
            alive = alive - q + p
            vec = new
            if l > 1:
                x = isp.energies(alive)[:, None] + (r + mid[:, l - 2])[None, :]
                vec = vec * _resolvent(self.levels, x, z[None, :])
        return vec[0, 0]


def V_term(indices, model: ToyModel, z, grid: RadialGrid = DEFAULT_GRID) -> np.ndarray:
    """Vacuum expectation of one index tuple on the grid.

    Returns shape (len(z), n_r, n_k, ..., n_k) with external creation slots first.
    Factors whose sector vanishes give zero.
    """
    indices = tuple(tuple(int(v) for v in f) for f in indices)
    for f in indices:
        if not 1 <= sum(f) <= 2:
            raise ValueError("each factor needs 1 <= m+p+n+q <= 2")
    eng = _InitialEngine(model, grid)
    z = np.atleast_1d(np.asarray(z, complex))
    M = sum(f[0] for f in indices)
    N = sum(f[2] for f in indices)
    shape = (z.size, grid.n_r) + (grid.n_k,) * (M + N)
    if any((f[0] + f[1], f[2] + f[3]) not in eng.sectors for f in indices):
        return np.zeros(shape, complex)
    alive = 0
    for m, p, n, q in reversed(indices):
        if q > alive:
            return np.zeros(shape, complex)
        alive += p - q
    if alive:
        return np.zeros(shape, complex)
    return eng.amplitude(indices, z, grid.r_nodes).reshape(shape)


@dataclass(frozen=True)
class InitialCertificate:
    tail: TailCertificate
    single_norms: dict
    t_F: float
    d_F: float
    ratio: float

    def to_dict(self) -> dict:
        return {"tail": self.tail.to_dict(), "single_norms": {f"{k[0]},{k[1]}": v for k, v in self.single_norms.items()},
                "t_F": self.t_F, "d_F": self.d_F, "ratio": self.ratio}


def _resolvent_bounds(model: ToyModel, z: np.ndarray) -> tuple[float, float]:
    """sup_x (x+1)|F(x)| and sup_x (x+1)|F'(x)| over atoms, x >= 0 and the z samples."""
    x = np.concatenate([np.linspace(0.0, 4.0, 16001), np.geomspace(4.0, 1e6, 400)])
    F = _resolvent(model.levels, x[None, :], z[:, None])
    h = 1e-6
    dF = (_resolvent(model.levels, x[None, :] + h, z[:, None])
          - _resolvent(model.levels, np.maximum(x[None, :] - h, 0.0), z[:, None]))
    dF /= (x[None, :] + h) - np.maximum(x[None, :] - h, 0.0)
    t = float(np.max((x + 1.0) * np.abs(F)))
    d = float(np.max((x + 1.0) * np.abs(dF)))
    return t, d


def single_factor_norms(model: ToyModel, grid: RadialGrid = DEFAULT_GRID) -> dict:
    """Bounds on (H_f+1)^{-1/2}-weighted operator norms of each interaction term."""
    k = grid.k_nodes
    wmode = grid.mu / k
    out = {}
    for key, s in model_sectors(model, grid).items():
        legs = list(s.cre) + list(s.ann)
        Avals = [float(np.sum(wmode * np.abs(h) ** 2 / k)) for h in legs]
        Bvals = [float(np.sum(wmode * np.abs(h) ** 2)) for h in legs]
        an = float(np.linalg.norm(s.atom, 2)) * abs(s.coef)
        if len(legs) == 1:
            nu = an * math.sqrt(max(Avals[0], Bvals[0]))
        elif key == (1, 1):
            nu = an * math.sqrt(Avals[0] * Avals[1])
        else:
            nu = an * math.sqrt(Avals[0]) * math.sqrt(max(Avals[1], Bvals[1]))
        out[key] = nu
    return out


def _initial_certificate(model: ToyModel, config: InitialSeriesConfig) -> InitialCertificate:
    norms = single_factor_norms(model, config.grid)
    t, d = _resolvent_bounds(model, config.z_samples)
    dchi, _ = cutoffs.sup_derivatives()

    def C(L):
        return 1.0 + 2.0 * dchi + (L - 1) * d / t

    def computed(M, N, L):
        if (M + N) % 2:
            return True  # odd sectors vanish identically by parity
        if M + N > config.M_max:
            return False
        return L <= config.L_for(M, N)

    tail = series_tail(norms, t, 2.0, C, 1.0, 1.0 / config.xi, computed, config.L_max)
    return InitialCertificate(tail, norms, t, d, tail.ratio)


def _sector_list(config: InitialSeriesConfig) -> list[tuple[int, int]]:
    return [(M, N) for s in range(0, config.M_max + 1, 2) for M in range(s + 1) for N in [s - M]]


def initial_terms(model: ToyModel, config: InitialSeriesConfig, z: np.ndarray | None = None,
                  L_override: int | None = None) -> dict:
    """Unsymmetrized w~_{M,N}(z) for M+N <= M_max, arrays of shape (Nz, n_r, k...)."""
    grid = config.grid
    z = config.z_samples if z is None else np.atleast_1d(np.asarray(z, complex))
    eng = _InitialEngine(model, grid)
    avail = set(eng.sectors)
    out = {}
    for (M, N) in _sector_list(config):
        shape = (z.size, grid.n_r) + (grid.n_k,) * (M + N)
        acc = np.zeros(shape, complex)
        L_top = L_override if L_override is not None else config.L_for(M, N)
        for L in range(1, L_top + 1):
            for tup in index_tuples(avail, M, N, L):
                v = eng.amplitude(tup, z, grid.r_nodes).reshape(shape)
                acc += (-1) ** (L + 1) * binomial_weight(tup) * v
        if (M, N) == (0, 0):
            acc += (grid.r_nodes[None, :] - z[:, None])
        out[(M, N)] = acc
    return out


@dataclass(frozen=True, eq=False)
class InitialResult:
    kernel: SampledSequence
    certificate: InitialCertificate
    model: ToyModel
    config: InitialSeriesConfig


def initial_kernel(model: ToyModel, config: InitialSeriesConfig = InitialSeriesConfig()) -> InitialResult:
    """w^(0) sampled on the z-contour, symmetrized and support-projected, with its tail bound."""
    if abs(model.g) > config.g_max:
        raise ValueError(f"|g| = {abs(model.g):.3g} exceeds g_max = {config.g_max}")
    grid = config.grid
    if model.g == 0 or not model_sectors(model, grid):
        w = SampledSequence.free(grid, config.xi, config.n_z, config.radius)
        cert = InitialCertificate(TailCertificate(0.0, 0.0, 0.0), {}, 0.0, 0.0, 0.0)
        return InitialResult(w, cert, model, config)
    cert = _initial_certificate(model, config)
    terms = initial_terms(model, config)
    comps = {}
    for (M, N), arr in terms.items():
        vals = np.empty_like(arr)
        for j in range(arr.shape[0]):
            vals[j] = project_support(symmetrize(Kernel(M, N, arr[j], grid))).values
        comps[(M, N)] = vals
    w = SampledSequence(config.z_samples, comps, config.xi, cert.tail.interaction,
                        cert.tail.vacuum, grid, config.radius)
    return InitialResult(w, cert, model, config)


def beta_derivatives_initial(model: ToyModel, config: InitialSeriesConfig, k: int = 2,
                             h: float = 0.05) -> dict:
    """Central-difference beta-derivatives of w^(0) with a stencil-halving diagnostic.

    Returns {"derivatives": {l: {sector: array}}, "stability": {l: max abs change}}.
    """
    if not 0 <= k <= 4:
        raise ValueError("derivative order must be between 0 and 4")

    def at(beta):
        return initial_kernel(model.with_(beta=beta), config).kernel.comps

    def stencil(step):
        pts = {j: at(model.beta + j * step) for j in range(-3, 4)}
        res = {}
        for l in range(k + 1):
            c = _central_weights(l)
            res[l] = {key: sum(c[j] * pts[j][key] for j in c) / step**l for key in pts[0]}
        return res

    coarse, fine = stencil(h), stencil(h / 2)
    stab = {l: max(float(np.max(np.abs(fine[l][key] - coarse[l][key]))) for key in fine[l])
            for l in fine}
    return {"derivatives": fine, "stability": stab}


def _central_weights(l: int) -> dict:
    """7-point central-difference weights for the l-th derivative."""
    offs = np.arange(-3, 4)
    if l == 0:
        return {0: 1.0}
    V = np.vander(offs, 7, increasing=True).T.astype(float)
    rhs = np.zeros(7)
    rhs[l] = math.factorial(l)
    w = np.linalg.solve(V, rhs)
    return {int(o): float(c) for o, c in zip(offs, w) if abs(c) > 1e-14}
