"""One renormalization step: spectral-parameter inversion and the renormalized kernels."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from . import backend, cutoffs
from ._fallback import bary_weights
from .fock import DiscreteFockSpace, transitions
from .kernel_space import (DEFAULT_GRID, Kernel, KernelSequence, RadialGrid, SampledSequence,
                           interaction_norm, measure_ball, project_support, sharp_norm, symmetrize)
from .series import (TailCertificate, binomial_weight, external_groups, index_tuples, max_alive,
                     series_tail)

_MEMORY_BUDGET = 1 << 22
_LAGRANGE_BUDGET = 1 << 23
_SUPPORT_TOL = 1e-12


class NewtonError(ArithmeticError):
    """Newton inversion of the spectral map failed."""


class BallViolation(ArithmeticError):
    """A kernel left the region where the renormalization map is defined."""


@dataclass(frozen=True)
class RGConfig:
    rho: float = 0.1
    xi: float = 0.2
    L_max: int = 4
    L_int: int = 2
    M_max: int = 2
    newton_tol: float = 1e-13
    newton_max_iter: int = 50
    n_z: int = 16
    radius: float = 0.3
    vacuum_only: bool = False  # keep only the (0,0) output; dropped sectors go to the tail

    def __post_init__(self):
        if not 0.0 < self.rho <= 0.25:
            raise ValueError("rho must lie in (0, 1/4]")
        if not 0.0 < self.xi <= 0.25:
            raise ValueError("xi must lie in (0, 1/4]")
        if self.L_max < 2 or not 1 <= self.L_int <= self.L_max:
            raise ValueError("need L_max >= 2 and 1 <= L_int <= L_max")
        if self.M_max < 2:
            raise ValueError("M_max must be at least 2")

    def L_for(self, M: int, N: int) -> int:
        return self.L_max if M + N == 0 else self.L_int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


# spectral map

def E_of(w, z: complex) -> complex:
    """-<Omega, H(w(z)) Omega> = -w_00(z, r=0)."""
    if isinstance(w, SampledSequence):
        return -w.vacuum_value(z)[0]
    return -complex(w[(0, 0)].values[0])


def _E_and_derivative(w: SampledSequence, z: complex) -> tuple[complex, complex]:
    val, der = w.vacuum_value(z)
    return -val, -der


@dataclass(frozen=True)
class SpectralMap:
    """Samples of E[w] and its z-derivative on a set of points."""

    z: np.ndarray
    E_values: np.ndarray
    dE_values: np.ndarray
    rho: float

    @classmethod
    def of(cls, w: SampledSequence, rho: float, z=None) -> "SpectralMap":
        z = np.concatenate([w.z, SampledSequence.interior_points() * (5 * rho / 8) / 0.3]) if z is None else np.asarray(z)
        vals = [_E_and_derivative(w, complex(p)) for p in z]
        return cls(np.asarray(z), np.array([v[0] for v in vals]), np.array([v[1] for v in vals]), rho)

    def derivative_deviation(self, radius: float | None = None) -> float:
        """max |dE/dz - 1| over the sample points inside |z| <= radius."""
        radius = 5 * self.rho / 8 if radius is None else radius
        mask = np.abs(self.z) <= radius + 1e-15
        return float(np.max(np.abs(self.dE_values[mask] - 1.0))) if mask.any() else 0.0

    def derivative_bound(self) -> float:
        rho = self.rho
        return 4 * rho / (4 - 5 * rho) ** 2

    def to_dict(self) -> dict:
        return {"max_dE_deviation": self.derivative_deviation(), "bound": self.derivative_bound(),
                "min_abs_dE_rho": float(np.min(np.abs(self.dE_values))) / self.rho}


@dataclass(frozen=True)
class NewtonResult:
    zeta: complex
    iterations: int
    residual: float


def invert_E(w: SampledSequence, rho: float, z_target: complex, tol: float = 1e-13,
             max_iter: int = 50, check_disc: bool = True) -> NewtonResult:
    """Solve E[w](zeta) / rho = z_target by Newton's method from zeta = rho * z_target."""
    z_target = complex(z_target)
    zeta = rho * z_target
    converged = False
    for it in range(1, max_iter + 1):
        E, dE = _E_and_derivative(w, zeta)
        if dE == 0:
            raise NewtonError("vanishing derivative of the spectral map")
        step = (E / rho - z_target) / (dE / rho)
        zeta -= step
        if converged:
            break
        if abs(step) <= tol * max(1.0, abs(zeta)) * rho:
            converged = True  # one more pass brings the residual to rounding level
    else:
        raise NewtonError(f"Newton did not converge for z = {z_target}")
    E, _ = _E_and_derivative(w, zeta)
    res = abs(E / rho - z_target)
    if check_disc and abs(zeta) >= 5 * rho / 8:
        raise NewtonError(f"I_rho(z) = {zeta} escaped the disc of radius 5 rho / 8")
    return NewtonResult(zeta, it, res)


# dilation

def dilation_one_particle(grid: RadialGrid, rho: float) -> np.ndarray:
    """Matrix of the one-photon map f -> rho**(-3/2) f(k / rho) in the normalized mode basis."""
    L = grid.k_interp_matrix(grid.k_nodes / rho)
    s = np.sqrt(grid.mu)
    return (s[:, None] * rho**-1.5 * L) / s[None, :]


def second_quantize(one: np.ndarray, space: DiscreteFockSpace) -> sp.csr_matrix:
    """Gamma(one) restricted to the basis of ``space`` (states outside it are dropped)."""
    up, up_amp, down, down_amp = space.ladder
    rows, cols, vals = [], [], []
    # |s> = prod_i b*_{s_i} Omega / sqrt(prod n!) ; Gamma b*_i Gamma^-1 = sum_j one[j, i] b*_j
    for col, st in enumerate(space.basis):
        vec = {(): 1.0 + 0j}
        for mode in st:
            nxt: dict = {}
            for occ, amp in vec.items():
                for j in np.flatnonzero(one[:, mode]):
                    key = tuple(sorted(occ + (int(j),)))
                    nxt[key] = nxt.get(key, 0.0) + amp * one[j, mode] * math.sqrt(occ.count(int(j)) + 1)
            vec = nxt
        norm = math.sqrt(float(np.prod([math.factorial(int(c)) for c in space.occupations[col] if c > 1]))) if st else 1.0
        for occ, amp in vec.items():
            i = space.index.get(occ)
            if i is not None and amp != 0:
                rows.append(i)
                cols.append(col)
                vals.append(amp / norm)
    return sp.csr_matrix((vals, (rows, cols)), shape=(space.dim, space.dim))


# W operators

def W_op_matrix(w: Kernel, p: int, q: int, r: float, K_ext=(), space: DiscreteFockSpace | None = None) -> sp.csr_matrix:
    """P_red int dX w(H_f + r, K, X) a*(x_1..x_p) a(y_1..y_q) P_red on the capped space.

    ``K_ext`` lists the external momenta: the first m - p are creation slots, the
    remaining n - q annihilation slots; they are interpolated in k.
    """
    m_ext, n_ext = w.m - p, w.n - q
    if m_ext < 0 or n_ext < 0 or len(K_ext) != m_ext + n_ext:
        raise ValueError("external momenta do not match the kernel arity")
    space = space or DiscreteFockSpace(p + q, w.grid)
    if space.grid != w.grid:
        raise ValueError("grid mismatch")
    grid = w.grid
    vals = w.values
    axes = [1 + i for i in range(m_ext)] + [1 + w.m + j for j in range(n_ext)]
    for ax, kx in zip(axes, K_ext):
        vals = np.tensordot(vals, grid.k_interp_matrix(np.array([kx]))[0], axes=(ax, 0))
        vals = np.expand_dims(vals, ax)
    sl = [slice(None)] + [0 if (1 + i) in axes else slice(None) for i in range(w.m + w.n)]
    vals = vals[tuple(sl)]
    table = np.ascontiguousarray(np.moveaxis(vals, 0, -1).reshape(-1, grid.n_r))
    tr = transitions(space, p, q, reduced=True)
    v = backend.bary_rows(table, grid.r_nodes, grid.r_bary, tr.slot, tr.emid + r)
    return sp.csr_matrix((tr.amp * v, (tr.tgt, tr.src)), shape=(space.dim, space.dim))


# renormalized kernels

class _Space:
    def __init__(self, cap: int, grid: RadialGrid):
        self.space = DiscreteFockSpace(cap, grid, e_max=1.0)
        self.starts = np.searchsorted(self.space.number, np.arange(cap + 2))

    def block(self, n: int) -> slice:
        return slice(int(self.starts[n]), int(self.starts[n + 1]))

    def energies(self, n: int) -> np.ndarray:
        return self.space.energies[self.block(n)]


@lru_cache(maxsize=8)
def _reduced_space(cap: int, grid: RadialGrid) -> _Space:
    return _Space(cap, grid)


@lru_cache(maxsize=256)
def _block_transitions(cap: int, grid: RadialGrid, p: int, q: int, n_in: int):
    isp = _reduced_space(cap, grid)
    bi, bo = isp.block(n_in), isp.block(n_in - q + p)
    tr = transitions(isp.space, p, q, reduced=True, src_states=np.arange(bi.start, bi.stop))
    emid_u, eidx = np.unique(tr.emid, return_inverse=True)
    return (tr.src - bi.start, tr.tgt - bo.start, tr.emid, tr.amp.astype(complex), tr.slot,
            emid_u, eidx.ravel(), bo.stop - bo.start)


def _ext_digits(n_ext_slots: int, n_k: int) -> np.ndarray:
    if n_ext_slots == 0:
        return np.zeros((1, 0), dtype=np.int64)
    return np.stack(np.unravel_index(np.arange(n_k**n_ext_slots), (n_k,) * n_ext_slots), axis=1)


class _RGEngine:
    """Vacuum expectations of alternating products of W and F operators, batched over z, r, K."""

    def __init__(self, seqs: list[KernelSequence], rho: float, grid: RadialGrid, impl: str | None = None):
        self.seqs = seqs
        self.rho = rho
        self.grid = grid
        self.impl = impl
        self.Nz = len(seqs)
        self.w00 = np.stack([s[(0, 0)].values for s in seqs])
        keys = set().union(*[s.components.keys() for s in seqs])
        self.avail = sorted(k for k in keys if sum(k) >= 1 and any(np.any(s[k].values) for s in seqs))
        self.Kd = grid.k_interp_matrix(rho * grid.k_nodes)
        self._tables: dict = {}

    def table(self, key, m, p, n, q) -> np.ndarray:
        ck = (key, m, p, n, q)
        if ck in self._tables:
            return self._tables[ck]
        a, b = key
        arr = np.stack([s[key].values for s in self.seqs])  # (z, r, cre..., ann...)
        ext_c = [2 + i for i in range(m)]
        int_c = [2 + i for i in range(m, a)]
        ext_a = [2 + a + j for j in range(n)]
        int_a = [2 + a + j for j in range(n, b)]
        arr = arr.transpose([0] + ext_c + ext_a + int_c + int_a + [1])
        for ax in range(1, 1 + m + n):
            arr = np.moveaxis(np.tensordot(self.Kd, arr, axes=(1, ax)), 0, ax)
        tab = np.ascontiguousarray(arr.reshape(-1, self.grid.n_r))
        self._tables[ck] = tab
        return tab

    def resolvent(self, jz: np.ndarray, x: np.ndarray) -> np.ndarray:
        """chibar_rho(x)**2 / w_00(x) per z-index, zero outside [0, 1]."""
        rho = self.rho
        out = np.zeros(x.shape, complex)
        cb2 = cutoffs.chibar_rho(x, rho) ** 2
        live = (cb2 > 0.0) & (x <= 1.0 + _SUPPORT_TOL)
        if not live.any():
            return out
        jj = np.broadcast_to(jz, x.shape)[live]
        den = backend.bary_rows(self.w00, self.grid.r_nodes, self.grid.r_bary, jj,
                                np.clip(x[live], 0.0, 1.0), impl=self.impl)
        if np.any(np.abs(den) < 3 * rho / 32):
            raise BallViolation("|w_00| fell below 3 rho / 32 on the resolvent range")
        out[live] = cb2[live] / den
        return out

    def amplitude(self, tup, r: np.ndarray) -> np.ndarray:
        """v for all (z, r, external nodes): shape (Nz, n_r, n_ext)."""
        grid, rho, L = self.grid, self.rho, len(tup)
        n_k = grid.n_k
        cre, ann = external_groups(tup)
        slots = [("c", g) for g in cre] + [("a", g) for g in ann]
        d = len(slots)
        digits = _ext_digits(d, n_k)
        kd = grid.k_nodes[digits] if d else np.zeros((1, 0))
        n_ext = digits.shape[0]

        def shift(include):
            s = np.zeros(n_ext)
            for j, (kind, g) in enumerate(slots):
                if include(kind, g):
                    s = s + kd[:, j]
            return s

        S = [shift(lambda kind, g, l=l: (kind == "a" and g <= l) or (kind == "c" and g > l)) for l in range(L + 1)]
        R = [None] + [shift(lambda kind, g, l=l: (kind == "a" and g < l) or (kind == "c" and g > l))
                      for l in range(1, L + 1)]
        # local external row of each factor
        loc = [None]
        for l in range(1, L + 1):
            cols = [j for j, (kind, g) in enumerate(slots) if g == l and kind == "c"] + \
                   [j for j, (kind, g) in enumerate(slots) if g == l and kind == "a"]
            idx = np.zeros(n_ext, dtype=np.int64)
            for j in cols:
                idx = idx * n_k + digits[:, j]
            loc.append((idx, n_k ** len(cols)))

        Nz, Nr = self.Nz, r.size
        jz = np.repeat(np.arange(Nz), Nr * n_ext)
        ir = np.tile(np.repeat(np.arange(Nr), n_ext), Nz)
        ie = np.tile(np.arange(n_ext), Nz * Nr)
        cap = max(max_alive(tup), 1)
        isp = _reduced_space(cap, grid)
        dmax = max(isp.block(n).stop - isp.block(n).start for n in range(cap + 1))
        B = jz.size
        step = max(1, _MEMORY_BUDGET // dmax)
        out = np.empty(B, complex)
        for lo in range(0, B, step):
            sl = slice(lo, min(B, lo + step))
            out[sl] = self._chain(tup, cap, isp, jz[sl], r[ir[sl]], ie[sl], S, R, loc)
        ends = cutoffs.chi(r[:, None] + S[0][None, :]) * cutoffs.chi(r[:, None] + S[L][None, :])
        return out.reshape(Nz, Nr, n_ext) * ends[None]

    def _chain(self, tup, cap, isp, jz, r, ie, S, R, loc):
        grid, rho, L = self.grid, self.rho, len(tup)
        Bc = jz.size
        vec = np.ones((Bc, 1), complex)
        alive = 0
        for l in range(L, 0, -1):
            m, p, n, q = tup[l - 1]
            key = (m + p, n + q)
            table = self.table(key, m, p, n, q)
            idx, n_loc = loc[l]
            n_int = grid.n_k ** (p + q)
            brow = (jz * n_loc + idx[ie]) * n_int
            src, tgt, emid, amp, slot, emid_u, eidx, d_out = _block_transitions(cap, grid, p, q, alive)
            shift = rho * (r + R[l][ie])
            shift_u, sidx = np.unique(shift, return_inverse=True)
            if emid_u.size * shift_u.size * grid.n_r <= _LAGRANGE_BUDGET:
                arg = shift_u[:, None] + emid_u[None, :]
                lw = bary_weights(grid.r_nodes, grid.r_bary, arg.ravel()).reshape(
                    shift_u.size, emid_u.size, grid.n_r)
                vec = backend.propagate_lagrange(vec, src, tgt, eidx, amp, slot, brow,
                                                 sidx.ravel(), lw, table, d_out, impl=self.impl)
            else:
                vec = backend.propagate_bary(vec, src, tgt, emid, amp, slot, brow, shift, table,
                                             grid.r_nodes, grid.r_bary, d_out, impl=self.impl)
            alive = alive - q + p
            if l > 1:
                sh = rho * (r + S[l - 1][ie])
                sh_u, sh_i = np.unique(sh, return_inverse=True)
                uk, inv = np.unique(jz * sh_u.size + sh_i.ravel(), return_inverse=True)
                x = sh_u[uk % sh_u.size][:, None] + isp.energies(alive)[None, :]
                Fu = self.resolvent((uk // sh_u.size)[:, None], x)
                vec = vec * Fu[np.asarray(inv).ravel()]
        return vec[:, 0]


def v_term(indices, w: KernelSequence, rho: float, grid: RadialGrid | None = None, impl: str | None = None) -> np.ndarray:
    """One renormalized-series term on the grid: shape (n_r, n_k, ..., n_k), creation slots first."""
    grid = grid or w.grid
    indices = tuple(tuple(int(v) for v in f) for f in indices)
    if any(sum(f) < 1 for f in indices):
        raise ValueError("each factor needs m+p+n+q >= 1")
    M = sum(f[0] for f in indices)
    N = sum(f[2] for f in indices)
    shape = (grid.n_r,) + (grid.n_k,) * (M + N)
    alive = 0
    for m, p, n, q in reversed(indices):
        if q > alive:
            return np.zeros(shape, complex)
        alive += p - q
    if alive:
        return np.zeros(shape, complex)
    eng = _RGEngine([w], rho, grid, impl)
    if any((f[0] + f[1], f[2] + f[3]) not in eng.avail for f in indices):
        return np.zeros(shape, complex)
    return eng.amplitude(indices, grid.r_nodes)[0].reshape(shape)


@dataclass(frozen=True)
class RGCertificate:
    tail: TailCertificate
    norms: dict
    t_F: float
    d_F: float
    unknown: float

    def to_dict(self) -> dict:
        return {"tail": self.tail.to_dict(), "norms": {f"{k[0]},{k[1]}": v for k, v in self.norms.items()},
                "t_F": self.t_F, "d_F": self.d_F, "unknown": self.unknown}


def _resolvent_bounds(seqs: list[KernelSequence], rho: float) -> tuple[float, float]:
    """sup |chibar_rho**2 / w_00| and rho * sup |d/dx of it| on [0, 1], over the samples."""
    grid = seqs[0].grid
    x = np.linspace(0.0, 1.0, 8001)
    W = bary_weights(grid.r_nodes, grid.r_bary, x)
    cb2 = cutoffs.chibar_rho(x, rho) ** 2
    dcb2 = 2 * cutoffs.chibar_rho(x, rho) * cutoffs.chibar_prime(x / rho) / rho
    t = d = 0.0
    for s in seqs:
        w00 = s[(0, 0)]
        val = W @ w00.values
        der = W @ w00.dr_values
        live = cb2 > 0
        if np.any(np.abs(val[live]) < 3 * rho / 32):
            raise BallViolation("|w_00| fell below 3 rho / 32")
        F = np.where(live, cb2 / np.where(live, val, 1.0), 0.0)
        dF = np.where(live, dcb2 / np.where(live, val, 1.0) - cb2 * der / np.where(live, val, 1.0) ** 2, 0.0)
        t = max(t, float(np.max(np.abs(F))))
        d = max(d, rho * float(np.max(np.abs(dF))))
    return t, d


def _certificate(seqs: list[KernelSequence], config: RGConfig) -> RGCertificate:
    rho, xi = config.rho, config.xi
    norms: dict = {}
    for s in seqs:
        for key, k in s.interaction().items():
            norms[key] = max(norms.get(key, 0.0), sharp_norm(k))
    t, d = _resolvent_bounds(seqs, rho)
    dchi, _ = cutoffs.sup_derivatives()
    parity = all((a + b) % 2 == 0 for (a, b), v in norms.items() if v > 0)
    in_tail = max(s.tail_bound for s in seqs)
    unknown = 2 * xi * in_tail

    def C(L):
        return 1.0 + 2.0 * dchi + L * rho + (L - 1) * (d / t if t > 0 else 0.0)

    def computed(M, N, L):
        if parity and (M + N) % 2:
            return True
        if config.vacuum_only and M + N > 0:
            return False
        if M + N > config.M_max:
            return False
        return L <= config.L_for(M, N)

    tail = series_tail(norms, max(t, 1e-300), 1.0, C, 1.0 / rho, rho / xi, computed, config.L_max,
                       unknown=unknown, vacuum_weight=1.0 / rho, ratio_limit=0.5,
                       j_min=2 if parity else 1)
    return RGCertificate(tail, norms, t, d, unknown)


def _output_sectors(config: RGConfig, parity: bool) -> list[tuple[int, int]]:
    if config.vacuum_only:
        return [(0, 0)]
    out = []
    for s in range(config.M_max + 1):
        if s == 1 or (parity and s % 2):
            continue
        out += [(M, s - M) for M in range(s + 1)]
    return out


def renormalized_terms(seqs: list[KernelSequence], config: RGConfig, impl: str | None = None) -> dict:
    """Unsymmetrized hat-w_{M,N} per sample, arrays (Nz, n_r, k...)."""
    grid = seqs[0].grid
    rho = config.rho
    eng = _RGEngine(seqs, rho, grid, impl)
    parity = all(sum(k) % 2 == 0 for k in eng.avail)
    out = {}
    for (M, N) in _output_sectors(config, parity):
        shape = (len(seqs), grid.n_r) + (grid.n_k,) * (M + N)
        acc = np.zeros(shape, complex)
        for L in range(1, config.L_for(M, N) + 1):
            for tup in index_tuples(eng.avail, M, N, L):
                acc += (-1) ** (L - 1) * binomial_weight(tup) * eng.amplitude(tup, grid.r_nodes).reshape(shape)
        acc *= rho ** (M + N - 1)
        if (M, N) == (0, 0):
            W = grid.r_interp_matrix(rho * grid.r_nodes)
            acc += np.einsum("ij,zj->zi", W, eng.w00) / rho
        out[(M, N)] = acc
    return out


def _finish(terms: dict, grid: RadialGrid) -> dict:
    comps = {}
    for (M, N), arr in terms.items():
        vals = np.empty_like(arr)
        for j in range(arr.shape[0]):
            vals[j] = project_support(symmetrize(Kernel(M, N, arr[j], grid))).values
        comps[(M, N)] = vals
    return comps


def renormalize_sharp(w: KernelSequence, config: RGConfig = RGConfig(), impl: str | None = None) -> tuple[KernelSequence, RGCertificate]:
    """R^#_rho at a fixed spectral parameter."""
    cert = _certificate([w], config)
    comps = _finish(renormalized_terms([w], config, impl), w.grid)
    out = KernelSequence({k: Kernel(k[0], k[1], v[0], w.grid) for k, v in comps.items()},
                         xi=config.xi, tail_bound=cert.tail.interaction + w.tail_bound,
                         vacuum_tail=w.vacuum_tail / config.rho + cert.tail.vacuum, grid=w.grid)
    return out, cert


@dataclass(frozen=True, eq=False)
class RGStep:
    kernel: SampledSequence
    zetas: np.ndarray
    newton: list
    certificate: RGCertificate
    spectral: SpectralMap

    def record(self, step: int) -> dict:
        return {"step": step,
                "newton_iterations": max(n.iterations for n in self.newton),
                "newton_residual": max(n.residual for n in self.newton),
                "max_abs_zeta": float(np.max(np.abs(self.zetas))),
                "certificate": self.certificate.to_dict(),
                "tail_bound": self.kernel.tail_bound,
                "vacuum_tail": self.kernel.vacuum_tail,
                "spectral_map": self.spectral.to_dict(),
                "tail_feedback": "additive"}


def renormalize(w: SampledSequence, config: RGConfig = RGConfig(), impl: str | None = None) -> RGStep:
    """R_rho(w)(z) = R^#_rho(w(I_rho(z))) on the contour samples of z."""
    z = SampledSequence.contour(config.n_z, config.radius)
    if w.is_free() and w.z.size == config.n_z and w.radius == config.radius:
        # H_f - z is a fixed point; I_rho(z) = rho z
        out = SampledSequence.free(w.grid, config.xi, config.n_z, config.radius)
        newton = [NewtonResult(complex(config.rho * zj), 0, 0.0) for zj in z]
        cert = RGCertificate(TailCertificate(0.0, 0.0, 0.0), {}, 0.0, 0.0, 0.0)
        return RGStep(out, config.rho * z, newton, cert, SpectralMap.of(w, config.rho))
    newton = [invert_E(w, config.rho, zj, config.newton_tol, config.newton_max_iter) for zj in z]
    zetas = np.array([n.zeta for n in newton])
    seqs = [w.at(zeta) for zeta in zetas]
    cert = _certificate(seqs, config)
    comps = _finish(renormalized_terms(seqs, config, impl), w.grid)
    out = SampledSequence(z, comps, config.xi, cert.tail.interaction + w.tail_bound,
                          w.vacuum_tail / config.rho + cert.tail.vacuum, w.grid, config.radius)
    return RGStep(out, zetas, newton, cert, SpectralMap.of(w, config.rho))


@dataclass(frozen=True)
class ContractionReport:
    gamma_before: float
    gamma_after: float
    beta_before: float
    beta_after: float
    alpha_before: float
    alpha_after: float
    tail_slack: float

    @property
    def gamma_ratio(self) -> float:
        if self.gamma_before == 0.0:
            return 0.0
        return self.gamma_after / self.gamma_before

    @property
    def degenerate(self) -> bool:
        return self.gamma_before == 0.0 and self.gamma_after == 0.0

    @property
    def ok(self) -> bool:
        return self.degenerate or self.gamma_ratio <= 0.5 + self.tail_slack

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d.update(gamma_ratio=self.gamma_ratio, ok=self.ok, degenerate=self.degenerate)
        return d


def explicit_gamma(w: SampledSequence) -> float:
    """max over ball samples of the xi-norm of the stored sectors m+n >= 1 (tail excluded)."""
    best = 0.0
    for _, s in w.ball_samples():
        best = max(best, interaction_norm(s) - s.tail_bound)
    return best


def contraction_report(before: SampledSequence, after: SampledSequence) -> ContractionReport:
    a0, b0, _ = measure_ball(before)
    a1, b1, _ = measure_ball(after)
    g0, g1 = explicit_gamma(before), explicit_gamma(after)
    slack = (after.tail_bound / g0) if g0 > 0 else 0.0
    return ContractionReport(g0, g1, b0, b1, a0, a1, slack)
