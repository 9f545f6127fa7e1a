"""Wick-ordered integral kernels on a radial tensor grid, their norms and balls."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar

SUPPORT_TOL = 1e-14


class RadialGrid:
    """Chebyshev-Lobatto nodes in the field energy r and graded Gauss nodes in |k|.

    The one-photon measure is ``measure_const * k**2 dk`` on (0, 1]; ``mu`` holds
    its discrete weights. Raw quadrature weights ``k_weights`` integrate dk.
    """

    def __init__(self, n_r: int = 33, n_k: int = 16, per_panel: int = 4,
                 ratio: float = 2.0, measure_const: float = 1.0, oversample: int = 10):
        if n_r < 3:
            raise ValueError("need at least 3 r-nodes")
        if n_k % per_panel:
            raise ValueError("n_k must be a multiple of per_panel")
        if ratio <= 1.0 or measure_const <= 0.0:
            raise ValueError("ratio must exceed 1 and measure_const must be positive")
        self.n_r = int(n_r)
        self.n_k = int(n_k)
        self.per_panel = int(per_panel)
        self.ratio = float(ratio)
        self.measure_const = float(measure_const)
        self.oversample = int(oversample)

        j = np.arange(self.n_r)
        self.r_nodes = 0.5 * (1.0 - np.cos(np.pi * j / (self.n_r - 1)))
        self.r_nodes[0], self.r_nodes[-1] = 0.0, 1.0
        bw = (-1.0) ** j
        bw[0] *= 0.5
        bw[-1] *= 0.5
        self.r_bary = bw

        n_panels = self.n_k // self.per_panel
        edges = [self.ratio ** (-p) for p in range(n_panels)] + [0.0]
        self.panel_edges = np.array(edges[::-1])  # ascending, 0 first
        gx, gw = np.polynomial.legendre.leggauss(self.per_panel)
        nodes, weights, bary = [], [], []
        for lo, hi in zip(self.panel_edges[:-1], self.panel_edges[1:]):
            half = 0.5 * (hi - lo)
            xs = lo + half * (gx + 1.0)
            nodes.append(xs)
            weights.append(half * gw)
            diff = xs[:, None] - xs[None, :]
            np.fill_diagonal(diff, 1.0)
            bary.append(1.0 / diff.prod(axis=1))
        self.k_nodes = np.concatenate(nodes)
        self.k_weights = np.concatenate(weights)
        self._k_bary = np.concatenate(bary)
        self.mu = self.measure_const * self.k_weights * self.k_nodes**2

    # identity and serialization
    @property
    def key(self) -> tuple:
        return (self.n_r, self.n_k, self.per_panel, self.ratio, self.measure_const)

    def __eq__(self, other) -> bool:
        return isinstance(other, RadialGrid) and self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)

    def __repr__(self) -> str:
        return (f"RadialGrid(n_r={self.n_r}, n_k={self.n_k}, per_panel={self.per_panel}, "
                f"ratio={self.ratio}, measure_const={self.measure_const})")

    def to_dict(self) -> dict:
        return {"n_r": self.n_r, "n_k": self.n_k, "per_panel": self.per_panel,
                "ratio": self.ratio, "measure_const": self.measure_const}

    @classmethod
    def from_dict(cls, d: dict) -> "RadialGrid":
        return cls(d["n_r"], d["n_k"], d["per_panel"], d["ratio"], d["measure_const"])

    # r direction
    @cached_property
    def r_diff(self) -> np.ndarray:
        """Spectral differentiation matrix on the r-nodes."""
        x, w = self.r_nodes, self.r_bary
        dx = x[:, None] - x[None, :]
        np.fill_diagonal(dx, 1.0)
        D = (w[None, :] / w[:, None]) / dx
        np.fill_diagonal(D, 0.0)
        np.fill_diagonal(D, -D.sum(axis=1))
        return D

    @cached_property
    def r_fine(self) -> np.ndarray:
        fine = np.linspace(0.0, 1.0, self.oversample * (self.n_r - 1) + 1)
        return np.unique(np.concatenate([fine, self.r_nodes]))

    @cached_property
    def r_fine_matrix(self) -> np.ndarray:
        return self.r_interp_matrix(self.r_fine)

    def r_interp_matrix(self, x) -> np.ndarray:
        """Barycentric interpolation rows; arguments are clamped to [0, 1]."""
        x = np.clip(np.atleast_1d(np.asarray(x, dtype=float)), 0.0, 1.0)
        diff = x[:, None] - self.r_nodes[None, :]
        exact = diff == 0.0
        diff[exact] = 1.0
        c = self.r_bary[None, :] / diff
        M = c / c.sum(axis=1, keepdims=True)
        rows = exact.any(axis=1)
        M[rows] = exact[rows].astype(float)
        return M

    # k direction
    def k_interp_matrix(self, x) -> np.ndarray:
        """Panel-wise Lagrange rows; zero for arguments above 1 (support clipping)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        M = np.zeros((x.size, self.n_k))
        pp = self.per_panel
        for row, xv in enumerate(x):
            if xv > 1.0 + 1e-15:
                continue
            xv = min(max(xv, 0.0), 1.0)
            p = int(np.searchsorted(self.panel_edges, xv, side="left")) - 1
            p = min(max(p, 0), self.n_k // pp - 1)
            sl = slice(p * pp, (p + 1) * pp)
            d = xv - self.k_nodes[sl]
            hit = np.flatnonzero(d == 0.0)
            if hit.size:
                M[row, p * pp + hit[0]] = 1.0
                continue
            c = self._k_bary[sl] / d
            M[row, sl] = c / c.sum()
        return M

    @cached_property
    def dilation_matrix(self) -> dict:
        return {}

    def k_dilation(self, rho: float) -> np.ndarray:
        """Rows evaluate a function at k/rho, for the one-photon dilation."""
        if rho not in self.dilation_matrix:
            self.dilation_matrix[rho] = self.k_interp_matrix(self.k_nodes / rho)
        return self.dilation_matrix[rho]


DEFAULT_GRID = RadialGrid()


def support_mask(grid: RadialGrid, m: int, n: int) -> np.ndarray:
    """Indicator of r <= 1 - max(sum of creation momenta, sum of annihilation momenta)."""
    shape = (grid.n_r,) + (grid.n_k,) * (m + n)
    if m + n == 0:
        return np.ones(shape, dtype=bool)
    k = grid.k_nodes
    sc = np.zeros((grid.n_k,) * m) if m else np.zeros(())
    for a in range(m):
        sc = sc + k.reshape((1,) * a + (-1,) + (1,) * (m - a - 1))
    sa = np.zeros((grid.n_k,) * n) if n else np.zeros(())
    for b in range(n):
        sa = sa + k.reshape((1,) * b + (-1,) + (1,) * (n - b - 1))
    smax = np.maximum(sc.reshape(sc.shape + (1,) * n), sa.reshape((1,) * m + sa.shape))
    r = grid.r_nodes.reshape((-1,) + (1,) * (m + n))
    return np.broadcast_to(r <= 1.0 - smax + SUPPORT_TOL, shape)


@dataclass(frozen=True, eq=False)
class Kernel:
    m: int
    n: int
    values: np.ndarray
    grid: RadialGrid = field(default=DEFAULT_GRID)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        shape = (self.grid.n_r,) + (self.grid.n_k,) * (self.m + self.n)
        if vals.shape != shape:
            raise ValueError(f"kernel ({self.m},{self.n}) expects shape {shape}, got {vals.shape}")
        object.__setattr__(self, "values", vals)

    @cached_property
    def dr_values(self) -> np.ndarray:
        return np.tensordot(self.grid.r_diff, self.values, axes=(1, 0))

    @classmethod
    def zeros(cls, m: int, n: int, grid: RadialGrid = DEFAULT_GRID) -> "Kernel":
        return cls(m, n, np.zeros((grid.n_r,) + (grid.n_k,) * (m + n), complex), grid)

    @classmethod
    def from_function(cls, m: int, n: int, fn, grid: RadialGrid = DEFAULT_GRID) -> "Kernel":
        """Build from fn(r, k_1, ..., k_{m+n}) evaluated on broadcast node arrays."""
        d = m + n + 1
        args = [grid.r_nodes.reshape((-1,) + (1,) * (d - 1))]
        for a in range(m + n):
            args.append(grid.k_nodes.reshape((1,) * (a + 1) + (-1,) + (1,) * (d - a - 2)))
        shape = (grid.n_r,) + (grid.n_k,) * (m + n)
        return cls(m, n, np.broadcast_to(fn(*args), shape).astype(complex), grid)

    def __add__(self, other: "Kernel") -> "Kernel":
        return Kernel(self.m, self.n, self.values + other.values, self.grid)

    def __sub__(self, other: "Kernel") -> "Kernel":
        return Kernel(self.m, self.n, self.values - other.values, self.grid)

    def scale(self, c) -> "Kernel":
        return Kernel(self.m, self.n, c * self.values, self.grid)

    def eval_r(self, x) -> np.ndarray:
        """Interpolate in r at the points x (all momentum slots kept on nodes)."""
        return np.tensordot(self.grid.r_interp_matrix(x), self.values, axes=(1, 0))

    def adjoint(self) -> "Kernel":
        """The conjugate kernel with creation and annihilation slots exchanged."""
        m, n = self.m, self.n
        perm = (0,) + tuple(range(1 + m, 1 + m + n)) + tuple(range(1, 1 + m))
        return Kernel(n, m, np.conj(self.values.transpose(perm)), self.grid)


def symmetrize(w: Kernel) -> Kernel:
    """Average over permutations of the creation slots and of the annihilation slots."""
    m, n = w.m, w.n
    if m < 2 and n < 2:
        return w
    acc = np.zeros_like(w.values)
    count = 0
    for pc in itertools.permutations(range(m)):
        for pa in itertools.permutations(range(n)):
            perm = (0,) + tuple(1 + i for i in pc) + tuple(1 + m + j for j in pa)
            acc += w.values.transpose(perm)
            count += 1
    return Kernel(m, n, acc / count, w.grid)


def project_support(w: Kernel) -> Kernel:
    if w.m + w.n == 0:
        return w
    return Kernel(w.m, w.n, np.where(support_mask(w.grid, w.m, w.n), w.values, 0.0), w.grid)


def _polished_sup(grid: RadialGrid, vals: np.ndarray) -> float:
    """sup over r in [0, 1] and the k-nodes of |interpolant|, for vals of shape (n_r, ...)."""
    flat = vals.reshape(grid.n_r, -1)
    fine = np.abs(grid.r_fine_matrix @ flat)
    colmax = fine.max(axis=0)
    best = float(colmax.max())
    if best == 0.0:
        return 0.0
    cands = np.argsort(colmax)[::-1][:8]
    x = grid.r_fine
    for c in cands:
        if colmax[c] < best * (1.0 - 1e-3):
            break
        i = int(np.argmax(fine[:, c]))
        lo, hi = x[max(i - 1, 0)], x[min(i + 1, x.size - 1)]
        col = flat[:, c]

        def neg(t):
            return -abs(grid.r_interp_matrix(t)[0] @ col)

        res = minimize_scalar(neg, bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-14, "maxiter": 200})
        best = max(best, -float(res.fun))
    return best


def sup_norm(w: Kernel) -> float:
    if not np.any(w.values):
        return 0.0
    return _polished_sup(w.grid, w.values)


def sharp_norm(w: Kernel) -> float:
    """Sup of |w| plus sup of |d_r w|, over r in [0, 1] and the k-nodes.

    Sups are located on the oversampled r-grid and then polished locally.
    """
    if not np.any(w.values):
        return 0.0
    return _polished_sup(w.grid, w.values) + _polished_sup(w.grid, w.dr_values)


def sup_dr_minus_one(w00: Kernel) -> float:
    """sup_r |d_r w_00 - 1|."""
    return _polished_sup(w00.grid, w00.dr_values - 1.0)


@dataclass(frozen=True, eq=False)
class KernelSequence:
    """Kernel sectors up to m + n <= m_max, with certified bounds on what was dropped.

    ``tail_bound`` bounds the xi-norm of everything discarded in sectors m + n >= 1;
    ``vacuum_tail`` bounds the sup-norm error of the (0, 0) sector.
    """

    components: dict
    xi: float = 0.2
    tail_bound: float = 0.0
    vacuum_tail: float = 0.0
    grid: RadialGrid = field(default=DEFAULT_GRID)

    def __post_init__(self):
        comps = dict(self.components)
        for (m, n), w in comps.items():
            if (w.m, w.n) != (m, n):
                raise ValueError("component key does not match kernel arity")
            if w.grid != self.grid:
                raise ValueError("grid mismatch between kernel and sequence")
            if m + n == 1 and np.any(w.values):
                raise ValueError("the m+n=1 sector must vanish identically")
        if (0, 0) not in comps:
            comps[(0, 0)] = Kernel.zeros(0, 0, self.grid)
        object.__setattr__(self, "components", comps)

    @property
    def m_max(self) -> int:
        return max(m + n for m, n in self.components)

    def __getitem__(self, key) -> Kernel:
        m, n = key
        if key in self.components:
            return self.components[key]
        return Kernel.zeros(m, n, self.grid)

    def interaction(self) -> dict:
        return {k: v for k, v in self.components.items() if sum(k) >= 1}

    def with_components(self, comps: dict, **kw) -> "KernelSequence":
        args = dict(xi=self.xi, tail_bound=self.tail_bound, vacuum_tail=self.vacuum_tail,
                    grid=self.grid)
        args.update(kw)
        return KernelSequence(comps, **args)

    def scale_interaction(self, t) -> "KernelSequence":
        comps = {k: (v.scale(t) if sum(k) >= 1 else v) for k, v in self.components.items()}
        return self.with_components(comps, tail_bound=abs(t) * self.tail_bound)

    @classmethod
    def free(cls, z: complex = 0.0, grid: RadialGrid = DEFAULT_GRID, xi: float = 0.2,
             offset: complex = 0.0) -> "KernelSequence":
        w00 = Kernel.from_function(0, 0, lambda r: r - z + offset, grid)
        return cls({(0, 0): w00}, xi=xi, grid=grid)


def xi_norm(w: KernelSequence, include_vacuum: bool = True) -> float:
    total = 0.0
    for (m, n), k in sorted(w.components.items()):
        if m + n == 0 and not include_vacuum:
            continue
        total += w.xi ** (-(m + n)) * sharp_norm(k)
    return total + w.tail_bound


def interaction_norm(w: KernelSequence) -> float:
    """xi-norm of the sectors with m + n >= 1, tail included."""
    return xi_norm(w, include_vacuum=False)


class SampledSequence:
    """A kernel sequence analytic in z, stored on a contour |z| = radius.

    Values off the contour come from the Taylor coefficients recovered by FFT.
    """

    def __init__(self, z: np.ndarray, comps: dict, xi: float, tail_bound: float = 0.0,
                 vacuum_tail: float = 0.0, grid: RadialGrid = DEFAULT_GRID, radius: float | None = None):
        self.z = np.asarray(z, dtype=complex)
        self.radius = float(abs(self.z[0])) if radius is None else float(radius)
        self.comps = {k: np.asarray(v, dtype=complex) for k, v in comps.items()}
        if (0, 0) not in self.comps:
            raise ValueError("sampled sequence needs a (0,0) sector")
        for (m, n), v in self.comps.items():
            if m + n == 1 and np.any(v):
                raise ValueError("the m+n=1 sector must vanish identically")
        self.xi = float(xi)
        self.tail_bound = float(tail_bound)
        self.vacuum_tail = float(vacuum_tail)
        self.grid = grid

    @staticmethod
    def contour(n: int = 16, radius: float = 0.3) -> np.ndarray:
        return radius * np.exp(2j * np.pi * np.arange(n) / n)

    @staticmethod
    def interior_points() -> np.ndarray:
        g = np.array([-0.2, 0.0, 0.2])
        return (g[:, None] + 1j * g[None, :]).ravel()

    @classmethod
    def from_sequences(cls, z, seqs: list[KernelSequence]) -> "SampledSequence":
        keys = sorted(set().union(*[s.components.keys() for s in seqs]))
        comps = {k: np.stack([s[k].values for s in seqs]) for k in keys}
        return cls(z, comps, seqs[0].xi, max(s.tail_bound for s in seqs),
                   max(s.vacuum_tail for s in seqs), seqs[0].grid)

    @classmethod
    def free(cls, grid: RadialGrid = DEFAULT_GRID, xi: float = 0.2, n: int = 16,
             radius: float = 0.3) -> "SampledSequence":
        z = cls.contour(n, radius)
        w00 = grid.r_nodes[None, :] - z[:, None]
        out = cls(z, {(0, 0): w00}, xi, grid=grid, radius=radius)
        coef = np.zeros((n, grid.n_r), complex)
        coef[0] = grid.r_nodes
        coef[1] = -radius
        out.__dict__["coefficients"] = {(0, 0): coef}  # exact, no FFT rounding
        return out

    def is_free(self) -> bool:
        """True when this is exactly H_f - z with nothing dropped."""
        if set(self.comps) != {(0, 0)} or self.tail_bound or self.vacuum_tail:
            return False
        return np.array_equal(self.comps[(0, 0)], self.grid.r_nodes[None, :] - self.z[:, None])

    @cached_property
    def coefficients(self) -> dict:
        """Scaled Taylor coefficients a_j * radius**j, per sector."""
        N = self.z.size
        phase = self.z / self.radius
        if not np.allclose(phase, np.exp(2j * np.pi * np.arange(N) / N), atol=1e-14):
            raise ValueError("samples must sit on the equispaced contour")
        return {k: np.fft.fft(v, axis=0) / N for k, v in self.comps.items()}

    def _powers(self, zeta: complex) -> np.ndarray:
        return (zeta / self.radius) ** np.arange(self.z.size)

    def sector_at(self, key, zeta: complex) -> np.ndarray:
        return np.tensordot(self._powers(zeta), self.coefficients[key], axes=(0, 0))

    def at(self, zeta: complex) -> KernelSequence:
        p = self._powers(zeta)
        comps = {k: Kernel(k[0], k[1], np.tensordot(p, c, axes=(0, 0)), self.grid)
                 for k, c in self.coefficients.items()}
        return KernelSequence(comps, self.xi, self.tail_bound, self.vacuum_tail, self.grid)

    def sample(self, j: int) -> KernelSequence:
        comps = {k: Kernel(k[0], k[1], v[j], self.grid) for k, v in self.comps.items()}
        return KernelSequence(comps, self.xi, self.tail_bound, self.vacuum_tail, self.grid)

    def vacuum_value(self, zeta: complex) -> tuple[complex, complex]:
        """w_00(zeta, r=0) and its z-derivative, from the Taylor polynomial."""
        a = self.coefficients[(0, 0)][:, 0] / self.radius ** np.arange(self.z.size)
        val = np.polynomial.polynomial.polyval(zeta, a)
        der = np.polynomial.polynomial.polyval(zeta, np.polynomial.polynomial.polyder(a))
        return complex(val), complex(der)

    def ball_samples(self) -> list[tuple[complex, KernelSequence]]:
        out = [(complex(self.z[j]), self.sample(j)) for j in range(self.z.size)]
        out += [(complex(z), self.at(z)) for z in self.interior_points()]
        return out


@dataclass(frozen=True)
class BallParams:
    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        for v in (self.alpha, self.beta, self.gamma):
            if not (math.isfinite(v) and v >= 0.0):
                raise ValueError("ball parameters must be finite and non-negative")


@dataclass(frozen=True)
class BallVerdict:
    alpha: float
    beta: float
    gamma: float
    inside: bool
    params: BallParams

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "gamma": self.gamma,
                "inside": self.inside,
                "bounds": [self.params.alpha, self.params.beta, self.params.gamma]}


def measure_ball(samples) -> tuple[float, float, float]:
    if isinstance(samples, SampledSequence):
        samples = samples.ball_samples()
    samples = list(samples)
    if not samples:
        raise ValueError("empty z-sample set")
    a = b = c = 0.0
    for z, w in samples:
        w00 = w[(0, 0)]
        a = max(a, sup_dr_minus_one(w00))
        b = max(b, abs(complex(w00.values[0]) + z))
        c = max(c, interaction_norm(w))
    return a, b, c


def ball_check(samples, params: BallParams) -> BallVerdict:
    """Measured polydisc parameters over a z-sample and the membership verdict.

    ``samples`` is a SampledSequence or an iterable of (z, KernelSequence) pairs.
    """
    a, b, c = measure_ball(samples)
    inside = a <= params.alpha and b <= params.beta and c <= params.gamma
    return BallVerdict(a, b, c, inside, params)


# file formats

def _kernel_header(w: Kernel, xi: float | None) -> dict:
    return {"format": "fockrg-kernel", "version": 1, "m": w.m, "n": w.n,
            "grid": w.grid.to_dict(), "xi": xi, "shape": list(w.values.shape),
            "order": "C", "dtype": "complex128"}


def dump_kernel(path, w: Kernel, xi: float | None = None, fmt: str | None = None) -> None:
    """Write a kernel as JSON (exact float repr) or as a binary .npz container."""
    path = Path(path)
    fmt = fmt or ("json" if path.suffix == ".json" else "npz")
    header = _kernel_header(w, xi)
    if fmt == "json":
        flat = w.values.ravel(order="C")
        header["real"] = flat.real.tolist()
        header["imag"] = flat.imag.tolist()
        path.write_text(json.dumps(header))
    elif fmt == "npz":
        with path.open("wb") as fh:
            np.savez(fh, header=np.array(json.dumps(header)), values=w.values)
    else:
        raise ValueError(f"unknown kernel format {fmt!r}")


def load_kernel(path) -> tuple[Kernel, float | None]:
    path = Path(path)
    if path.suffix == ".json":
        d = json.loads(path.read_text())
        vals = (np.array(d["real"]) + 1j * np.array(d["imag"])).reshape(d["shape"])
    else:
        with np.load(path) as f:
            d = json.loads(str(f["header"]))
            vals = f["values"]
    if d.get("format") != "fockrg-kernel":
        raise ValueError("not a kernel file")
    return Kernel(d["m"], d["n"], vals, RadialGrid.from_dict(d["grid"])), d["xi"]


def dump_sampled(path, w: SampledSequence) -> None:
    header = {"format": "fockrg-sampled", "version": 1, "grid": w.grid.to_dict(),
              "xi": w.xi, "tail_bound": w.tail_bound, "vacuum_tail": w.vacuum_tail,
              "radius": w.radius, "sectors": [list(k) for k in sorted(w.comps)]}
    arrays = {f"w_{m}_{n}": v for (m, n), v in w.comps.items()}
    with Path(path).open("wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header)), z=w.z, **arrays)


def load_sampled(path) -> SampledSequence:
    with np.load(path) as f:
        d = json.loads(str(f["header"]))
        comps = {tuple(k): f[f"w_{k[0]}_{k[1]}"] for k in d["sectors"]}
        z = f["z"]
    return SampledSequence(z, comps, d["xi"], d["tail_bound"], d["vacuum_tail"],
                           RadialGrid.from_dict(d["grid"]), d["radius"])
