"""Iterated renormalization: ground-state energy, eigenvector and smoothness diagnostics."""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import cutoffs
from .feshbach import FeshbachError, FeshbachPair, feshbach_Q
from .fock import DiscreteFockSpace, assemble_H, exact_ground_state, sector_matrix
from .initial import (InitialSeriesConfig, ToyModel, _central_weights, free_hamiltonian,
                      initial_kernel, initial_partition, model_hamiltonian)
from .kernel_space import SampledSequence, sup_dr_minus_one, interaction_norm
from .rg import (BallViolation, ContractionReport, RGConfig, SpectralMap, dilation_one_particle,
                 invert_E, renormalize, second_quantize)


class ConditionViolation(FeshbachError):
    """The inverse on Ran chibar_rho exceeded its admissible norm."""


@dataclass(frozen=True, eq=False)
class SolverConfig:
    """Pipeline settings.

    ``full_steps`` limits how many renormalization steps keep all kernel sectors;
    later steps keep only the vacuum sector and move the rest into the certified
    tail. ``None`` keeps everything.
    """

    initial: InitialSeriesConfig = field(default_factory=InitialSeriesConfig)
    rg: RGConfig = field(default_factory=RGConfig)
    m_max: int = 10
    full_steps: int | None = None
    psi_cap: int = 3
    impl: str | None = None

    def __post_init__(self):
        if self.m_max < 1:
            raise ValueError("m_max must be at least 1")
        if self.full_steps is not None and self.full_steps < 0:
            raise ValueError("full_steps must be non-negative")
        if self.psi_cap < 1:
            raise ValueError("psi_cap must be at least 1")
        if self.initial.xi != self.rg.xi:
            raise ValueError("initial and rg xi differ")

    @property
    def grid(self):
        return self.initial.grid

    def energy_only(self) -> "SolverConfig":
        return replace(self, full_steps=1)

    def to_dict(self) -> dict:
        return {"initial": self.initial.to_dict(), "rg": self.rg.to_dict(), "m_max": self.m_max,
                "full_steps": self.full_steps, "psi_cap": self.psi_cap}



# flow

@dataclass
class FlowTrace:
    steps: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    psi_norms: list = field(default_factory=list)
    final: tuple | None = None
    eps0: float = 0.0

    def to_jsonl(self, path) -> None:
        with Path(path).open("w") as fh:
            for rec in self.steps:
                fh.write(json.dumps(_jsonable(rec), sort_keys=True) + "\n")
            fh.write(json.dumps(_jsonable({"energies": self.energies, "psi_norms": self.psi_norms,
                                           "final": self.final, "eps0": self.eps0}), sort_keys=True) + "\n")

    @staticmethod
    def read_jsonl(path) -> list[dict]:
        return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (complex, np.complexfloating)):
        return [float(x.real), float(x.imag)]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def _ball_and_gamma(w: SampledSequence) -> tuple[float, float, float, float]:
    """(alpha, beta, gamma, gamma without tail) over the ball samples, in one pass."""
    a = b = c = 0.0
    for z, s in w.ball_samples():
        w00 = s[(0, 0)]
        a = max(a, sup_dr_minus_one(w00))
        b = max(b, abs(complex(w00.values[0]) + z))
        c = max(c, interaction_norm(s))
    return a, b, c, max(c - w.tail_bound, 0.0)


def flow(w0: SampledSequence, config: RGConfig = RGConfig(), n_steps: int = 10,
         full_steps: int | None = None, impl: str | None = None) -> tuple[list[SampledSequence], FlowTrace]:
    """w^(0), ..., w^(n_steps) with one record per step.

    Raises BallViolation (with the step index in the message and ``.step``) when a
    kernel leaves the region where the next step is defined.
    """
    rho = config.rho
    a0, b0, c0, _ = _ball_and_gamma(w0)
    eps0 = 2.0 * max(a0, b0, c0)
    if eps0 > rho / 32:
        err = BallViolation(f"step 0: initial kernel has eps0 = {eps0:.3e} > rho/32 = {rho / 32:.3e}")
        err.step = 0
        raise err
    trace = FlowTrace(eps0=eps0)
    kernels = [w0]
    ball = (a0, b0, c0)
    g_prev = max(c0 - w0.tail_bound, 0.0)
    for n in range(n_steps):
        w = kernels[-1]
        if max(ball) > rho / 8:
            err = BallViolation(f"step {n}: kernel outside the ball of radius rho/8 "
                                f"(alpha, beta, gamma) = {ball}")
            err.step = n
            raise err
        cfg = config
        if full_steps is not None and n >= full_steps:
            # once the interaction is negligible, orders above 2 only feed the certified tail
            cfg = replace(config, vacuum_only=True, L_max=2, L_int=min(config.L_int, 2))
        try:
            st = renormalize(w, cfg, impl)
        except BallViolation as exc:
            err = BallViolation(f"step {n}: {exc}")
            err.step = n
            raise err from exc
        out = st.kernel
        a, b, c, g_exp = _ball_and_gamma(out)
        rep = None
        if not cfg.vacuum_only:
            slack = out.tail_bound / g_prev if g_prev > 0 else 0.0
            rep = ContractionReport(g_prev, g_exp, ball[1], b, ball[0], a, slack)
        rec = st.record(n)
        rec.update({"alpha": a, "beta": b, "gamma": c, "gamma_explicit": g_exp,
                    "schedule": eps0 / 2 ** (n + 1),
                    "schedule_ok": g_exp <= eps0 / 2 ** (n + 1) + out.tail_bound,
                    "vacuum_only": cfg.vacuum_only,
                    "contraction": rep.to_dict() if rep is not None else None})
        trace.steps.append(rec)
        kernels.append(out)
        ball = (a, b, c)
        g_prev = g_exp
    return kernels, trace


# energy

@dataclass(frozen=True)
class EnergyEstimate:
    value: complex
    iterates: np.ndarray      # e_(0,m), m = 0..m_max
    levels: np.ndarray        # e_(n,m_max), n = 0..m_max
    schedule_bound: float     # 2**(-m_max)
    tail_bound: float         # effect of the certified truncation tails
    increment: float          # |e_(0,m_max) - e_(0,m_max-1)|

    @property
    def error_bar(self) -> float:
        return self.schedule_bound + self.tail_bound

    @property
    def measured_error(self) -> float:
        return self.tail_bound + self.increment

    def to_dict(self) -> dict:
        return {"value": self.value, "iterates": list(self.iterates), "levels": list(self.levels),
                "schedule_bound": self.schedule_bound, "tail_bound": self.tail_bound,
                "increment": self.increment, "error_bar": self.error_bar,
                "measured_error": self.measured_error}


def _compose(kernels, rho, n_lo, m, tol, max_iter) -> list[complex]:
    """[e_(n,m) for n = n_lo..m], by J_n^{-1} applied innermost first from 0."""
    out = [0j]
    z = 0j
    for n in range(m - 1, n_lo - 1, -1):
        z = invert_E(kernels[n], rho, z, tol, max_iter).zeta
        out.append(z)
    return out[::-1]


def energy(kernels: list[SampledSequence], config: RGConfig = RGConfig(), m_max: int | None = None) -> EnergyEstimate:
    """e_(0,m_max) with the iterates e_(0,m) and an error budget."""
    m_max = len(kernels) - 1 if m_max is None else m_max
    if m_max > len(kernels) - 1:
        raise ValueError("flow is shorter than m_max")
    rho = config.rho
    iters = np.array([_compose(kernels, rho, 0, m, config.newton_tol, config.newton_max_iter)[0]
                      for m in range(m_max + 1)])
    levels = np.array(_compose(kernels, rho, 0, m_max, config.newton_tol, config.newton_max_iter))
    # an error d in w_00^(m) moves the zero of E by <= d / (1 - dev), and each J_n^{-1}
    # contracts by rho / (1 - dev_n)
    gain = 1.0
    for n in range(m_max + 1):
        dev = SpectralMap.of(kernels[n], rho).derivative_deviation()
        if dev >= 1.0:
            raise ArithmeticError(f"spectral map of step {n} is not invertible")
        gain *= 1.0 / (1.0 - dev)
    tail = rho ** m_max * kernels[m_max].vacuum_tail * gain
    inc = float(abs(iters[-1] - iters[-2])) if m_max >= 1 else 0.0
    return EnergyEstimate(complex(iters[-1]), iters, levels, 2.0 ** (-m_max), float(tail), inc)


# eigenvector

@dataclass(frozen=True, eq=False)
class Eigenvector:
    psi: np.ndarray
    space: DiscreteFockSpace
    norms: list          # ||psi_(0,m)||, m = 0..m_max
    residuals: list      # ||H_0 psi_(0,m)|| / ||psi_(0,m)||
    inverse_norms: list  # ||A_n^{-1}||, n = 0..m_max-1

    @property
    def residual(self) -> float:
        return self.residuals[-1]

    def to_dict(self) -> dict:
        return {"norms": self.norms, "residuals": self.residuals, "inverse_norms": self.inverse_norms}


def _Q_matrix(w: SampledSequence, z: complex, space: DiscreteFockSpace, rho: float) -> tuple[np.ndarray, float]:
    H = assemble_H(w, z, space).dense()
    T = sector_matrix(w.at(z)[(0, 0)], space).toarray()
    chi = cutoffs.chi_rho(space.energies, rho)
    cb = cutoffs.chibar_rho(space.energies, rho)
    pair = FeshbachPair(H, T, chi, cb, space=None, check=False)
    S = pair.bar_range
    inv_norm = 0.0
    if S.size:
        Hb = T[np.ix_(S, S)] + cb[S, None] * (H - T)[np.ix_(S, S)] * cb[None, S]
        inv_norm = 1.0 / float(sla.svdvals(Hb)[-1])
    if inv_norm > 16.0 / rho:
        raise ConditionViolation(f"||A^-1|| = {inv_norm:.3e} exceeds 16/rho")
    return np.asarray(feshbach_Q(pair)), inv_norm


def eigenvector(kernels: list[SampledSequence], est: EnergyEstimate, config: RGConfig = RGConfig(),
                cap: int = 3, m_max: int | None = None) -> Eigenvector:
    """psi_(0,m) = Q_0 G Q_1 G ... Q_{m-1} Omega on the reduced capped space, G the dilation."""
    m_max = len(est.levels) - 1 if m_max is None else m_max
    rho = config.rho
    grid = kernels[0].grid
    space = DiscreteFockSpace(cap, grid, e_max=1.0)
    G = second_quantize(dilation_one_particle(grid, rho), space)
    Qs, inv = [], []
    for n in range(m_max):
        Q, a = _Q_matrix(kernels[n], est.levels[n], space, rho)
        Qs.append(Q)
        inv.append(a)
    H0 = assemble_H(kernels[0], est.levels[0], space).matrix
    norms, res = [], []
    psi = space.vacuum
    for m in range(m_max + 1):
        v = space.vacuum
        for n in range(m - 1, -1, -1):
            v = Qs[n] @ v
            if n > 0:
                v = G @ v
        nv = float(np.linalg.norm(v))
        norms.append(nv)
        res.append(float(np.linalg.norm(H0 @ v)) / nv)
        psi = v
    return Eigenvector(psi, space, norms, res, inv)


def _embed(psi: np.ndarray, small: DiscreteFockSpace, big: DiscreteFockSpace) -> np.ndarray:
    out = np.zeros(big.dim, complex)
    for i, s in enumerate(small.basis):
        out[big.index[s]] = psi[i]
    return out


def lift_physical(model: ToyModel, E: complex, psi_red: np.ndarray, red: DiscreteFockSpace) -> tuple[np.ndarray, DiscreteFockSpace]:
    """Q_chi(E) (phi_at (x) psi) on atom (x) capped Fock space, by a sparse solve on Ran chibar."""
    space = DiscreteFockSpace(red.n_ph_max, red.grid)
    D = model.atom_dim * space.dim
    I = sp.identity(D, format="csr")
    H = model_hamiltonian(model, space) - E * I
    T = free_hamiltonian(model, space) - E * I
    W = (H - T).tocsr()
    chi, cb = initial_partition(model, space)
    v = np.zeros(D, complex)
    v[: space.dim] = _embed(psi_red, red, space)
    cv = chi * v
    out = cv.astype(complex)
    S = np.flatnonzero(cb > 1e-14)
    if S.size:
        Cs = sp.diags(cb[S])
        Hb = (T[S][:, S] + Cs @ W[S][:, S] @ Cs).tocsc()
        rhs = cb[S] * (W[S] @ cv)
        out[S] -= cb[S] * spla.spsolve(Hb, rhs)
    return out, space


@dataclass(frozen=True, eq=False)
class GroundState:
    E: complex
    psi: np.ndarray
    space: DiscreteFockSpace
    residual: float
    energy: EnergyEstimate
    eigen: Eigenvector | None
    trace: FlowTrace
    kernels: list

    @property
    def diagnostics(self) -> dict:
        d = {"E": self.E, "residual": self.residual, "energy": self.energy.to_dict(),
             "eps0": self.trace.eps0}
        if self.eigen is not None:
            d["eigen"] = self.eigen.to_dict()
        return d


def ground_state(model: ToyModel, config: SolverConfig = SolverConfig(), vectors: bool = True) -> GroundState:
    """Initial reduction, flow, energy, eigenvector and the physical lift."""
    init = initial_kernel(model, config.initial)
    kernels, trace = flow(init.kernel, config.rg, config.m_max, config.full_steps, config.impl)
    est = energy(kernels, config.rg)
    E_at = float(model.levels[0])
    E = E_at + est.value
    trace.energies = list(est.iterates)
    if not vectors:
        trace.final = (E, None)
        return GroundState(E, np.zeros(0, complex), DiscreteFockSpace(0, config.grid), float("nan"),
                           est, None, trace, kernels)
    eig = eigenvector(kernels, est, config.rg, config.psi_cap)
    trace.psi_norms = eig.norms
    psi, space = lift_physical(model, E, eig.psi, eig.space)
    H = model_hamiltonian(model, space)
    res = float(np.linalg.norm(H @ psi - E * psi) / np.linalg.norm(psi))
    trace.final = (E, res)
    return GroundState(E, psi, space, res, est, eig, trace, kernels)


def oracle_ground_state(model: ToyModel, cap: int = 3, grid=None) -> tuple[float, np.ndarray, DiscreteFockSpace]:
    """Exact lowest eigenpair of the capped matrix model (self-adjoint g only)."""
    space = DiscreteFockSpace(cap, grid or InitialSeriesConfig().grid)
    E, v = exact_ground_state(model_hamiltonian(model, space))
    return E, v, space


def overlap(a: np.ndarray, b: np.ndarray) -> float:
    return float(abs(np.vdot(a, b)) / (np.linalg.norm(a) * np.linalg.norm(b)))


def spectral_gap_scan(w0: SampledSequence, zs, cap: int = 3) -> list[tuple[float, float]]:
    """Smallest singular value of H(w^(0)(z)) for real z; recorded, not asserted."""
    space = DiscreteFockSpace(cap, w0.grid, e_max=1.0)
    return [(float(z), float(sla.svdvals(assemble_H(w0, complex(z), space).dense())[-1])) for z in zs]


# scans

def _energy_at(args) -> complex:
    model, config = args
    return ground_state(model, config, vectors=False).E


def _map(fn, items, threads: int):
    if threads <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


@dataclass(frozen=True)
class BetaScan:
    beta: np.ndarray
    energy: np.ndarray
    derivatives: dict   # order -> values on the beta grid (step h/2)
    stability: dict     # order -> |d(h/2) - d(h)| on the beta grid
    bound: float        # max over orders and grid of |d^l E|
    h: float

    def relative_stability(self, l: int) -> float:
        scale = float(np.max(np.abs(self.derivatives[l])))
        return float(np.max(self.stability[l])) / scale if scale > 0 else float(np.max(self.stability[l]))

    def rows(self) -> list[dict]:
        out = []
        for i, b in enumerate(self.beta):
            row = {"beta": float(b), "E": float(self.energy[i].real), "E_imag": float(self.energy[i].imag)}
            for l in sorted(self.derivatives):
                row[f"d{l}"] = float(self.derivatives[l][i].real)
                row[f"d{l}_err"] = float(self.stability[l][i])
            out.append(row)
        return out


def beta_smoothness_scan(model: ToyModel, config: SolverConfig = SolverConfig(), k: int = 2,
                         beta_grid=None, h: float = 0.1, threads: int = 1) -> BetaScan:
    """7-point central differences of E in beta at steps h and h/2 on a beta grid.

    The default grid has spacing h/2, so both stencils reuse the same evaluations.
    """
    if not 0 <= k <= 4:
        raise ValueError("derivative order must be between 0 and 4")
    beta_grid = np.asarray(model.beta + 0.5 * h * np.arange(9) if beta_grid is None else beta_grid, float)
    pts = {}
    for b in beta_grid:
        for step in (h, h / 2):
            for j in range(-3, 4):
                pts.setdefault(round(b + j * step, 12), None)
    keys = sorted(pts)
    vals = _map(_energy_at, [(model.with_(beta=b), config) for b in keys], threads)
    E = dict(zip(keys, vals))
    derivs, stab = {}, {}
    for l in range(k + 1):
        c = _central_weights(l)
        fine, coarse = [], []
        for b in beta_grid:
            fine.append(sum(c[j] * E[round(b + j * h / 2, 12)] for j in c) / (h / 2) ** l)
            coarse.append(sum(c[j] * E[round(b + j * h, 12)] for j in c) / h**l)
        derivs[l] = np.array(fine)
        stab[l] = np.abs(np.array(fine) - np.array(coarse))
    bound = max(float(np.max(np.abs(v))) for v in derivs.values())
    energies = np.array([E[round(b, 12)] for b in beta_grid])
    return BetaScan(beta_grid, energies, derivs, stab, bound, h)


@dataclass(frozen=True)
class GExpansion:
    g: np.ndarray
    energy: np.ndarray
    coefficients: np.ndarray   # E^(n), n = 0..n_max
    noise: float               # quadrature noise floor estimate
    overlaps: np.ndarray | None = None  # |<psi(conj g), psi(g)>| per contour point

    def odd_ratio(self) -> float:
        """max |E^(odd)| over the largest neighbouring |E^(even)|."""
        c = np.abs(self.coefficients)
        worst = 0.0
        for n in range(1, c.size, 2):
            nb = max(c[n - 1], c[n + 1] if n + 1 < c.size else 0.0)
            if nb > 0:
                worst = max(worst, c[n] / nb)
            elif c[n] > 0:
                worst = math.inf
        return worst

    def rows(self) -> list[dict]:
        return [{"n": n, "re": float(c.real), "im": float(c.imag), "abs": float(abs(c)),
                 "noise": self.noise / float(np.abs(self.g[0])) ** n}
                for n, c in enumerate(self.coefficients)]


def _contour_point(args):
    model, config, vectors = args
    gs = ground_state(model, config, vectors=vectors)
    return gs.E, (gs.psi if vectors else None)


def g_expansion(model: ToyModel, config: SolverConfig = SolverConfig(), n_max: int = 6,
                contour_radius: float = 0.05, n_points: int = 16, vectors: bool = False,
                threads: int = 1) -> GExpansion:
    """Taylor coefficients of E in g from the pipeline evaluated on a circle of complex g."""
    if n_max >= n_points:
        raise ValueError("need more contour points than coefficients")
    if contour_radius > config.initial.g_max:
        raise ValueError("contour leaves the region where the initial series is certified")
    g = contour_radius * np.exp(2j * np.pi * np.arange(n_points) / n_points)
    res = _map(_contour_point, [(model.with_(g=complex(gj)), config, vectors) for gj in g], threads)
    E = np.array([r[0] for r in res])
    coef = np.fft.fft(E) / n_points
    coef = coef[: n_max + 1] / contour_radius ** np.arange(n_max + 1)
    noise = float(np.finfo(float).eps * np.max(np.abs(E)) * math.sqrt(n_points))
    ov = None
    if vectors:
        ov = np.empty(n_points)
        for j in range(n_points):
            jb = (-j) % n_points  # conj(g_j) sits at index -j
            ov[j] = abs(np.vdot(res[jb][1], res[j][1])) / (
                np.linalg.norm(res[jb][1]) * np.linalg.norm(res[j][1]))
    return GExpansion(g, E, coef, noise, ov)


def rs_second_order(model: ToyModel, cap: int = 3, grid=None) -> complex:
    """g**2 coefficient of the ground energy by Rayleigh-Schroedinger theory on the capped matrix."""
    space = DiscreteFockSpace(cap, grid or InitialSeriesConfig().grid)
    H0 = free_hamiltonian(model, space)
    V1 = model_hamiltonian(model.with_(g=1.0, coupling=0.0), space) - H0
    V2 = model_hamiltonian(model.with_(g=1.0, linear=0.0), space) - H0
    e = H0.diagonal()
    order = np.argsort(e.real, kind="stable")
    i0 = int(order[0])
    if abs(e[order[1]] - e[i0]) < 1e-12:
        raise ValueError("unperturbed ground state is degenerate")
    col = V1[:, i0].toarray().ravel()
    row = V1[i0, :].toarray().ravel()
    mask = np.arange(e.size) != i0
    return complex(V2[i0, i0] - np.sum(row[mask] * col[mask] / (e[mask] - e[i0])))
