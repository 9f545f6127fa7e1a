"""Smooth Feshbach map and its eigenvector lift on finite matrices."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .fock import DiscreteFockSpace, FockOperator

PARTITION_TOL = 1e-12
RANGE_TOL = 1e-14
COND_LIMIT = 1e12
KERNEL_TOL = 1e-8


class FeshbachError(ValueError):
    """Raised when a matrix pair cannot be used for a Feshbach reduction."""


def _dense(a) -> np.ndarray:
    if isinstance(a, FockOperator):
        a = a.matrix
    if sp.issparse(a):
        return a.toarray().astype(complex)
    return np.asarray(a, dtype=complex)


def _diag_of(a) -> np.ndarray:
    m = _dense(a)
    if m.ndim == 1:
        if np.any(np.abs(m.imag) > PARTITION_TOL):
            raise FeshbachError("partition operators must be real")
        return m.real.copy()
    off = m - np.diag(np.diag(m))
    if np.any(np.abs(off) > PARTITION_TOL):
        raise FeshbachError("partition operators must be diagonal in the occupation basis")
    return np.diag(m).real


@dataclass(eq=False)
class FeshbachPair:
    """Operators H and T with a diagonal partition chi**2 + chibar**2 = 1.

    ``chi`` and ``chibar`` may be given as diagonal matrices or as the vectors of
    their diagonals.
    """

    H: object
    T: object
    chi: object
    chibar: object
    space: DiscreteFockSpace | None = None
    check: bool = True
    W: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.H = _dense(self.H)
        self.T = _dense(self.T)
        self.chi = _diag_of(self.chi)
        self.chibar = _diag_of(self.chibar)
        n = self.H.shape[0]
        if self.H.shape != (n, n) or self.T.shape != (n, n) or self.chi.size != n or self.chibar.size != n:
            raise FeshbachError("operator shapes do not match")
        if np.max(np.abs(self.chi**2 + self.chibar**2 - 1.0)) > PARTITION_TOL:
            raise FeshbachError("chi**2 + chibar**2 != 1")
        self.W = self.H - self.T
        if self.check:
            rep = pair_conditions(self)
            if not rep.ok:
                raise FeshbachError(f"not a Feshbach pair: {rep.reason}")

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    @property
    def bar_range(self) -> np.ndarray:
        return np.flatnonzero(self.chibar > RANGE_TOL)

    def wrap(self, m: np.ndarray):
        return FockOperator(m, self.space) if self.space is not None else m


@dataclass(frozen=True)
class PairReport:
    partition_residual: float
    commutator_chi_T: float
    commutator_chibar_T: float
    min_singular_T: float
    neumann_left: float   # ||T^-1 chibar W chibar|| on Ran chibar
    neumann_right: float  # ||chibar W chibar T^-1|| on Ran chibar
    ok: bool
    reason: str = ""

    @property
    def margins(self) -> tuple[float, float]:
        return 1.0 - self.neumann_left, 1.0 - self.neumann_right

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["margins"] = list(self.margins)
        return d


def pair_conditions(pair: FeshbachPair, tol: float = PARTITION_TOL) -> PairReport:
    """Matrix form of the sufficient conditions for a Feshbach pair."""
    chi, cb, T, W = pair.chi, pair.chibar, pair.T, pair.W
    part = float(np.max(np.abs(chi**2 + cb**2 - 1.0))) if chi.size else 0.0
    c1 = float(np.max(np.abs(chi[:, None] * T - T * chi[None, :]), initial=0.0))
    c2 = float(np.max(np.abs(cb[:, None] * T - T * cb[None, :]), initial=0.0))
    S = pair.bar_range
    if S.size == 0:
        return PairReport(part, c1, c2, np.inf, 0.0, 0.0, part <= tol and c1 <= tol and c2 <= tol)
    TS = T[np.ix_(S, S)]
    sv = sla.svdvals(TS)
    smin = float(sv[-1])
    if smin <= sv[0] / COND_LIMIT:
        raise FeshbachError("T is singular on Ran chibar")
    B = cb[S, None] * W[np.ix_(S, S)] * cb[None, S]
    left = float(sla.norm(sla.solve(TS, B), 2))
    right = float(sla.norm(sla.solve(TS.T, B.T).T, 2))
    reasons = []
    if part > tol:
        reasons.append(f"partition residual {part:.2e}")
    if max(c1, c2) > tol:
        reasons.append(f"partition does not commute with T ({max(c1, c2):.2e})")
    if left >= 1.0 or right >= 1.0:
        reasons.append(f"Neumann norms {left:.3f}, {right:.3f} not below 1")
    return PairReport(part, c1, c2, smin, left, right, not reasons, "; ".join(reasons))


def _bar_solve(pair: FeshbachPair, rhs: np.ndarray) -> np.ndarray:
    """H_chibar^{-1} restricted to Ran chibar, applied to rows S of rhs."""
    S = pair.bar_range
    cb = pair.chibar[S]
    Hb = pair.T[np.ix_(S, S)] + cb[:, None] * pair.W[np.ix_(S, S)] * cb[None, :]
    lu = sla.lu_factor(Hb)
    rc = np.linalg.cond(Hb)
    if not np.isfinite(rc) or rc > COND_LIMIT:
        raise FeshbachError(f"H_chibar is numerically singular on Ran chibar (cond {rc:.2e})")
    return sla.lu_solve(lu, rhs[S])


def feshbach_map(pair: FeshbachPair):
    """F = T + chi W chi - chi W chibar H_chibar^{-1} chibar W chi."""
    chi, cb, T, W = pair.chi, pair.chibar, pair.T, pair.W
    F = T + chi[:, None] * W * chi[None, :]
    S = pair.bar_range
    if S.size:
        rhs = cb[:, None] * W * chi[None, :]
        X = _bar_solve(pair, rhs)
        F = F - (chi[:, None] * W[:, S] * cb[None, S]) @ X
    return pair.wrap(F)


def feshbach_Q(pair: FeshbachPair):
    """Q = chi - chibar H_chibar^{-1} chibar W chi, lifting ker F to ker H."""
    chi, cb, W = pair.chi, pair.chibar, pair.W
    Q = np.diag(chi).astype(complex)
    S = pair.bar_range
    if S.size:
        X = _bar_solve(pair, cb[:, None] * W * chi[None, :])
        Q[S] -= cb[S, None] * X
    return pair.wrap(Q)


def neumann_bar_inverse(pair: FeshbachPair, tol: float = 1e-15, max_terms: int = 500) -> np.ndarray:
    """H_chibar^{-1} on Ran chibar as sum_n (-T^{-1} chibar W chibar)^n T^{-1}."""
    S = pair.bar_range
    cb = pair.chibar[S]
    TS = pair.T[np.ix_(S, S)]
    Tinv = sla.inv(TS)
    K = -Tinv @ (cb[:, None] * pair.W[np.ix_(S, S)] * cb[None, :])
    if sla.norm(K, 2) >= 1.0:
        raise FeshbachError("Neumann series does not converge")
    term = Tinv
    total = Tinv.copy()
    for _ in range(max_terms):
        term = K @ term
        total += term
        if sla.norm(term) <= tol * sla.norm(total):
            break
    return total


def numerical_kernel(A, tol: float = KERNEL_TOL, scale: float | None = None) -> np.ndarray:
    """Orthonormal basis of right singular vectors with sigma <= tol * scale (default ||A||)."""
    A = _dense(A)
    if A.size == 0:
        return np.zeros((0, 0), complex)
    _, s, vh = sla.svd(A)
    scale = max(s[0] if scale is None else scale, 1e-300)
    null = np.concatenate([s, np.zeros(A.shape[1] - s.size)]) <= tol * scale
    return vh.conj().T[:, null]


def kernel_dimensions(pair: FeshbachPair, tol: float = KERNEL_TOL) -> tuple[int, int]:
    """(dim ker H, dim ker F restricted to Ran chi)."""
    F = _dense(feshbach_map(pair))
    R = np.flatnonzero(pair.chi > RANGE_TOL)
    scale = float(sla.norm(pair.H, 2))  # a common scale, so a tiny F is not its own yardstick
    return (numerical_kernel(pair.H, tol, scale).shape[1],
            numerical_kernel(F[np.ix_(R, R)], tol, scale).shape[1])


def lift_residuals(pair: FeshbachPair, tol: float = KERNEL_TOL) -> list[tuple[float, float]]:
    """For unit v in ker F (on Ran chi): (||H Q v||, ||chi Q v - v||)."""
    F = _dense(feshbach_map(pair))
    Q = _dense(feshbach_Q(pair))
    R = np.flatnonzero(pair.chi > RANGE_TOL)
    out = []
    for u in numerical_kernel(F[np.ix_(R, R)], tol, float(sla.norm(pair.H, 2))).T:
        v = np.zeros(pair.dim, complex)
        v[R] = u
        Qv = Q @ v
        out.append((float(np.linalg.norm(pair.H @ Qv)), float(np.linalg.norm(pair.chi * Qv - v))))
    return out
