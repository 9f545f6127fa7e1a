"""Index bookkeeping and tail certificates for alternating Wick-ordered series."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable

Factor = tuple[int, int, int, int]  # (m, p, n, q): external/internal creators, external/internal annihilators


@lru_cache(maxsize=None)
def _tuples(sectors: frozenset, M: int, N: int, L: int) -> tuple:
    out = []

    def rec(l, alive, m_left, n_left, acc):
        # factors are chosen right to left; alive = internal photons to the right of factor l
        if l == 0:
            if alive == 0 and m_left == 0 and n_left == 0:
                out.append(tuple(reversed(acc)))
            return
        for (a, b) in sectors:
            for m in range(min(a, m_left) + 1):
                p = a - m
                for n in range(min(b, n_left) + 1):
                    q = b - n
                    if q > alive:
                        continue
                    new_alive = alive - q + p
                    # the remaining l-1 factors must be able to absorb new_alive photons
                    if new_alive > 2 * (l - 1) * max(1, max(bb for _, bb in sectors)):
                        continue
                    rec(l - 1, new_alive, m_left - m, n_left - n, acc + [(m, p, n, q)])

    rec(L, 0, M, N, [])
    return tuple(sorted(out))


def index_tuples(sectors: Iterable[tuple[int, int]], M: int, N: int, L: int) -> tuple[tuple[Factor, ...], ...]:
    """All (m_l, p_l, n_l, q_l), l = 1..L, with nonzero vacuum expectation.

    Each factor draws from a kernel sector (m+p, n+q) in ``sectors``; external
    counts sum to (M, N) and internal creations/annihilations balance so that
    no annihilator ever acts on fewer photons than it removes.
    """
    return _tuples(frozenset(sectors), M, N, L)


def binomial_weight(tup) -> int:
    w = 1
    for m, p, n, q in tup:
        w *= math.comb(m + p, p) * math.comb(n + q, q)
    return w


def max_alive(tup) -> int:
    alive = best = 0
    for m, p, n, q in reversed(tup):
        alive = alive - q + p
        best = max(best, alive)
    return best


def external_groups(tup) -> tuple[list[int], list[int]]:
    """Factor index (1-based) owning each external creation and annihilation slot."""
    cre, ann = [], []
    for l, (m, p, n, q) in enumerate(tup, start=1):
        cre += [l] * m
        ann += [l] * n
    return cre, ann


@dataclass(frozen=True)
class TailCertificate:
    """Bounds on everything an alternating series truncation discarded."""

    interaction: float  # weighted norm of dropped terms in sectors M+N >= 1
    vacuum: float       # sup norm of dropped terms in the (0,0) sector
    ratio: float        # effective geometric ratio of the series

    def to_dict(self) -> dict:
        return {"interaction": self.interaction, "vacuum": self.vacuum, "ratio": self.ratio}


def series_tail(norms: dict, t: float, ends: float, C: Callable[[int], float],
                W0: float, growth: float, computed: Callable[[int, int, int], bool],
                L_max: int, unknown: float = 0.0, vacuum_weight: float | None = None,
                ratio_limit: float = 1.0, j_min: int = 1, L_cut: int = 400) -> TailCertificate:
    """Geometric-series bound for the omitted part of sum_L (-1)^(L+1) sum_tuples prod binom V.

    A term of order L built from factor sectors s_1..s_L is bounded by
    ends * t**(L-1) * C(L) * prod_l 2**deg(s_l) * norms[s_l]; output sector (M, N)
    carries weight W0 * growth**(M+N) (vacuum: ``vacuum_weight``). ``computed(M, N, L)``
    says whether a term was evaluated explicitly. ``unknown`` bounds the summed
    2**deg-weighted norms of input sectors that are not stored; their first-order
    image is accounted for by the caller, so they enter here from L = 2 on. Outputs
    of degree below ``j_min`` are known to vanish.
    """
    vac_w = W0 if vacuum_weight is None else vacuum_weight
    sect = [(a, b, 2.0 ** (a + b) * nu) for (a, b), nu in norms.items() if nu > 0.0]
    S_known = sum(s for _, _, s in sect)
    S_grow = sum(s * max(1.0, growth) ** (a + b) for a, b, s in sect)
    S_unknown = unknown
    q = t * (S_grow + S_unknown)
    if q >= ratio_limit:
        raise ArithmeticError(f"series ratio {q:.3e} exceeds {ratio_limit}")
    w_max = W0 * (1.0 if growth >= 1.0 else growth ** j_min)  # bound on W0 * growth**j, j >= j_min
    inter = 0.0
    vac = 0.0

    # explicitly enumerated orders: terms of known sectors that were skipped
    states = {(0, 0): 1.0}  # (total creators, total annihilators) -> summed weight
    for L in range(1, L_max + 1):
        nxt: dict = {}
        for (A, B), w in states.items():
            for a, b, s in sect:
                key = (A + a, B + b)
                nxt[key] = nxt.get(key, 0.0) + w * s
        states = nxt
        pref = ends * t ** (L - 1) * C(L)
        for (A, B), w in states.items():
            # w carries 2**deg per factor, which already covers every split into
            # contracted and external legs; so the skipped outputs of this (A, B)
            # are bounded by w times the largest weight among them, not the sum
            worst = 0.0
            for P in range(min(A, B) + 1):
                M, N = A - P, B - P
                if computed(M, N, L):
                    continue
                if M + N == 0:
                    vac += pref * w * vac_w
                else:
                    worst = max(worst, W0 * growth ** (M + N))
            inter += pref * w * worst
        if S_unknown > 0.0 and L >= 2:
            inter += pref * ((S_grow + S_unknown) ** L - S_grow**L) * w_max
            vac += pref * ((S_known + S_unknown) ** L - S_known**L) * vac_w

    # orders beyond L_max: everything is dropped
    for L in range(L_max + 1, L_cut):
        pref = ends * t ** (L - 1) * C(L)
        term_i = pref * (S_grow + S_unknown) ** L * w_max
        term_v = pref * (S_known + S_unknown) ** L * vac_w
        inter += term_i
        vac += term_v
        if term_i + term_v <= 1e-300 or (term_i + term_v) < 1e-18 * max(inter + vac, 1e-300):
            break
    return TailCertificate(inter, vac, q)
