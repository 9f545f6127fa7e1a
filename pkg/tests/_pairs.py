"""Random Feshbach pairs with a kernel of known dimension."""
from __future__ import annotations

import numpy as np

from fockrg import cutoffs
from fockrg.feshbach import FeshbachPair


def random_pair(rng: np.random.Generator, dim: int, kdim: int = 1, hermitian: bool = True,
                strength: float = 0.05) -> FeshbachPair:
    """H - z and T - z built from kdim identical blocks, z the lowest level of a block.

    The block has diagonal part e in [0, 2] with e[0] = 0, so the partition
    chi(e) has a smooth transition region and T - z is invertible on Ran chibar.
    """
    b = dim // kdim
    e = np.sort(rng.uniform(0.0, 2.0, b))
    e[0] = 0.0
    W = rng.normal(size=(b, b)) + 1j * rng.normal(size=(b, b))
    if hermitian:
        W = W + W.conj().T
    W *= strength / np.linalg.norm(W, 2)
    Hb = np.diag(e) + W
    ev = np.linalg.eigvals(Hb)
    z = ev[np.argmin(ev.real)]
    eye = np.eye(kdim)
    H = np.kron(eye, Hb - z * np.eye(b))
    T = np.kron(eye, np.diag(e - z))
    ee = np.tile(e, kdim)
    return FeshbachPair(H, T, cutoffs.chi(ee), cutoffs.chibar(ee))
