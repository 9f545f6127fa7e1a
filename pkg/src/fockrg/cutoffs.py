"""Smooth partition-of-unity cutoffs on the field-energy axis."""
from __future__ import annotations

import numpy as np


def smoothstep(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    out = np.where(t >= 1.0, 1.0, 0.0)
    inside = (t > 0.0) & (t < 1.0)
    ti = t[inside]
    with np.errstate(over="ignore"):
        out[inside] = 1.0 / (1.0 + np.exp(1.0 / ti - 1.0 / (1.0 - ti)))
    return out


def smoothstep_prime(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = (t > 0.0) & (t < 1.0)
    ti = t[inside]
    s = smoothstep(ti)
    out[inside] = s * (1.0 - s) * (1.0 / ti**2 + 1.0 / (1.0 - ti) ** 2)
    return out


def _arg(x):
    return 4.0 * (np.asarray(x, dtype=float) - 0.75)


def chi(x):
    """Low-energy cutoff: 1 on [0, 3/4], 0 beyond 1."""
    s = smoothstep(_arg(x))
    return np.where(s >= 1.0, 0.0, np.cos(0.5 * np.pi * s))  # cos(pi/2) is not exactly 0


def chibar(x):
    return np.sin(0.5 * np.pi * smoothstep(_arg(x)))


def chi_prime(x):
    a = _arg(x)
    return -np.sin(0.5 * np.pi * smoothstep(a)) * 2.0 * np.pi * smoothstep_prime(a)


def chibar_prime(x):
    a = _arg(x)
    return np.cos(0.5 * np.pi * smoothstep(a)) * 2.0 * np.pi * smoothstep_prime(a)


def chi_rho(x, rho: float):
    return chi(np.asarray(x, dtype=float) / rho)


def chibar_rho(x, rho: float):
    return chibar(np.asarray(x, dtype=float) / rho)


def sup_derivatives(n: int = 20001) -> tuple[float, float]:
    """Sup norms of chi' and chibar' sampled on [3/4, 1]."""
    x = np.linspace(0.75, 1.0, n)
    return float(np.abs(chi_prime(x)).max()), float(np.abs(chibar_prime(x)).max())
