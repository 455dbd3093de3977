"""Truncated Jacobi-Anger harmonic expansion of the Fresnel steering vector.

The Fresnel entry factors into an angular part expanded in harmonics
e^{j l theta} with Bessel weights J_l(k_lambda n d) and a curvature part
expanded via F_{n,q}(x) = e^{-j alpha_n x} J_q(alpha_n x) in harmonics
e^{j 2 q theta}, x = 1/r.
"""

from __future__ import annotations

import numpy as np

from .bessel import bessel_j_row, bessel_table
from .config import ArrayConfig

# Powers of the imaginary unit, indexed by exponent mod 4.
_J_POW = np.array([1, 1j, -1, -1j])


def j_power(p) -> np.ndarray | complex:
    """Exact j**p for integer p via (p mod 4) lookup."""
    return _J_POW[np.asarray(p) % 4]


class HarmonicExpansion:
    """Precomputed J_l(k_lambda n d) table, indexed (n, l) for |l| <= I_1."""

    def __init__(self, cfg: ArrayConfig):
        self.cfg = cfg
        z = cfg.k_lambda * np.arange(cfg.n_antennas) * cfg.spacing
        # table[n, i1 + l] = J_l(k_lambda n d)
        self.table = bessel_table(z, cfg.i1).T

    def j_l(self, n: int, ell: int) -> float:
        return self.table[n, self.cfg.i1 + ell]


def fresnel_coeff(cfg: ArrayConfig, n: int, q: int, x) -> np.ndarray | complex:
    """Curvature coefficient F_{n,q}(x) = e^{-j alpha_n x} J_q(alpha_n x)."""
    if abs(q) > cfg.i2:
        raise ValueError(f"|q| = {abs(q)} exceeds I_2 = {cfg.i2}")
    if not (0 <= n < cfg.n_antennas):
        raise ValueError("antenna index out of range")
    x = np.asarray(x, dtype=float)
    x_min, x_max = 1.0 / cfg.r_max, 1.0 / cfg.r_min
    if np.any(x < x_min - 1e-12) or np.any(x > x_max + 1e-12):
        raise ValueError("inverse range outside [1/r_max, 1/r_min]")
    z = cfg.alpha(n) * x
    jq = np.array([bessel_j_row(zi, abs(q))[abs(q)] for zi in np.atleast_1d(z)])
    if q < 0 and q % 2 != 0:
        jq = -jq
    out = np.exp(-1j * z) * jq.reshape(np.shape(z))
    return out if out.ndim else complex(out)


def expansion_eval(he: HarmonicExpansion, r: float, theta: float, n: int) -> complex:
    """Truncated double harmonic sum approximating the Fresnel steering entry.

    sum over |l| <= I_1, |q| <= I_2 of
    j^{l+q} J_l(k_lambda n d) F_{n,q}(1/r) e^{j (l + 2q) theta}.
    """
    cfg = he.cfg
    if not (cfg.r_min <= r <= cfg.r_max):
        raise ValueError("range outside configured interval")
    x = 1.0 / r
    ells = np.arange(-cfg.i1, cfg.i1 + 1)
    qs = np.arange(-cfg.i2, cfg.i2 + 1)
    f_q = np.array([fresnel_coeff(cfg, n, int(q), x) for q in qs])
    jl = he.table[n]
    total = 0.0 + 0.0j
    for qi, q in enumerate(qs):
        term = np.sum(
            j_power(ells + q) * jl * f_q[qi] * np.exp(1j * (ells + 2 * q) * theta)
        )
        total += term
    return complex(total)


def truncation_profile(he: HarmonicExpansion, r: float, theta: float) -> np.ndarray:
    """Per-antenna deviation |expansion - fresnel| (report-only diagnostic)."""
    from .arraymodel import fresnel_steering

    cfg = he.cfg
    fres = fresnel_steering(cfg, r, theta)
    exp_vals = np.array(
        [expansion_eval(he, r, theta, n) for n in range(cfg.n_antennas)]
    )
    return np.abs(exp_vals - fres)
