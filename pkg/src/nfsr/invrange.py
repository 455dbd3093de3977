"""Inverse-range coordinate map, panelized Fourier fits, and lifting matrices.

The curvature coefficients F_{n,q}(x) on x = 1/r in [1/r_max, 1/r_min] are
fitted panel-by-panel in the periodic coordinate u, blended with a smooth
partition of unity, projected onto the global basis {e^{jku} : |k| <= K_u},
and regrouped with the Bessel table into per-antenna lifting matrices Phi_n
of size N_u x N_b.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .config import ArrayConfig
from .harmonics import HarmonicExpansion, j_power

PANEL_NODES = 64
DENSE_GRID = 1024
# Panels extend this fraction of the panel width past each interior edge,
# giving an overlap region of a quarter panel width per boundary.
OVERLAP_FRACTION = 0.125


class InverseRangeMap:
    """Affine periodic map u(r) = 2*pi*(1/r - x_min)/(x_max - x_min)."""

    def __init__(self, r_min: float, r_max: float):
        if not (0 < r_min < r_max):
            raise ValueError("need 0 < r_min < r_max")
        self.x_min = 1.0 / r_max
        self.x_max = 1.0 / r_min

    @classmethod
    def from_config(cls, cfg: ArrayConfig) -> "InverseRangeMap":
        return cls(cfg.r_min, cfg.r_max)

    def u_of_x(self, x):
        return 2 * np.pi * (np.asarray(x, dtype=float) - self.x_min) / (
            self.x_max - self.x_min
        )

    def u_of_r(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < 1.0 / self.x_max - 1e-12) or np.any(r > 1.0 / self.x_min + 1e-12):
            raise ValueError("range outside [r_min, r_max]")
        out = self.u_of_x(1.0 / r)
        return float(out) if out.ndim == 0 else out

    def r_of_u(self, u):
        u = np.asarray(u, dtype=float)
        if np.any(u < -1e-12) or np.any(u > 2 * np.pi + 1e-12):
            raise ValueError("u outside [0, 2*pi]")
        x = self.x_min + (self.x_max - self.x_min) * u / (2 * np.pi)
        out = 1.0 / x
        return float(out) if out.ndim == 0 else out


class PanelLayout:
    """Equal-width x-panels with raised-cosine partition-of-unity windows."""

    def __init__(self, cfg: ArrayConfig):
        self.n_panels = cfg.n_panels
        rmap = InverseRangeMap.from_config(cfg)
        self.x_min, self.x_max = rmap.x_min, rmap.x_max
        self.width = (self.x_max - self.x_min) / cfg.n_panels
        self.edges = self.x_min + self.width * np.arange(cfg.n_panels + 1)
        self.delta = OVERLAP_FRACTION * self.width

    def bounds(self, p: int) -> tuple[float, float]:
        lo = self.edges[p] - (self.delta if p > 0 else 0.0)
        hi = self.edges[p + 1] + (self.delta if p < self.n_panels - 1 else 0.0)
        return lo, hi

    def window(self, p: int, x: np.ndarray) -> np.ndarray:
        """Blend window of panel p; windows sum to 1 on [x_min, x_max]."""
        lo, hi = self.bounds(p)
        out = np.ones_like(x)
        if p > 0:
            s = np.clip((x - (self.edges[p] - self.delta)) / (2 * self.delta), 0, 1)
            out = out * np.sin(np.pi / 2 * s) ** 2
        if p < self.n_panels - 1:
            s = np.clip((x - (self.edges[p + 1] - self.delta)) / (2 * self.delta), 0, 1)
            out = out * np.cos(np.pi / 2 * s) ** 2
        out[(x < lo) | (x > hi)] = 0.0
        return out


@dataclass
class PanelFit:
    """Ridge-regularized weighted Fourier fit of F_{n,q} on one panel."""

    panel: int
    nodes_x: np.ndarray
    nodes_u: np.ndarray
    weights: np.ndarray
    coeffs: np.ndarray  # local coefficients a[k], |k| <= K_loc


def fit_panel(cfg: ArrayConfig, n: int, q: int, p: int) -> PanelFit:
    """Fit F_{n,q} on panel p: minimize the weighted squared residual of
    sum_k a[k] e^{jk u} plus mu*||a||^2, over |k| <= K_loc.

    Solved through a square-root-weighted augmented least-squares system,
    equivalent to the ridge normal equations but numerically stable.
    """
    from .harmonics import fresnel_coeff

    if not (0 <= p < cfg.n_panels):
        raise ValueError("panel index out of range")
    layout = PanelLayout(cfg)
    rmap = InverseRangeMap.from_config(cfg)
    lo, hi = layout.bounds(p)
    xs = np.linspace(lo, hi, PANEL_NODES)
    us = rmap.u_of_x(xs)
    # Weights proportional to r^2 = 1/x^2, normalized to unit sum.
    wts = 1.0 / (xs * xs)
    wts /= wts.sum()
    k_loc = np.arange(-cfg.k_loc, cfg.k_loc + 1)
    basis = np.exp(1j * np.outer(us, k_loc))
    sw = np.sqrt(wts)
    n_coef = 2 * cfg.k_loc + 1
    a_aug = np.vstack([basis * sw[:, None], np.sqrt(cfg.ridge_mu) * np.eye(n_coef)])
    f_vals = fresnel_coeff(cfg, n, q, xs)
    f_aug = np.concatenate([np.atleast_1d(f_vals) * sw, np.zeros(n_coef)])
    coeffs, _, rank, _ = np.linalg.lstsq(a_aug, f_aug, rcond=None)
    if rank < n_coef:
        raise np.linalg.LinAlgError(
            f"rank-deficient panel fit (n={n}, q={q}, panel={p})"
        )
    return PanelFit(panel=p, nodes_x=xs, nodes_u=us, weights=wts, coeffs=coeffs)


@dataclass
class LiftedBasis:
    """Global inverse-range coefficients and per-antenna lifting matrices.

    a_nq[n, qi, ki] holds a_{n,q}[k] for q = qi - I_2, k = ki - K_u.
    phi[n] is the N_u x N_b matrix with
    Phi_n[k, m] = sum_{l + 2q = k_theta(m)} j^{l+q} J_l(k_lambda n d) a_{n,q}[k].
    fit_error[n, qi] is max_x |Fhat - F| / max_x |F| on the dense grid.
    """

    cfg: ArrayConfig
    a_nq: np.ndarray
    phi: np.ndarray
    fit_error: np.ndarray

    @property
    def rmap(self) -> InverseRangeMap:
        return InverseRangeMap.from_config(self.cfg)


def build_basis(cfg: ArrayConfig) -> LiftedBasis:
    """Fit, blend, project, and regroup into the lifting matrices."""
    from .harmonics import fresnel_coeff

    rmap = InverseRangeMap.from_config(cfg)
    layout = PanelLayout(cfg)
    n_q = 2 * cfg.i2 + 1
    qs = np.arange(-cfg.i2, cfg.i2 + 1)
    k_loc = np.arange(-cfg.k_loc, cfg.k_loc + 1)
    k_us = cfg.k_u_all
    u_dense = np.linspace(0, 2 * np.pi, DENSE_GRID, endpoint=False)
    x_dense = rmap.x_min + (rmap.x_max - rmap.x_min) * u_dense / (2 * np.pi)
    windows = np.array([layout.window(p, x_dense) for p in range(cfg.n_panels)])
    eval_dense = np.exp(1j * np.outer(u_dense, k_loc))
    proj = np.exp(-1j * np.outer(k_us, u_dense)) / DENSE_GRID
    recon = np.exp(1j * np.outer(u_dense, k_us))

    a_nq = np.zeros((cfg.n_antennas, n_q, cfg.n_u), dtype=complex)
    fit_error = np.zeros((cfg.n_antennas, n_q))
    for n in range(cfg.n_antennas):
        for qi, q in enumerate(qs):
            f_hat = np.zeros(DENSE_GRID, dtype=complex)
            for p in range(cfg.n_panels):
                fit = fit_panel(cfg, n, int(q), p)
                f_hat += windows[p] * (eval_dense @ fit.coeffs)
            a_nq[n, qi] = proj @ f_hat
            f_true = np.atleast_1d(fresnel_coeff(cfg, n, int(q), x_dense))
            f_rec = recon @ a_nq[n, qi]
            denom = max(np.max(np.abs(f_true)), 1e-300)
            fit_error[n, qi] = np.max(np.abs(f_rec - f_true)) / denom

    he = HarmonicExpansion(cfg)
    phi = np.zeros((cfg.n_antennas, cfg.n_u, cfg.n_b), dtype=complex)
    ells = np.arange(-cfg.i1, cfg.i1 + 1)
    for n in range(cfg.n_antennas):
        for li, ell in enumerate(ells):
            for qi, q in enumerate(qs):
                m = ell + 2 * q + cfg.i_off  # zero-based column for k_theta = l + 2q
                phi[n, :, m] += j_power(ell + q) * he.table[n, li] * a_nq[n, qi]
    return LiftedBasis(cfg=cfg, a_nq=a_nq, phi=phi, fit_error=fit_error)


def atom_matrix(cfg: ArrayConfig, u: float, theta: float) -> np.ndarray:
    """Rank-one atom with entries e^{jku} e^{j k_theta(m) theta}."""
    return np.exp(
        1j * (cfg.k_u_all[:, None] * u + cfg.k_theta_all[None, :] * theta)
    )


def lifted_inner(basis: LiftedBasis, n: int, u: float, theta: float) -> complex:
    """Model steering entry <Phi_n, atom(u, theta)> under the unconjugated pairing."""
    if not (-1e-12 <= u <= 2 * np.pi + 1e-12):
        raise ValueError("u outside [0, 2*pi]")
    if not (0 <= theta < np.pi):
        raise ValueError("theta outside [0, pi)")
    return complex(np.sum(basis.phi[n] * atom_matrix(basis.cfg, u, theta)))


# ---------------------------------------------------------------------------
# Basis cache: magic + version + config hash + little-endian complex tensors.

_CACHE_MAGIC = b"NFSRBAS1"
_CACHE_VERSION = 1


def save_basis(basis: LiftedBasis, path: str) -> None:
    cfg = basis.cfg
    with open(path, "wb") as fh:
        fh.write(_CACHE_MAGIC)
        fh.write(struct.pack("<I", _CACHE_VERSION))
        h = cfg.config_hash().encode()
        fh.write(struct.pack("<I", len(h)))
        fh.write(h)
        for arr, dt in (
            (basis.a_nq, "<c16"),
            (basis.phi, "<c16"),
            (basis.fit_error, "<f8"),
        ):
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype=dt).tobytes())


class CacheMismatch(Exception):
    """Cache file is missing, corrupt, or built from a different config."""


def load_basis(cfg: ArrayConfig, path: str) -> LiftedBasis:
    if not os.path.exists(path):
        raise CacheMismatch(f"no cache file at {path}")
    try:
        with open(path, "rb") as fh:
            if fh.read(8) != _CACHE_MAGIC:
                raise CacheMismatch("bad magic bytes")
            (version,) = struct.unpack("<I", fh.read(4))
            if version != _CACHE_VERSION:
                raise CacheMismatch(f"unsupported cache version {version}")
            (hlen,) = struct.unpack("<I", fh.read(4))
            if fh.read(hlen).decode() != cfg.config_hash():
                raise CacheMismatch("config hash mismatch")
            arrays = []
            for dt in ("<c16", "<c16", "<f8"):
                (ndim,) = struct.unpack("<I", fh.read(4))
                shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
                count = int(np.prod(shape))
                buf = fh.read(count * np.dtype(dt).itemsize)
                arrays.append(np.frombuffer(buf, dtype=dt).reshape(shape).copy())
    except (struct.error, ValueError) as exc:
        raise CacheMismatch(f"corrupt cache file: {exc}") from exc
    a_nq, phi, fit_error = arrays
    return LiftedBasis(
        cfg=cfg,
        a_nq=a_nq.astype(complex),
        phi=phi.astype(complex),
        fit_error=fit_error.astype(float),
    )


def load_or_build_basis(cfg: ArrayConfig, cache_dir: str | None = None) -> LiftedBasis:
    """Load from the cache directory if the config hash matches, else build and save."""
    if cache_dir is None:
        return build_basis(cfg)
    os.makedirs(cache_dir, exist_ok=True)
    path = os.path.join(cache_dir, f"basis_{cfg.config_hash()}.bin")
    try:
        return load_basis(cfg, path)
    except CacheMismatch:
        basis = build_basis(cfg)
        save_basis(basis, path)
        return basis
