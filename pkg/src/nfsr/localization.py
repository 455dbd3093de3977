"""Dual-polynomial localization, peak refinement, gains, and support metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import maximum_filter
from scipy.optimize import least_squares, linear_sum_assignment

from .arraymodel import PathParam, synthesize_channel
from .config import ArrayConfig
from .invrange import InverseRangeMap, atom_matrix
from .measurement import MeasurementEnsemble, vec


class RankDeficiencyError(Exception):
    """Gain system is numerically rank deficient for the given support."""


@dataclass
class PathEstimate:
    u_hat: float
    theta_hat: float
    r_hat: float
    gain_hat: complex
    certificate: float  # |Q| at the refined peak


class DualPolynomial:
    """Trigonometric polynomial Q(u, theta) = sum_{k,m} C[k,m] e^{jku} e^{j k_theta(m) theta}."""

    def __init__(self, cfg: ArrayConfig, coeffs: np.ndarray):
        if coeffs.shape != (cfg.n_u, cfg.n_b):
            raise ValueError("coefficient matrix has wrong shape")
        self.cfg = cfg
        self.coeffs = coeffs

    @classmethod
    def from_dual(cls, ens: MeasurementEnsemble, q: np.ndarray) -> "DualPolynomial":
        """C = sum_m conj(q[m]) Psi_m — the sensing adjoint applied to q."""
        cfg = ens.cfg
        c = (ens.bprime.T @ np.conj(q)).reshape(cfg.n_u, cfg.n_b, order="F")
        return cls(cfg, c)

    def eval(self, u, theta) -> np.ndarray | complex:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        e_u = np.exp(1j * np.outer(u, self.cfg.k_u_all))
        e_t = np.exp(1j * np.outer(self.cfg.k_theta_all, theta))
        out = e_u @ self.coeffs @ e_t
        return complex(out[0, 0]) if out.size == 1 else out

    def eval_grid(self, h_u: int, h_theta: int, theta_max: float = np.pi):
        """One batched evaluation on a uniform grid [0,2pi) x [0,theta_max)."""
        u = np.linspace(0, 2 * np.pi, h_u, endpoint=False)
        theta = np.linspace(0, theta_max, h_theta, endpoint=False)
        return u, theta, self.eval(u, theta)

    def _partials(self, u: float, theta: float):
        """Q and its first/second partial derivatives at a point."""
        ku = self.cfg.k_u_all[:, None]
        kt = self.cfg.k_theta_all[None, :]
        a = atom_matrix(self.cfg, u, theta)
        c = self.coeffs
        q = np.sum(c * a)
        qu = np.sum(c * (1j * ku) * a)
        qt = np.sum(c * (1j * kt) * a)
        quu = np.sum(c * (1j * ku) ** 2 * a)
        qtt = np.sum(c * (1j * kt) ** 2 * a)
        qut = np.sum(c * (1j * ku) * (1j * kt) * a)
        return q, qu, qt, quu, qtt, qut

    def refine_peak(self, u: float, theta: float, max_iter: int = 50):
        """Newton ascent on |Q|^2 from a grid candidate to a stationary point."""
        for _ in range(max_iter):
            q, qu, qt, quu, qtt, qut = self._partials(u, theta)
            g = 2 * np.array([(np.conj(q) * qu).real, (np.conj(q) * qt).real])
            h = 2 * np.array(
                [
                    [
                        (np.conj(qu) * qu + np.conj(q) * quu).real,
                        (np.conj(qu) * qt + np.conj(q) * qut).real,
                    ],
                    [
                        (np.conj(qt) * qu + np.conj(q) * qut).real,
                        (np.conj(qt) * qt + np.conj(q) * qtt).real,
                    ],
                ]
            )
            if np.linalg.norm(g) < 1e-13:
                break
            try:
                step = np.linalg.solve(h, g)
            except np.linalg.LinAlgError:
                break
            # Newton targets a stationary point; for a maximum the Hessian is
            # negative definite and the solve already points uphill.
            if not np.all(np.isfinite(step)) or np.linalg.norm(step) > 0.5:
                step = step / max(np.linalg.norm(step) / 0.5, 1.0)
            u, theta = u - step[0], theta - step[1]
        return u % (2 * np.pi), theta


def find_peaks(
    dp: DualPolynomial,
    threshold: float = 0.99,
    grid: tuple[int, int] = (512, 512),
    theta_max: float = np.pi,
) -> list[tuple[float, float, float]]:
    """Local maxima of |Q| above threshold, Newton-refined; returns (u, theta, |Q|)."""
    if not (0 < threshold < 1):
        raise ValueError("threshold must be in (0, 1)")
    h_u, h_t = grid
    if h_u < 4 * dp.cfg.n_u or h_t < 4 * dp.cfg.n_b:
        raise ValueError("grid must oversample the polynomial degrees by >= 4x")
    ug, tg, qv = dp.eval_grid(h_u, h_t, theta_max)
    mag = np.abs(qv)
    local_max = (
        mag == maximum_filter(mag, size=13, mode=("wrap", "constant"))
    ) & (mag >= threshold)
    peaks = []
    for i, j in np.argwhere(local_max):
        u, theta = dp.refine_peak(ug[i], tg[j])
        if not (0 <= theta < theta_max):
            continue
        val = abs(dp.eval(u, theta))
        peaks.append((float(u), float(theta), float(val)))
    # Merge duplicates within one grid cell, keeping the larger |Q|.
    peaks.sort(key=lambda p: -p[2])
    merged: list[tuple[float, float, float]] = []
    du, dt = 2 * np.pi / h_u, theta_max / h_t
    for p in peaks:
        dup = any(
            min(abs(p[0] - m[0]), 2 * np.pi - abs(p[0] - m[0])) < du
            and abs(p[1] - m[1]) < dt
            for m in merged
        )
        if not dup:
            merged.append(p)
    return merged


def refine_atoms(
    ens: MeasurementEnsemble,
    y: np.ndarray,
    init: list[tuple[float, float]],
) -> list[tuple[float, float, complex]]:
    """Joint nonlinear least squares over atom locations and gains.

    Minimizes ||y - sum_l c_l B' vec(atom(u_l, theta_l))|| starting from the
    certificate peaks; locations are wrapped back into their domains.
    """
    cfg = ens.cfg
    n_atoms = len(init)
    if n_atoms == 0:
        return []

    def response(u, theta):
        return ens.bprime @ vec(atom_matrix(cfg, u, theta))

    g0 = np.array([response(u, t) for u, t in init]).T
    c0, *_ = np.linalg.lstsq(g0, y, rcond=None)
    p0 = []
    for (u, t), c in zip(init, c0):
        p0 += [u, t, c.real, c.imag]

    def residual(p):
        r = y.copy()
        for l in range(n_atoms):
            u, t, cr, ci = p[4 * l : 4 * l + 4]
            r = r - (cr + 1j * ci) * response(u, t)
        return np.concatenate([r.real, r.imag])

    sol = least_squares(residual, p0, method="lm", xtol=1e-14, ftol=1e-14)
    atoms = []
    for l in range(n_atoms):
        u, t, cr, ci = sol.x[4 * l : 4 * l + 4]
        atoms.append((float(u % (2 * np.pi)), float(t % np.pi), complex(cr, ci)))
    return atoms


def estimate_gains(
    ens: MeasurementEnsemble, support: list[tuple[float, float]], y: np.ndarray
) -> np.ndarray:
    """Least-squares gains over the recovered support via QR factorization."""
    if not support:
        raise ValueError("support must be non-empty")
    cfg = ens.cfg
    g = np.array(
        [ens.bprime @ vec(atom_matrix(cfg, u, t)) for u, t in support]
    ).T
    cond = np.linalg.cond(g)
    if cond > 1e12:
        raise RankDeficiencyError(
            f"gain system condition number {cond:.3g} exceeds 1e12 for support {support}"
        )
    gains, *_ = np.linalg.lstsq(g, y, rcond=None)
    return gains


@dataclass
class SupportMetrics:
    assignments: list  # (est index, truth index)
    delta_theta: list
    delta_r: list
    delta_u: list
    delta_gain: list
    misses: int
    false_alarms: int
    channel_nmse: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "assignments": self.assignments,
            "delta_theta": self.delta_theta,
            "delta_r": self.delta_r,
            "delta_u": self.delta_u,
            "delta_gain": self.delta_gain,
            "misses": self.misses,
            "false_alarms": self.false_alarms,
            "channel_nmse": self.channel_nmse,
        }


def match_support(
    cfg: ArrayConfig,
    est: list[PathEstimate],
    truth: list[PathParam],
    model: str = "exact",
) -> SupportMetrics:
    """Optimal assignment minimizing summed |d theta| + |d u|, plus error report."""
    rmap = InverseRangeMap.from_config(cfg)
    if not est or not truth:
        return SupportMetrics(
            assignments=[],
            delta_theta=[],
            delta_r=[],
            delta_u=[],
            delta_gain=[],
            misses=len(truth),
            false_alarms=len(est),
        )
    cost = np.zeros((len(est), len(truth)))
    for i, e in enumerate(est):
        for j, p in enumerate(truth):
            du = abs(e.u_hat - rmap.u_of_r(p.range))
            du = min(du, 2 * np.pi - du)
            cost[i, j] = abs(e.theta_hat - p.angle) + du
    rows, cols = linear_sum_assignment(cost)
    d_theta, d_r, d_u, d_gain = [], [], [], []
    for i, j in zip(rows, cols):
        e, p = est[i], truth[j]
        d_theta.append(abs(e.theta_hat - p.angle))
        d_r.append(abs(e.r_hat - p.range))
        du = abs(e.u_hat - rmap.u_of_r(p.range))
        d_u.append(min(du, 2 * np.pi - du))
        d_gain.append(abs(e.gain_hat - p.gain))
    h_true = synthesize_channel(cfg, truth, model=model)
    est_paths = [
        PathParam(range=min(max(e.r_hat, cfg.r_min), cfg.r_max),
                  angle=e.theta_hat % np.pi, gain=e.gain_hat)
        for e in est
    ]
    h_est = synthesize_channel(cfg, est_paths, model=model)
    nmse = float(
        np.linalg.norm(h_est - h_true) ** 2 / max(np.linalg.norm(h_true) ** 2, 1e-300)
    )
    return SupportMetrics(
        assignments=[(int(i), int(j)) for i, j in zip(rows, cols)],
        delta_theta=d_theta,
        delta_r=d_r,
        delta_u=d_u,
        delta_gain=d_gain,
        misses=len(truth) - len(rows),
        false_alarms=len(est) - len(rows),
        channel_nmse=nmse,
    )
