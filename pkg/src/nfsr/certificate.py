"""Polished dual certificates for the atomic-norm program.

The ADMM dual vector localizes the support but is only approximately
feasible. Given the refined atoms, this module constructs a clean dual
vector by convex optimization: interpolation and stationarity at the
support are imposed exactly (eliminated through a null-space
parameterization), the dual objective is pinned near the primal value,
and among all such vectors the one with minimum polynomial energy is
selected subject to |Q| <= 1 on a constraint grid. Grid leakage is removed
by cutting planes against a dense verification grid, and any spurious
near-unit local maxima are suppressed by targeted margin caps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.ndimage import maximum_filter

from .config import ArrayConfig
from .invrange import atom_matrix
from .measurement import MeasurementEnsemble, vec

BASE_GRID = (96, 384)
VERIFY_GRID = (512, 1024)
MARGIN = 0.985
MARGIN_RADIUS = 0.12
SUPPORT_RADIUS = 0.25
OBJ_SLACK = 1e-4


@dataclass
class CertificateReport:
    q: np.ndarray
    dual_objective: float
    primal_value: float
    grid_sup: float
    rounds: int
    clean: bool  # no spurious local maxima >= 0.987 away from the support
    notes: list = field(default_factory=list)

    @property
    def gap(self) -> float:
        return self.primal_value - self.dual_objective


def _torus_dist(u_grid, t_grid, u0, t0):
    """Distance on the (u, theta) torus, folding theta across pi (the
    polynomial is even in theta up to conjugate symmetry of the data)."""
    du = np.abs(u_grid - u0)
    du = np.minimum(du, 2 * np.pi - du)
    d1 = np.abs(t_grid - t0)
    d1 = np.minimum(d1, 2 * np.pi - d1)
    t0r = 2 * np.pi - t0
    d2 = np.abs(t_grid - t0r)
    d2 = np.minimum(d2, 2 * np.pi - d2)
    return np.sqrt(du**2 + np.minimum(d1, d2) ** 2)


class _Evaluator:
    """Batched evaluation of rows g(u, theta)[m] = (B' a(u, theta))[m]."""

    def __init__(self, ens: MeasurementEnsemble):
        cfg = ens.cfg
        self.k_u = cfg.k_u_all
        self.k_t = cfg.k_theta_all
        self.psi = ens.psi  # (M, N_u, N_b)

    def rows(self, us: np.ndarray, ts: np.ndarray) -> np.ndarray:
        e_u = np.exp(1j * np.outer(us, self.k_u))
        e_t = np.exp(1j * np.outer(ts, self.k_t))
        out = np.empty((us.size, self.psi.shape[0]), dtype=complex)
        for s0 in range(0, us.size, 2048):
            sl = slice(s0, s0 + 2048)
            out[sl] = np.einsum(
                "pk,mkb,pb->pm", e_u[sl], self.psi, e_t[sl], optimize=True
            )
        return out


def polish_certificate(
    ens: MeasurementEnsemble,
    y: np.ndarray,
    eta: float,
    atoms: list[tuple[float, float, complex]],
    max_rounds: int = 8,
) -> CertificateReport:
    """Construct a dual vector certifying the refined atomic decomposition."""
    import cvxpy as cp

    cfg = ens.cfg
    bp = ens.bprime
    m = bp.shape[0]
    notes: list[str] = []

    # Anchor equalities: Q = conj(sign(c)) and grad Q = 0 at each atom.
    rows, rhs = [], []
    for u, theta, c in atoms:
        a = atom_matrix(cfg, u, theta)
        rows.append(bp @ vec(a))
        rows.append(bp @ vec(1j * cfg.k_u_all[:, None] * a))
        rows.append(bp @ vec(1j * cfg.k_theta_all[None, :] * a))
        rhs += [np.conj(c / abs(c)), 0.0, 0.0]
    a_mat = np.array(rows)
    b_vec = np.array(rhs)
    qbar_p = np.linalg.lstsq(a_mat, b_vec, rcond=None)[0]
    anchor_residual = float(np.linalg.norm(a_mat @ qbar_p - b_vec))
    if anchor_residual > 1e-8:
        # Too many atoms for the measurement count: the interpolation
        # conditions cannot all hold, so no exact certificate exists.
        raise RuntimeError(
            f"anchor equations unsatisfiable (residual {anchor_residual:.3g}); "
            "support too large for a certificate"
        )
    null = sla.null_space(a_mat)
    if null.shape[1] == 0:
        notes.append("anchor system leaves no free directions")

    ev = _Evaluator(ens)
    hu, ht = BASE_GRID
    ub = np.linspace(0, 2 * np.pi, hu, endpoint=False)
    tb = np.linspace(0, 2 * np.pi, ht, endpoint=False)
    uu, tt = np.meshgrid(ub, tb, indexing="ij")
    g_base = ev.rows(uu.ravel(), tt.ravel())
    hv, tv_n = VERIFY_GRID
    uv = np.linspace(0, 2 * np.pi, hv, endpoint=False)
    tvg = np.linspace(0, 2 * np.pi, tv_n, endpoint=False)
    uvv, tvv = np.meshgrid(uv, tvg, indexing="ij")
    d_supp = np.minimum.reduce([_torus_dist(uvv, tvv, u, t) for u, t, _ in atoms])

    primal_value = float(sum(abs(c) for _, _, c in atoms))

    def dual_obj_expr(qbar):
        q = cp.conj(qbar)
        return cp.real(cp.conj(q) @ y) - eta * cp.norm(q, 2)

    # Stage A: best attainable dual objective under the anchors and |Q| <= 1.
    xi = cp.Variable(null.shape[1], complex=True)
    qbar = qbar_p + null @ xi
    prob_a = cp.Problem(
        cp.Maximize(dual_obj_expr(qbar)), [cp.abs(g_base @ qbar) <= 1]
    )
    prob_a.solve(solver=cp.CLARABEL)
    if prob_a.status not in ("optimal", "optimal_inaccurate"):
        raise RuntimeError(f"certificate stage failed: {prob_a.status}")
    v_star = float(prob_a.value)
    target = min(primal_value * (1 - OBJ_SLACK), v_star - OBJ_SLACK * abs(v_star))

    margin = MARGIN
    spurious: list[tuple[float, float]] = []
    extra = np.zeros((0, m), dtype=complex)
    extra_caps = np.zeros(0)
    q_final = None
    grid_sup = np.inf
    clean = False
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        caps = np.ones(uu.size)
        for us_, ts_ in spurious:
            caps = np.where(
                _torus_dist(uu, tt, us_, ts_).ravel() < MARGIN_RADIUS, margin, caps
            )
        xi = cp.Variable(null.shape[1], complex=True)
        qbar = qbar_p + null @ xi
        g_all = np.vstack([g_base, extra])
        cap_all = np.concatenate([caps, extra_caps])
        prob_b = cp.Problem(
            cp.Minimize(cp.norm(bp.T @ qbar, 2)),
            [cp.abs(g_all @ qbar) <= cap_all, dual_obj_expr(qbar) >= target],
        )
        prob_b.solve(solver=cp.CLARABEL)
        if prob_b.status not in ("optimal", "optimal_inaccurate"):
            # Margins too aggressive for this geometry; relax and retry.
            if margin < 0.997:
                margin += 0.005
                notes.append(f"margin relaxed to {margin:.3f}")
                continue
            spurious = []
            notes.append("margins dropped: cutting planes only")
            continue
        q_final = np.conj(qbar_p + null @ xi.value)
        coeffs = (bp.T @ np.conj(q_final)).reshape(cfg.n_u, cfg.n_b, order="F")
        mag = np.abs(
            np.exp(1j * np.outer(uv, cfg.k_u_all))
            @ coeffs
            @ np.exp(1j * np.outer(cfg.k_theta_all, tvg))
        )
        cap_v = np.ones_like(mag)
        for us_, ts_ in spurious:
            cap_v = np.where(
                _torus_dist(uvv, tvv, us_, ts_) < MARGIN_RADIUS, margin, cap_v
            )
        over = mag - cap_v
        grid_sup = float(mag.max())
        local_max = (
            mag == maximum_filter(mag, size=9, mode="wrap")
        ) & (mag >= 0.987) & (d_supp > SUPPORT_RADIUS)
        new_spurious = [(uv[i], tvg[j]) for i, j in np.argwhere(local_max)]
        if over.max() <= 2e-4 and not new_spurious:
            clean = True
            break
        if over.max() > 1e-5:
            worst = sorted(
                np.argwhere(over > 1e-5), key=lambda ij: -over[ij[0], ij[1]]
            )[:300]
            extra = np.vstack([extra, ev.rows(uv[[i for i, _ in worst]],
                                              tvg[[j for _, j in worst]])])
            extra_caps = np.concatenate(
                [extra_caps, [cap_v[i, j] for i, j in worst]]
            )
        for cand in new_spurious:
            if all(
                _torus_dist(np.array(cand[0]), np.array(cand[1]), o[0], o[1]) > 0.05
                for o in spurious
            ):
                spurious.append(cand)

    if q_final is None:
        raise RuntimeError("certificate construction failed to produce a dual vector")
    dual_obj = float(
        (np.conj(q_final) @ y).real - eta * np.linalg.norm(q_final)
    )
    return CertificateReport(
        q=q_final,
        dual_objective=dual_obj,
        primal_value=primal_value,
        grid_sup=grid_sup,
        rounds=rounds,
        clean=clean,
        notes=notes,
    )
