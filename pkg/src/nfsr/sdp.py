"""2D block-Toeplitz lift and the atomic-norm semidefinite program.

minimize  tr(T_2D(V)) / (2 N_u N_b) + t / 2
subject to [[T_2D(V), z], [z^H, t]] >= 0,  ||y - B' z||_2 <= eta.

Solved by ADMM: the bordered Hermitian matrix is split against a PSD copy
(projected by eigendecomposition each iteration) and the residual y - B'z
against a ball-constrained copy. The multiplier of the ball constraint is
the dual vector q that defines the localization certificate.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla


class LagIndex:
    """Index machinery for the 2D lag array and the T_2D operator.

    The lag array V is stored flat with index (l_u + N_u - 1) +
    (2 N_u - 1) * (l_b + N_b - 1) for u-lag l_u and theta-lag l_b.
    """

    def __init__(self, n_u: int, n_b: int):
        self.n_u, self.n_b = n_u, n_b
        n = n_u * n_b
        i_u = np.arange(n) % n_u
        i_b = np.arange(n) // n_u
        self.lag_u = 2 * n_u - 1
        self.lag_b = 2 * n_b - 1
        self.lag_flat = (i_u[:, None] - i_u[None, :] + n_u - 1) + self.lag_u * (
            i_b[:, None] - i_b[None, :] + n_b - 1
        )
        self.n_class = self.lag_u * self.lag_b
        self.counts = np.bincount(
            self.lag_flat.ravel(), minlength=self.n_class
        ).astype(float)
        self.central = (n_u - 1) + self.lag_u * (n_b - 1)

    def symmetrize(self, v_flat: np.ndarray) -> np.ndarray:
        """Enforce the Hermitian lag symmetry V(-a,-b) = conj(V(a,b))."""
        vm = v_flat.reshape(self.lag_b, self.lag_u)
        return (0.5 * (vm + vm[::-1, ::-1].conj())).ravel()


def t2d(v_flat: np.ndarray, n_u: int, n_b: int) -> np.ndarray:
    """Block-Toeplitz moment matrix: entry (r, c) = V(i_u - j_u, i_b - j_b)."""
    idx = LagIndex(n_u, n_b)
    if v_flat.size != idx.n_class:
        raise ValueError("lag array size mismatch")
    return v_flat[idx.lag_flat]


def t2d_adjoint(w: np.ndarray, n_u: int, n_b: int) -> np.ndarray:
    """Adjoint of t2d: each lag bin sums the matching diagonal of W."""
    idx = LagIndex(n_u, n_b)
    if w.shape != (n_u * n_b, n_u * n_b):
        raise ValueError("matrix size mismatch")
    flat = idx.lag_flat.ravel()
    return np.bincount(
        flat, weights=w.ravel().real, minlength=idx.n_class
    ) + 1j * np.bincount(flat, weights=w.ravel().imag, minlength=idx.n_class)


def objective(v_flat: np.ndarray, t: float, n_u: int, n_b: int) -> float:
    """tr(T_2D(V)) / (2 N_u N_b) + t / 2 = V(0,0)/2 + t/2."""
    idx = LagIndex(n_u, n_b)
    return float(v_flat[idx.central].real / 2 + t / 2)


@dataclass
class SdpProblem:
    bprime: np.ndarray
    y: np.ndarray
    eta: float
    n_u: int
    n_b: int
    eps_abs: float = 1e-7
    eps_rel: float = 1e-7
    tol_psd: float = 1e-7
    max_iter: int = 200000
    rho: float = 0.1
    check_every: int = 100

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("eta must be non-negative")
        n = self.n_u * self.n_b
        if self.bprime.shape != (self.y.shape[0], n):
            raise ValueError("sensing matrix dimensions inconsistent")


@dataclass
class SdpSolution:
    z: np.ndarray
    v: np.ndarray  # flat lag array
    t: float
    q: np.ndarray  # dual vector of the data-fidelity constraint
    status: str  # optimal | max_iter | infeasible
    objective: float
    primal_residual: float
    dual_residual: float
    gap_checkpoints: list = field(default_factory=list)
    iterations: int = 0
    eta_used: float = 0.0
    meta: dict = field(default_factory=dict)


def solve(problem: SdpProblem) -> SdpSolution:
    """ADMM with adaptive penalty; y is normalized internally to unit norm."""
    n_u, n_b = problem.n_u, problem.n_b
    n = n_u * n_b
    m = problem.y.shape[0]
    idx = LagIndex(n_u, n_b)
    bp = problem.bprime

    meta = {}
    eta = problem.eta
    y_norm = float(np.linalg.norm(problem.y))
    if y_norm == 0.0:
        zero = np.zeros(idx.n_class, dtype=complex)
        return SdpSolution(
            z=np.zeros(n, dtype=complex), v=zero, t=0.0, q=np.zeros(m, dtype=complex),
            status="optimal", objective=0.0, primal_residual=0.0, dual_residual=0.0,
            eta_used=eta, meta={"note": "zero observation"},
        )
    if eta == 0.0:
        eta = 1e-9 * y_norm
        meta["eta_floor"] = eta
    ys = problem.y / y_norm
    etas = eta / y_norm

    rho = problem.rho
    gram = 2 * np.eye(n) + bp.conj().T @ bp
    cho = sla.cho_factor(gram)
    s_mat = np.zeros((n + 1, n + 1), dtype=complex)
    lam = np.zeros_like(s_mat)
    w = np.zeros(m, dtype=complex)
    lam_w = np.zeros(m, dtype=complex)
    a_mat = np.zeros((n + 1, n + 1), dtype=complex)
    v = np.zeros(idx.n_class, dtype=complex)
    t = 0.0
    z = np.zeros(n, dtype=complex)
    status = "max_iter"
    primal_res = dual_res = np.inf
    checkpoints: list[float] = []
    it = 0

    for it in range(1, problem.max_iter + 1):
        m_bar = s_mat + lam / rho
        v = t2d_adjoint(m_bar[:n, :n], n_u, n_b) / idx.counts
        v[idx.central] -= 1.0 / (2 * rho * idx.counts[idx.central])
        v = idx.symmetrize(v)
        mz = 0.5 * (m_bar[:n, n] + m_bar[n, :n].conj())
        z = sla.cho_solve(cho, 2 * mz + bp.conj().T @ (ys - w - lam_w / rho))
        t = m_bar[n, n].real - 1.0 / (2 * rho)
        a_mat[:n, :n] = v[idx.lag_flat]
        a_mat[:n, n] = z
        a_mat[n, :n] = z.conj()
        a_mat[n, n] = t
        s_arg = a_mat - lam / rho
        s_arg = 0.5 * (s_arg + s_arg.conj().T)
        evals, evecs = np.linalg.eigh(s_arg)
        pos = evals > 0
        s_old = s_mat
        s_mat = (evecs[:, pos] * evals[pos]) @ evecs[:, pos].conj().T
        bz = bp @ z
        w_arg = ys - bz - lam_w / rho
        nw = np.linalg.norm(w_arg)
        w_old = w
        w = w_arg if nw <= etas else w_arg * (etas / nw)
        lam += rho * (s_mat - a_mat)
        lam_w += rho * (w - (ys - bz))

        if it % problem.check_every == 0:
            rp = np.sqrt(
                np.linalg.norm(s_mat - a_mat) ** 2 + np.linalg.norm(w - (ys - bz)) ** 2
            )
            rd = rho * np.sqrt(
                np.linalg.norm(s_mat - s_old) ** 2 + np.linalg.norm(w - w_old) ** 2
            )
            scale_p = max(np.linalg.norm(s_mat), np.linalg.norm(a_mat), 1.0)
            scale_d = max(np.linalg.norm(lam), 1.0)
            primal_res = rp
            dual_res = rd
            gap = float(rp / scale_p + rd / scale_d)
            checkpoints.append(min(gap, checkpoints[-1]) if checkpoints else gap)
            eps_p = problem.eps_abs * np.sqrt(s_mat.size + m) + problem.eps_rel * scale_p
            eps_d = problem.eps_abs * np.sqrt(s_mat.size + m) + problem.eps_rel * scale_d
            if rp <= eps_p and rd <= eps_d:
                status = "optimal"
                break
            # Residual balancing keeps the penalty in a productive regime.
            if rp > 10 * rd:
                rho *= 2
            elif rd > 10 * rp:
                rho /= 2

    # Undo the normalization: primal variables scale with ||y||, the dual
    # multiplier of the fidelity constraint is scale-invariant.
    q = -lam_w
    obj = objective(v, t, n_u, n_b) * y_norm
    return SdpSolution(
        z=z * y_norm,
        v=v * y_norm,
        t=t * y_norm,
        q=q,
        status=status,
        objective=obj,
        primal_residual=float(primal_res),
        dual_residual=float(dual_res),
        gap_checkpoints=checkpoints,
        iterations=it,
        eta_used=eta,
        meta=meta,
    )


# ---------------------------------------------------------------------------
# Problem / solution dumps for cross-checking against external solvers.

_DUMP_MAGIC = b"NFSRSDP1"


def save_problem(problem: SdpProblem, path: str) -> None:
    header = json.dumps(
        {
            "m": int(problem.y.shape[0]),
            "n_u": problem.n_u,
            "n_b": problem.n_b,
            "eta": problem.eta,
        }
    ).encode()
    with open(path, "wb") as fh:
        fh.write(_DUMP_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(problem.bprime, dtype="<c16").tobytes())
        fh.write(np.ascontiguousarray(problem.y, dtype="<c16").tobytes())


def load_problem(path: str) -> SdpProblem:
    with open(path, "rb") as fh:
        if fh.read(8) != _DUMP_MAGIC:
            raise ValueError("bad problem dump")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode())
        m, n_u, n_b = header["m"], header["n_u"], header["n_b"]
        n = n_u * n_b
        bprime = np.frombuffer(fh.read(16 * m * n), dtype="<c16").reshape(m, n)
        y = np.frombuffer(fh.read(16 * m), dtype="<c16")
    return SdpProblem(bprime=bprime.copy(), y=y.copy(), eta=header["eta"], n_u=n_u, n_b=n_b)
