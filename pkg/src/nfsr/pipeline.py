"""End-to-end orchestration: observation -> SDP -> peaks -> refinement -> report."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .arraymodel import PathParam
from .certificate import CertificateReport, polish_certificate
from .config import ArrayConfig
from .invrange import InverseRangeMap, LiftedBasis
from .localization import (
    DualPolynomial,
    PathEstimate,
    SupportMetrics,
    estimate_gains,
    find_peaks,
    match_support,
    refine_atoms,
)
from .measurement import MeasurementEnsemble, Observation
from .sdp import SdpProblem, SdpSolution, solve


@dataclass
class SolverSettings:
    eps_abs: float = 1e-6
    eps_rel: float = 1e-6
    max_iter: int = 4000
    rho: float = 0.1
    grid: tuple[int, int] = (512, 512)
    peak_threshold: float = 0.99
    # The raw ADMM dual is used only to seed the nonlinear refinement, so
    # candidate peaks are taken at a permissive relative level.
    seed_threshold: float = 0.5
    # Cap on model order; None selects the most the measurements can support.
    max_paths: int | None = None
    # Refined atoms with gain below this fraction of the largest are padding.
    prune_tol: float = 1e-3
    certify: bool = True


@dataclass
class RunReport:
    config: dict
    config_hash: str
    eta: float
    solver_status: str
    solver_iterations: int
    solver_objective: float
    solver_residuals: tuple[float, float]
    estimates: list[PathEstimate]
    timings: dict = field(default_factory=dict)
    metrics: SupportMetrics | None = None
    certificate: CertificateReport | None = None
    peak_count: int = 0
    files: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "config": self.config,
            "config_hash": self.config_hash,
            "eta": self.eta,
            "solver": {
                "status": self.solver_status,
                "iterations": self.solver_iterations,
                "objective": self.solver_objective,
                "primal_residual": self.solver_residuals[0],
                "dual_residual": self.solver_residuals[1],
            },
            "estimates": [
                {
                    "u_hat": e.u_hat,
                    "theta_hat": e.theta_hat,
                    "r_hat_m": e.r_hat,
                    "gain_re": e.gain_hat.real,
                    "gain_im": e.gain_hat.imag,
                    "certificate": e.certificate,
                }
                for e in self.estimates
            ],
            "peak_count": self.peak_count,
            "timings_s": self.timings,
            "files": self.files,
        }
        if self.metrics is not None:
            out["metrics"] = self.metrics.to_dict()
        if self.certificate is not None:
            out["certificate"] = {
                "dual_objective": self.certificate.dual_objective,
                "primal_value": self.certificate.primal_value,
                "duality_gap": self.certificate.gap,
                "grid_sup": self.certificate.grid_sup,
                "rounds": self.certificate.rounds,
                "clean": self.certificate.clean,
                "notes": self.certificate.notes,
            }
        return out


def _atom_vec(cfg: ArrayConfig, u: float, t: float) -> np.ndarray:
    from .invrange import atom_matrix
    from .measurement import vec

    return vec(atom_matrix(cfg, u, t))


def _dedup(
    atoms: list[tuple[float, float, complex]], tol: float = 1e-3
) -> list[tuple[float, float, complex]]:
    """Merge atoms that converged to the same location, keeping the stronger."""
    atoms = sorted(atoms, key=lambda a: -abs(a[2]))
    out: list[tuple[float, float, complex]] = []
    for u, t, c in atoms:
        dup = any(
            min(abs(u - u2), 2 * np.pi - abs(u - u2)) < tol and abs(t - t2) < tol
            for u2, t2, _ in out
        )
        if not dup:
            out.append((u, t, c))
    return out


def recover(
    ens: MeasurementEnsemble,
    obs: Observation,
    settings: SolverSettings | None = None,
    truth: list[PathParam] | None = None,
    truth_model: str = "exact",
) -> RunReport:
    """Full recovery: SDP, dual-polynomial peaks, refinement, gains, certificate."""
    settings = settings or SolverSettings()
    cfg = ens.cfg
    rmap = InverseRangeMap.from_config(cfg)
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    problem = SdpProblem(
        bprime=ens.bprime,
        y=obs.y,
        eta=obs.eta,
        n_u=cfg.n_u,
        n_b=cfg.n_b,
        eps_abs=settings.eps_abs,
        eps_rel=settings.eps_rel,
        max_iter=settings.max_iter,
        rho=settings.rho,
    )
    sol = solve(problem)
    timings["sdp_s"] = time.perf_counter() - t0

    # Seed peaks from the (max-normalized) ADMM dual polynomial.
    t0 = time.perf_counter()
    dp_raw = DualPolynomial.from_dual(ens, sol.q)
    _, _, qv = dp_raw.eval_grid(*settings.grid)
    sup = np.abs(qv).max()
    seeds: list[tuple[float, float]] = []
    # A vanishing dual vector means the ball constraint is inactive (eta at
    # or above ||y||): the optimal model is empty and there is no support.
    if sup > 1e-3:
        dp_seed = DualPolynomial(cfg, dp_raw.coeffs / sup)
        candidates = find_peaks(
            dp_seed, threshold=settings.seed_threshold, grid=settings.grid
        )
        candidates.sort(key=lambda p: -p[2])
        # Each atom adds 4 real unknowns against 2M real residuals.
        limit = settings.max_paths or min(8, ens.n_meas // 2)
        seeds = [(u, t) for u, t, _ in candidates[:limit]]

    def data_residual(atom_list):
        r = obs.y.copy()
        for u, t, c in atom_list:
            r = r - c * (ens.bprime @ _atom_vec(cfg, u, t))
        return float(np.linalg.norm(r))

    # Model-order selection: accept the smallest number of atoms whose
    # nonlinear fit meets the fidelity radius of the program.
    resid_tol = sol.eta_used + 1e-9 * np.linalg.norm(obs.y)
    atoms: list[tuple[float, float, complex]] = []
    best: tuple[float, list] | None = None
    for k in range(1, len(seeds) + 1):
        trial = _dedup(refine_atoms(ens, obs.y, seeds[:k]))
        resid = data_residual(trial)
        if best is None or resid < best[0]:
            best = (resid, trial)
        if resid <= resid_tol:
            atoms = trial
            break
    else:
        atoms = best[1] if best else []
    # Drop padding atoms whose fitted gain is negligible, provided the
    # reduced support still meets the fidelity radius after re-refinement.
    while atoms:
        biggest = max(abs(c) for _, _, c in atoms)
        kept = [a for a in atoms if abs(a[2]) >= settings.prune_tol * biggest]
        if len(kept) == len(atoms) or not kept:
            break
        reduced = _dedup(refine_atoms(ens, obs.y, [(u, t) for u, t, _ in kept]))
        if data_residual(reduced) <= resid_tol:
            atoms = reduced
        else:
            break
    timings["localization_s"] = time.perf_counter() - t0

    estimates: list[PathEstimate] = []
    cert_report = None
    peak_count = 0
    if atoms:
        gains = estimate_gains(ens, [(u, t) for u, t, _ in atoms], obs.y)
        atoms = [(u, t, complex(c)) for (u, t, _), c in zip(atoms, gains)]
        dp_final = DualPolynomial(cfg, dp_raw.coeffs / sup) if sup > 0 else dp_raw
        if settings.certify:
            t0 = time.perf_counter()
            try:
                cert_report = polish_certificate(ens, obs.y, sol.eta_used, atoms)
                dp_final = DualPolynomial.from_dual(ens, cert_report.q)
            except RuntimeError:
                # Fall back to the (max-normalized) solver dual; the report
                # then carries no polished certificate.
                cert_report = None
            timings["certificate_s"] = time.perf_counter() - t0
        final_peaks = find_peaks(
            dp_final, threshold=settings.peak_threshold, grid=settings.grid
        )
        peak_count = len(final_peaks)
        for u, t, c in atoms:
            estimates.append(
                PathEstimate(
                    u_hat=u,
                    theta_hat=t,
                    r_hat=rmap.r_of_u(min(max(u, 0.0), 2 * np.pi)),
                    gain_hat=c,
                    certificate=float(abs(dp_final.eval(u, t))),
                )
            )

    metrics = None
    if truth is not None:
        metrics = match_support(cfg, estimates, truth, model=truth_model)

    cfg_dict = cfg.to_dict()
    return RunReport(
        config=cfg_dict,
        config_hash=cfg.config_hash(),
        eta=sol.eta_used,
        solver_status=sol.status,
        solver_iterations=sol.iterations,
        solver_objective=sol.objective,
        solver_residuals=(sol.primal_residual, sol.dual_residual),
        estimates=estimates,
        timings=timings,
        metrics=metrics,
        certificate=cert_report,
        peak_count=peak_count,
    )
