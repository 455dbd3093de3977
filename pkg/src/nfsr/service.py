"""FastAPI service exposing the recovery pipeline.

The CLI drives this app in-process through an ASGI transport; it can also be
served standalone (e.g. `uvicorn nfsr.service:app`). Basis matrices are
memoized per config hash and persisted to the cache directory given by the
NFSR_CACHE_DIR environment variable.
"""

from __future__ import annotations

import os

import numpy as np
from fastapi import FastAPI, HTTPException

from .arraymodel import PathParam, synthesize_channel
from .config import ArrayConfig
from .invrange import InverseRangeMap, LiftedBasis, load_or_build_basis
from .localization import PathEstimate, RankDeficiencyError, match_support
from .measurement import (
    Observation,
    build_sensing,
    draw_combiner,
    estimate_eta,
    observe,
    observe_lifted,
)
from .pipeline import SolverSettings, recover
from .schemas import (
    ArrayConfigModel,
    ComplexVector,
    DualPolyResponse,
    EvalRequest,
    ExperimentConfig,
    FitBasisResponse,
    ObservationModel,
    PathEstimateModel,
    PathModel,
    RecoverResponse,
    ScenarioModel,
    SimulateResponse,
)

app = FastAPI(title="nfsr", version="0.1.0")

_basis_memo: dict[str, LiftedBasis] = {}


def _error(status: int, stage: str, detail: str):
    return HTTPException(status_code=status, detail={"stage": stage, "detail": detail})


def _get_basis(cfg: ArrayConfig) -> tuple[LiftedBasis, bool]:
    key = cfg.config_hash()
    if key in _basis_memo:
        return _basis_memo[key], True
    cache_dir = os.environ.get("NFSR_CACHE_DIR")
    existed = bool(
        cache_dir and os.path.exists(os.path.join(cache_dir, f"basis_{key}.bin"))
    )
    basis = load_or_build_basis(cfg, cache_dir)
    _basis_memo[key] = basis
    return basis, existed


def _realize_paths(cfg: ArrayConfig, scenario: ScenarioModel) -> list[PathParam]:
    if scenario.paths:
        paths = [p.to_core() for p in scenario.paths]
    elif scenario.random:
        paths = _draw_random_paths(cfg, scenario.random)
    else:
        raise ValueError("scenario must give explicit paths or a random spec")
    if not paths:
        raise ValueError("scenario has no paths")
    for p in paths:
        p.validate(cfg)
    return paths


def _draw_random_paths(cfg: ArrayConfig, spec) -> list[PathParam]:
    rmap = InverseRangeMap.from_config(cfg)
    rng = np.random.Generator(np.random.Philox(spec.seed))
    us: list[float] = []
    thetas: list[float] = []
    tries = 0
    while len(us) < spec.n_paths:
        if tries > 10000:
            raise ValueError("cannot satisfy separation constraints")
        tries += 1
        u = rng.uniform(0, 2 * np.pi)
        theta = rng.uniform(0, np.pi)
        ok = all(
            min(abs(u - u2), 2 * np.pi - abs(u - u2)) >= spec.min_sep_u
            and abs(theta - t2) >= spec.min_sep_theta
            for u2, t2 in zip(us, thetas)
        )
        if ok:
            us.append(u)
            thetas.append(theta)
    paths = []
    for u, theta in zip(us, thetas):
        if spec.gain_dist == "unit-phase":
            gain = np.exp(1j * rng.uniform(0, 2 * np.pi))
        else:
            gain = 0.0
            while abs(gain) < 0.2:  # avoid degenerate near-zero paths
                gain = rng.standard_normal() + 1j * rng.standard_normal()
        paths.append(PathParam(range=rmap.r_of_u(u), angle=theta, gain=complex(gain)))
    return paths


def _simulate(config: ExperimentConfig):
    cfg = config.array.to_core()
    paths = _realize_paths(cfg, config.scenario)
    basis, _ = _get_basis(cfg)
    combiner = draw_combiner(
        config.measurement.n_meas, cfg.n_antennas, config.measurement.combiner_seed
    )
    ens = build_sensing(basis, combiner, noise_std=config.measurement.noise_std)
    rmap = InverseRangeMap.from_config(cfg)
    if config.model == "lifted":
        atoms = [(rmap.u_of_r(p.range), p.angle, p.gain) for p in paths]
        obs = observe_lifted(ens, atoms)
        if config.measurement.noise_std > 0:
            noise_rng = np.random.Generator(
                np.random.Philox(config.measurement.noise_seed)
            )
            obs.y = obs.y + config.measurement.noise_std * (
                noise_rng.standard_normal(ens.n_meas)
                + 1j * noise_rng.standard_normal(ens.n_meas)
            )
    else:
        h = synthesize_channel(cfg, paths, model=config.model)
        obs = observe(
            ens,
            h,
            noise_std=config.measurement.noise_std,
            seed=config.measurement.noise_seed,
            provenance=f"synthetic-{config.model}",
        )
    if config.eta is not None:
        obs.eta = config.eta
    else:
        obs.eta = estimate_eta(
            ens,
            paths,
            model=config.model,
            safety_factor=config.eta_safety,
            noise_std=config.measurement.noise_std,
        )
    return cfg, paths, ens, obs


def _solver_settings(config: ExperimentConfig) -> SolverSettings:
    s = config.solver
    return SolverSettings(
        eps_abs=s.eps_abs,
        eps_rel=s.eps_rel,
        max_iter=s.max_iter,
        rho=s.rho,
        grid=(s.grid_u, s.grid_theta),
        peak_threshold=s.peak_threshold,
        seed_threshold=s.seed_threshold,
        max_paths=s.max_paths,
        prune_tol=s.prune_tol,
        certify=s.certify,
    )


@app.post("/fit-basis", response_model=FitBasisResponse)
def fit_basis(array: ArrayConfigModel) -> FitBasisResponse:
    try:
        cfg = array.to_core()
    except ValueError as exc:
        raise _error(400, "config", str(exc))
    basis, hit = _get_basis(cfg)
    cache_dir = os.environ.get("NFSR_CACHE_DIR")
    path = (
        os.path.join(cache_dir, f"basis_{cfg.config_hash()}.bin") if cache_dir else None
    )
    return FitBasisResponse(
        config_hash=cfg.config_hash(),
        cache_path=path,
        cache_hit=hit,
        n_u=cfg.n_u,
        n_b=cfg.n_b,
        fit_error=basis.fit_error.tolist(),
    )


@app.post("/simulate", response_model=SimulateResponse)
def simulate(config: ExperimentConfig) -> SimulateResponse:
    try:
        cfg, paths, _, obs = _simulate(config)
    except ValueError as exc:
        raise _error(400, "config", str(exc))
    return SimulateResponse(
        config_hash=cfg.config_hash(),
        paths=[PathModel.from_core(p) for p in paths],
        observation=ObservationModel(
            y=ComplexVector.from_numpy(obs.y),
            provenance=obs.provenance,
            eta=obs.eta,
            config_hash=cfg.config_hash(),
        ),
        eta=obs.eta,
    )


def _run_recovery(config: ExperimentConfig, observation: ObservationModel | None):
    try:
        cfg = config.array.to_core()
    except ValueError as exc:
        raise _error(400, "config", str(exc))
    truth = None
    if observation is None:
        try:
            cfg, paths, ens, obs = _simulate(config)
        except ValueError as exc:
            raise _error(400, "config", str(exc))
        truth = paths
    else:
        basis, _ = _get_basis(cfg)
        combiner = draw_combiner(
            config.measurement.n_meas, cfg.n_antennas, config.measurement.combiner_seed
        )
        ens = build_sensing(basis, combiner)
        obs = Observation(
            y=observation.y.to_numpy(),
            provenance=observation.provenance,
            eta=config.eta if config.eta is not None else observation.eta,
        )
        if observation.config_hash and observation.config_hash != cfg.config_hash():
            raise _error(400, "config", "observation config hash mismatch")
        if config.scenario.paths or config.scenario.random:
            truth = _realize_paths(cfg, config.scenario)
    truth_model = config.model if config.model != "lifted" else "fresnel"
    try:
        report = recover(
            ens, obs, _solver_settings(config), truth=truth, truth_model=truth_model
        )
    except RankDeficiencyError as exc:
        raise _error(409, "gains", str(exc))
    except RuntimeError as exc:
        raise _error(500, "solver", str(exc))
    return cfg, ens, report


@app.post("/recover", response_model=RecoverResponse)
def recover_endpoint(
    config: ExperimentConfig, observation: ObservationModel | None = None
) -> RecoverResponse:
    _, _, report = _run_recovery(config, observation)
    if report.solver_status == "infeasible":
        raise _error(500, "solver", "SDP reported infeasibility")
    q = report.certificate.q if report.certificate is not None else np.zeros(0)
    return RecoverResponse(
        report=report.to_dict(), dual_vector=ComplexVector.from_numpy(q)
    )


@app.post("/dualpoly", response_model=DualPolyResponse)
def dualpoly(
    config: ExperimentConfig, observation: ObservationModel | None = None
) -> DualPolyResponse:
    from .localization import DualPolynomial

    cfg, ens, report = _run_recovery(config, observation)
    if report.certificate is None:
        raise _error(500, "solver", "no certificate available (certify disabled?)")
    dp = DualPolynomial.from_dual(ens, report.certificate.q)
    coeffs = [
        [{"re": float(v.real), "im": float(v.imag)} for v in row]
        for row in dp.coeffs
    ]
    return DualPolyResponse(
        config_hash=cfg.config_hash(),
        coeffs=coeffs,
        peaks=[
            PathEstimateModel(
                u_hat=e.u_hat,
                theta_hat=e.theta_hat,
                r_hat_m=e.r_hat,
                gain_re=e.gain_hat.real,
                gain_im=e.gain_hat.imag,
                certificate=e.certificate,
            )
            for e in report.estimates
        ],
        grid_u=config.solver.grid_u,
        grid_theta=config.solver.grid_theta,
    )


@app.post("/eval")
def eval_endpoint(request: EvalRequest) -> dict:
    try:
        cfg = request.array.to_core()
    except ValueError as exc:
        raise _error(400, "config", str(exc))
    est = [
        PathEstimate(
            u_hat=e.u_hat,
            theta_hat=e.theta_hat,
            r_hat=e.r_hat_m,
            gain_hat=e.gain_re + 1j * e.gain_im,
            certificate=e.certificate,
        )
        for e in request.estimates
    ]
    truth = [p.to_core() for p in request.truth]
    metrics = match_support(cfg, est, truth, model=request.model)
    return metrics.to_dict()
