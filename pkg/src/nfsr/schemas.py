"""Pydantic request/response models for the service and CLI config files.

Field names carry explicit units (meters, Hz, radians); no unit inference.
"""

from __future__ import annotations

from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, Field

from .arraymodel import PathParam
from .config import ArrayConfig


class ArrayConfigModel(BaseModel):
    n_antennas: int = 64
    f_c_hz: float = 100e9
    spacing_m: Optional[float] = None  # None selects half-wavelength
    r_min_m: float = 0.1
    r_max_m: float = 6.0
    i1: int = 20
    i2: int = 1
    k_u: int = 2
    k_loc: int = 2
    n_panels: int = 4
    ridge_mu: float = 1e-8

    def to_core(self) -> ArrayConfig:
        return ArrayConfig(
            n_antennas=self.n_antennas,
            carrier_freq=self.f_c_hz,
            spacing=self.spacing_m,
            r_min=self.r_min_m,
            r_max=self.r_max_m,
            i1=self.i1,
            i2=self.i2,
            k_u=self.k_u,
            k_loc=self.k_loc,
            n_panels=self.n_panels,
            ridge_mu=self.ridge_mu,
        )


class PathModel(BaseModel):
    r_m: float
    theta_rad: float
    gain_re: float
    gain_im: float = 0.0

    def to_core(self) -> PathParam:
        return PathParam(
            range=self.r_m, angle=self.theta_rad, gain=self.gain_re + 1j * self.gain_im
        )

    @classmethod
    def from_core(cls, p: PathParam) -> "PathModel":
        return cls(
            r_m=p.range, theta_rad=p.angle, gain_re=p.gain.real, gain_im=p.gain.imag
        )


class RandomScenarioModel(BaseModel):
    n_paths: int = 2
    min_sep_u: float = 0.5
    min_sep_theta: float = 0.2
    gain_dist: Literal["unit-phase", "complex-normal"] = "complex-normal"
    seed: int = 0


class ScenarioModel(BaseModel):
    paths: Optional[list[PathModel]] = None
    random: Optional[RandomScenarioModel] = None


class MeasurementModel(BaseModel):
    n_meas: int = 20
    combiner_seed: int = 12345
    noise_std: float = 0.0
    noise_seed: int = 0


class SolverModel(BaseModel):
    eps_abs: float = 1e-6
    eps_rel: float = 1e-6
    max_iter: int = 4000
    rho: float = 0.1
    grid_u: int = 512
    grid_theta: int = 512
    peak_threshold: float = 0.99
    seed_threshold: float = 0.5
    max_paths: Optional[int] = None
    prune_tol: float = 1e-3
    certify: bool = True


class ExperimentConfig(BaseModel):
    array: ArrayConfigModel = Field(default_factory=ArrayConfigModel)
    scenario: ScenarioModel = Field(default_factory=ScenarioModel)
    measurement: MeasurementModel = Field(default_factory=MeasurementModel)
    solver: SolverModel = Field(default_factory=SolverModel)
    # Steering model behind the synthetic observation; "lifted" is mismatch-free.
    model: Literal["exact", "fresnel", "lifted"] = "exact"
    eta_safety: float = 1.5
    # Explicit eta override; None derives it from the scenario.
    eta: Optional[float] = None


class ComplexVector(BaseModel):
    re: list[float]
    im: list[float]

    def to_numpy(self) -> np.ndarray:
        return np.array(self.re) + 1j * np.array(self.im)

    @classmethod
    def from_numpy(cls, v: np.ndarray) -> "ComplexVector":
        v = np.asarray(v)
        return cls(re=v.real.tolist(), im=v.imag.tolist())


class ObservationModel(BaseModel):
    y: ComplexVector
    provenance: str = "external"
    eta: float = 0.0
    config_hash: str = ""


class FitBasisResponse(BaseModel):
    config_hash: str
    cache_path: Optional[str]
    cache_hit: bool
    n_u: int
    n_b: int
    fit_error: list[list[float]]  # (n_antennas, 2*I_2+1) max relative errors


class SimulateResponse(BaseModel):
    config_hash: str
    paths: list[PathModel]
    observation: ObservationModel
    eta: float


class PathEstimateModel(BaseModel):
    u_hat: float
    theta_hat: float
    r_hat_m: float
    gain_re: float
    gain_im: float
    certificate: float


class RecoverResponse(BaseModel):
    report: dict
    dual_vector: ComplexVector


class DualPolyResponse(BaseModel):
    config_hash: str
    coeffs: list[list[dict]]  # N_u x N_b complex entries {re, im}
    peaks: list[PathEstimateModel]
    grid_u: int
    grid_theta: int


class EvalRequest(BaseModel):
    array: ArrayConfigModel
    estimates: list[PathEstimateModel]
    truth: list[PathModel]
    model: Literal["exact", "fresnel"] = "exact"


class ErrorResponse(BaseModel):
    stage: str
    detail: str
