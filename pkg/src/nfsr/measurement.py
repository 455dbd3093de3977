"""Hybrid combiner, lifted sensing operator, and compressed observations."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .arraymodel import PathParam, synthesize_channel
from .config import ArrayConfig
from .invrange import InverseRangeMap, LiftedBasis, atom_matrix


def vec(x: np.ndarray) -> np.ndarray:
    """u-fast vectorization: flat index r = (i_b)*N_u + i_u (column-major)."""
    return x.reshape(-1, order="F")


def unvec(v: np.ndarray, n_u: int, n_b: int) -> np.ndarray:
    return v.reshape(n_u, n_b, order="F")


def draw_combiner(n_meas: int, n_antennas: int, seed: int) -> np.ndarray:
    """Constant-modulus combiner: entries (1/sqrt(N_r)) e^{j phi}, phi uniform.

    Phases come from a counter-based generator (Philox), so a given seed
    yields a bit-identical matrix regardless of scheduling.
    """
    if n_meas < 1:
        raise ValueError("need at least one measurement")
    rng = np.random.Generator(np.random.Philox(seed))
    phases = rng.uniform(0, 2 * np.pi, size=(n_meas, n_antennas))
    return np.exp(1j * phases) / np.sqrt(n_antennas)


@dataclass
class MeasurementEnsemble:
    """Combiner B, per-measurement lifted maps Psi_m, and sensing matrix B'.

    psi[m] = sum_n B[m, n] * Phi_n; bprime row m is vec(psi[m]) so that
    bprime @ vec(X) = [<Psi_m, X>]_m under the unconjugated pairing.
    """

    cfg: ArrayConfig
    basis: LiftedBasis
    combiner: np.ndarray
    psi: np.ndarray
    bprime: np.ndarray
    noise_std: float = 0.0

    @property
    def n_meas(self) -> int:
        return self.combiner.shape[0]


def build_sensing(
    basis: LiftedBasis, combiner: np.ndarray, noise_std: float = 0.0
) -> MeasurementEnsemble:
    cfg = basis.cfg
    if combiner.shape[1] != cfg.n_antennas:
        raise ValueError(
            f"combiner has {combiner.shape[1]} columns, expected {cfg.n_antennas}"
        )
    psi = np.einsum("mn,nkb->mkb", combiner, basis.phi)
    bprime = np.array([vec(psi[m]) for m in range(psi.shape[0])])
    return MeasurementEnsemble(
        cfg=cfg,
        basis=basis,
        combiner=combiner,
        psi=psi,
        bprime=bprime,
        noise_std=noise_std,
    )


@dataclass
class Observation:
    """Compressed observation vector with provenance and feasibility radius."""

    y: np.ndarray
    provenance: str  # synthetic-exact | synthetic-fresnel | synthetic-lifted | external
    eta: float = 0.0
    meta: dict = field(default_factory=dict)


def observe(
    ens: MeasurementEnsemble,
    h: np.ndarray,
    noise_std: float = 0.0,
    seed: int = 0,
    provenance: str = "synthetic-exact",
) -> Observation:
    """y = B h + w with circularly-symmetric complex Gaussian noise."""
    if h.shape[0] != ens.cfg.n_antennas:
        raise ValueError("channel length mismatch")
    y = ens.combiner @ h
    if noise_std > 0:
        rng = np.random.Generator(np.random.Philox(seed))
        w = noise_std * (
            rng.standard_normal(ens.n_meas) + 1j * rng.standard_normal(ens.n_meas)
        )
        y = y + w
    return Observation(y=y, provenance=provenance, meta={"noise_std": noise_std})


def observe_lifted(
    ens: MeasurementEnsemble, atoms: list[tuple[float, float, complex]]
) -> Observation:
    """Mismatch-free observation: y[m] = <Psi_m, sum_l c_l atom(u_l, theta_l)>."""
    cfg = ens.cfg
    y = np.zeros(ens.n_meas, dtype=complex)
    for u, theta, c in atoms:
        y += c * (ens.bprime @ vec(atom_matrix(cfg, u, theta)))
    return Observation(y=y, provenance="synthetic-lifted")


def lifted_channel(basis: LiftedBasis, atoms) -> np.ndarray:
    """Channel implied by the lifted model: h[n] = sum_l c_l <Phi_n, atom_l>."""
    cfg = basis.cfg
    h = np.zeros(cfg.n_antennas, dtype=complex)
    for u, theta, c in atoms:
        a = atom_matrix(cfg, u, theta)
        h += c * np.einsum("nkb,kb->n", basis.phi, a)
    return h


def estimate_eta(
    ens: MeasurementEnsemble,
    paths: list[PathParam],
    model: str = "exact",
    safety_factor: float = 1.5,
    noise_std: float = 0.0,
) -> float:
    """Feasibility radius: safety_factor * ||B h_model - y_lifted|| plus a noise term.

    The difference isolates harmonic-truncation plus inverse-range fit error;
    with provenance synthetic-lifted the model term is exactly zero.
    """
    cfg = ens.cfg
    rmap = InverseRangeMap.from_config(cfg)
    if model == "lifted":
        mismatch = 0.0
    else:
        h = synthesize_channel(cfg, paths, model=model)
        atoms = [(rmap.u_of_r(p.range), p.angle, p.gain) for p in paths]
        y_ideal = observe_lifted(ens, atoms).y
        mismatch = float(np.linalg.norm(ens.combiner @ h - y_ideal))
    noise_term = noise_std * np.sqrt(2 * ens.n_meas)
    return safety_factor * (mismatch + noise_term)


# ---------------------------------------------------------------------------
# Scenario and observation files (JSON with explicit units in field names).


def save_scenario(
    path: str,
    paths: list[PathParam],
    noise_std: float,
    combiner_seed: int,
    noise_seed: int,
    model: str,
    config_hash: str,
) -> None:
    doc = {
        "config_hash": config_hash,
        "model": model,
        "noise_std": noise_std,
        "combiner_seed": combiner_seed,
        "noise_seed": noise_seed,
        "paths": [
            {
                "r_m": p.range,
                "theta_rad": p.angle,
                "gain_re": p.gain.real,
                "gain_im": p.gain.imag,
            }
            for p in paths
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)


def load_scenario(path: str) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    doc["paths"] = [
        PathParam(range=p["r_m"], angle=p["theta_rad"], gain=p["gain_re"] + 1j * p["gain_im"])
        for p in doc["paths"]
    ]
    return doc


def save_observation(path: str, obs: Observation, config_hash: str) -> None:
    doc = {
        "config_hash": config_hash,
        "provenance": obs.provenance,
        "eta": obs.eta,
        "meta": obs.meta,
        "y_re": obs.y.real.tolist(),
        "y_im": obs.y.imag.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)


def load_observation(path: str) -> tuple[Observation, str]:
    with open(path) as fh:
        doc = json.load(fh)
    y = np.array(doc["y_re"]) + 1j * np.array(doc["y_im"])
    obs = Observation(
        y=y, provenance=doc["provenance"], eta=doc["eta"], meta=doc.get("meta", {})
    )
    return obs, doc["config_hash"]
