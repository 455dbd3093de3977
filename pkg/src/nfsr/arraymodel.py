"""Spherical-wave array responses and sparse channel synthesis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ArrayConfig


@dataclass(frozen=True)
class PathParam:
    """A single propagation path: range (m), angle (rad in [0, pi)), complex gain."""

    range: float
    angle: float
    gain: complex

    def validate(self, cfg: ArrayConfig) -> None:
        if not (cfg.r_min <= self.range <= cfg.r_max):
            raise ValueError(
                f"path range {self.range} outside [{cfg.r_min}, {cfg.r_max}]"
            )
        _check_angle(self.angle)


def _check_angle(theta: float) -> None:
    if not (0.0 <= theta < np.pi):
        raise ValueError(f"angle {theta} outside [0, pi)")


def exact_steering(cfg: ArrayConfig, r: float, theta: float) -> np.ndarray:
    """Exact spherical-wave steering vector.

    Entry n is exp(-j k_lambda (r_n - r)) with
    r_n = sqrt(r^2 + (n d)^2 - 2 r (n d) cos(theta)).
    """
    if r <= 0:
        raise ValueError("range must be positive")
    _check_angle(theta)
    nd = np.arange(cfg.n_antennas) * cfg.spacing
    r_n = np.sqrt(r * r + nd * nd - 2 * r * nd * np.cos(theta))
    return np.exp(-1j * cfg.k_lambda * (r_n - r))


def fresnel_steering(cfg: ArrayConfig, r: float, theta: float) -> np.ndarray:
    """Second-order Fresnel approximation of the steering vector.

    Entry n is exp(j k_lambda n d cos(theta)) * exp(-j k_lambda (n d)^2 sin^2(theta) / (2 r)).
    """
    if r <= 0:
        raise ValueError("range must be positive")
    _check_angle(theta)
    nd = np.arange(cfg.n_antennas) * cfg.spacing
    lin = cfg.k_lambda * nd * np.cos(theta)
    curv = cfg.k_lambda * nd * nd * np.sin(theta) ** 2 / (2 * r)
    return np.exp(1j * (lin - curv))


def synthesize_channel(
    cfg: ArrayConfig, paths: list[PathParam], model: str = "exact"
) -> np.ndarray:
    """Sparse near-field channel h = sum_l c_l * steering(r_l, theta_l)."""
    if not paths:
        raise ValueError("at least one path required")
    steer = {"exact": exact_steering, "fresnel": fresnel_steering}
    if model not in steer:
        raise ValueError(f"unknown steering model {model!r}")
    h = np.zeros(cfg.n_antennas, dtype=complex)
    for p in paths:
        h += p.gain * steer[model](cfg, p.range, p.angle)
    return h
