"""Array configuration: geometry, truncation orders, and derived constants."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299792458.0  # m/s, exact


@dataclass(frozen=True)
class ArrayConfig:
    """Uniform linear array geometry plus all model truncation orders.

    This is the single source of derived constants (wavelength, wavenumber,
    curvature coefficients alpha_n, lifted dimensions N_u x N_b).

    Parameters
    ----------
    n_antennas : int
        Number of receive antennas N_r (>= 2).
    carrier_freq : float
        Carrier frequency f_c in Hz.
    spacing : float or None
        Antenna spacing d in meters; None selects half-wavelength.
    r_min, r_max : float
        Range interval [r_min, r_max] in meters, 0 < r_min < r_max.
    i1, i2 : int
        Angular (I_1) and curvature (I_2) harmonic truncation orders.
    k_u : int
        Global inverse-range Fourier order K_u; the lifted matrix has
        N_u = 2*K_u + 1 rows.
    k_loc : int
        Per-panel local Fourier order K_loc.
    n_panels : int
        Number of overlapping inverse-range panels P.
    ridge_mu : float
        Ridge regularizer mu for the panel least-squares fits.
    """

    n_antennas: int
    carrier_freq: float
    spacing: float | None = None
    r_min: float = 0.1
    r_max: float = 6.0
    i1: int = 20
    i2: int = 1
    k_u: int = 2
    k_loc: int = 2
    n_panels: int = 4
    ridge_mu: float = 1e-8

    def __post_init__(self):
        if self.n_antennas < 2:
            raise ValueError("n_antennas must be >= 2")
        if self.carrier_freq <= 0:
            raise ValueError("carrier_freq must be positive")
        if not (0 < self.r_min < self.r_max):
            raise ValueError("need 0 < r_min < r_max")
        if self.spacing is None:
            object.__setattr__(self, "spacing", self.wavelength / 2)
        if self.spacing <= 0:
            raise ValueError("spacing must be positive")
        for name in ("i1", "i2", "k_u", "k_loc"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.n_panels < 1:
            raise ValueError("n_panels must be positive")
        if self.ridge_mu < 0:
            raise ValueError("ridge_mu must be non-negative")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq

    @property
    def k_lambda(self) -> float:
        """Wavenumber 2*pi/lambda."""
        return 2 * np.pi / self.wavelength

    @property
    def aperture(self) -> float:
        return (self.n_antennas - 1) * self.spacing

    def alpha(self, n) -> np.ndarray | float:
        """Curvature coefficient alpha_n = k_lambda * (n*d)^2 / 4."""
        nd = np.asarray(n, dtype=float) * self.spacing
        return self.k_lambda * nd * nd / 4.0

    @property
    def alphas(self) -> np.ndarray:
        return self.alpha(np.arange(self.n_antennas))

    @property
    def i_off(self) -> int:
        """Maximum combined angular harmonic order I_1 + 2*I_2."""
        return self.i1 + 2 * self.i2

    @property
    def n_u(self) -> int:
        return 2 * self.k_u + 1

    @property
    def n_b(self) -> int:
        return 2 * self.i_off + 1

    def k_theta(self, m) -> np.ndarray | int:
        """Angular harmonic index of column m (1-based): k_theta(m) = m - 1 - I_off.

        Bijection {1..N_b} -> {-I_off..I_off}.
        """
        m = np.asarray(m)
        if np.any(m < 1) or np.any(m > self.n_b):
            raise ValueError("column index out of range")
        out = m - 1 - self.i_off
        return int(out) if out.ndim == 0 else out

    @property
    def k_theta_all(self) -> np.ndarray:
        """All angular harmonic indices -I_off..I_off in column order."""
        return np.arange(-self.i_off, self.i_off + 1)

    @property
    def k_u_all(self) -> np.ndarray:
        """All inverse-range harmonic indices -K_u..K_u in row order."""
        return np.arange(-self.k_u, self.k_u + 1)

    def to_dict(self) -> dict:
        return {
            "n_antennas": self.n_antennas,
            "carrier_freq": self.carrier_freq,
            "spacing": self.spacing,
            "r_min": self.r_min,
            "r_max": self.r_max,
            "i1": self.i1,
            "i2": self.i2,
            "k_u": self.k_u,
            "k_loc": self.k_loc,
            "n_panels": self.n_panels,
            "ridge_mu": self.ridge_mu,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArrayConfig":
        return cls(**d)

    def config_hash(self) -> str:
        """Stable hash of the full configuration; keys caches and reports."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]
