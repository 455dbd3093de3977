"""Gridless joint range-angle super-resolution for near-field hybrid arrays.

Pipeline: spherical-wave array model -> harmonic (Jacobi-Anger) expansion ->
inverse-range Fourier basis and per-antenna lifting matrices -> compressed
hybrid measurements -> 2D atomic-norm semidefinite program -> dual-polynomial
peak localization -> least-squares gain refinement.
"""

from .config import ArrayConfig
from .arraymodel import PathParam, exact_steering, fresnel_steering, synthesize_channel
from .invrange import InverseRangeMap, LiftedBasis, build_basis
from .measurement import MeasurementEnsemble, Observation, draw_combiner, build_sensing
from .sdp import SdpProblem, SdpSolution, solve
from .localization import DualPolynomial, PathEstimate

__all__ = [
    "ArrayConfig",
    "PathParam",
    "exact_steering",
    "fresnel_steering",
    "synthesize_channel",
    "InverseRangeMap",
    "LiftedBasis",
    "build_basis",
    "MeasurementEnsemble",
    "Observation",
    "draw_combiner",
    "build_sensing",
    "SdpProblem",
    "SdpSolution",
    "solve",
    "DualPolynomial",
    "PathEstimate",
]

__version__ = "0.1.0"
