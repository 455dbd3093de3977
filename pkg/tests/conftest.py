import numpy as np
import pytest

from nfsr.arraymodel import PathParam
from nfsr.config import ArrayConfig
from nfsr.invrange import InverseRangeMap, build_basis
from nfsr.measurement import build_sensing, draw_combiner

# The reference experiment: 64-antenna half-wavelength ULA at 100 GHz,
# ranges in [0.1, 6] m, truncation orders I_1=20, I_2=1, K_u=2, K_loc=2,
# four panels, 20 compressed measurements.
REFERENCE_PATHS = [
    PathParam(range=3.4172, angle=0.8749, gain=1.2968 + 0.6096j),
    PathParam(range=0.8560, angle=1.9866, gain=0.3802 - 1.5972j),
]
REFERENCE_GAIN_ESTIMATES = [1.2912 + 0.6169j, 0.3898 - 1.5956j]
COMBINER_SEED = 12345


@pytest.fixture(scope="session")
def cfg():
    return ArrayConfig(n_antennas=64, carrier_freq=100e9)


@pytest.fixture(scope="session")
def basis(cfg):
    return build_basis(cfg)


@pytest.fixture(scope="session")
def ensemble(basis):
    return build_sensing(basis, draw_combiner(20, basis.cfg.n_antennas, COMBINER_SEED))


@pytest.fixture(scope="session")
def rmap(cfg):
    return InverseRangeMap.from_config(cfg)


@pytest.fixture(scope="session")
def reference_atoms(rmap):
    return [(rmap.u_of_r(p.range), p.angle, p.gain) for p in REFERENCE_PATHS]
