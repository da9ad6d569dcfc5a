import numpy as np
import pytest

from beamforming.linsys import make_scenario
from models.models import (
    ArrayGeometry,
    Direction,
    FrequencyGrid,
    JptaConfig,
    OptimizerSettings,
    QuantizationSpec,
    SeparatedJptaConfig,
)

F_C = 28e9
DELTA_F = 120e3


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_geometry():
    return ArrayGeometry(n_az=4, n_el=6)


@pytest.fixture
def small_grid():
    return FrequencyGrid(f_c=F_C, delta_f=DELTA_F, m_count=21)


@pytest.fixture
def wide_grid():
    # Banda larga o bastante para o atraso fazer diferença entre subportadoras.
    return FrequencyGrid(f_c=F_C, delta_f=5e6, m_count=41)


@pytest.fixture
def two_users():
    return [Direction(theta_az=-40.0, theta_el=95.0), Direction(theta_az=35.0, theta_el=115.0)]


@pytest.fixture
def two_user_scenario(two_users, small_grid):
    return make_scenario(two_users, [0.4, 0.6], small_grid.m_count)


@pytest.fixture
def fast_settings():
    return OptimizerSettings(zeta=1e-6, max_sweeps=10, max_steps=200, window=20)


@pytest.fixture
def coarse_spec():
    return QuantizationSpec(tau_step=2.5e-9, tau_max=20e-9, phase_bits=3)


def random_config(rng, geometry, tau_max=50e-9):
    return JptaConfig(
        phase=rng.uniform(0, 2 * np.pi, geometry.shape),
        delay=rng.uniform(0, tau_max, geometry.shape),
    )


def random_separated(rng, geometry, tau_max=50e-9):
    return SeparatedJptaConfig(
        phase_az=rng.uniform(0, 2 * np.pi, geometry.n_az),
        delay_az=rng.uniform(0, tau_max, geometry.n_az),
        phase_el=rng.uniform(0, 2 * np.pi, geometry.n_el),
        delay_el=rng.uniform(0, tau_max, geometry.n_el),
    )


def random_direction(rng):
    return Direction(theta_az=float(rng.uniform(-60, 60)), theta_el=float(rng.uniform(90, 120)))
