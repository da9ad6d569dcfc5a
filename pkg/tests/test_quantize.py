import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from beamforming.gain import evaluate
from beamforming.linsys import joint_analytic, make_scenario, separated_analytic
from beamforming.quantize import delay_steps, phase_steps, quantize
from conftest import random_config, random_separated
from models.errors import DelayRangeWarning
from models.models import Direction, FrequencyGrid, JptaConfig, QuantizationSpec

SPEC = QuantizationSpec()


def test_default_grids():
    assert SPEC.n_delay_steps == 80
    assert SPEC.delay_grid.size == 81
    assert SPEC.phase_levels == 64
    assert_allclose(SPEC.phase_step, 2 * np.pi / 64)


def test_delay_nearest_point():
    config = JptaConfig(phase=[[0.0, 0.0, 0.0]], delay=[[1.3e-9, 1.2e-9, 1.25e-9]])
    out = quantize(config, SPEC)
    assert_allclose(out.delay, [[2.5e-9, 0.0, 2.5e-9]])


def test_phase_wraps_to_zero():
    eps = 1e-6
    assert_array_equal(phase_steps([2 * np.pi - eps, -eps, 2 * np.pi], SPEC), [0, 0, 0])
    out = quantize(JptaConfig(phase=[[2 * np.pi - eps]], delay=[[0.0]]), SPEC)
    assert out.phase[0, 0] == 0.0


def test_error_bounds_and_idempotence(rng, small_geometry):
    for _ in range(20):
        config = random_config(rng, small_geometry, tau_max=SPEC.tau_max)
        once = quantize(config, SPEC)
        assert np.all(np.abs(once.delay - config.delay) <= SPEC.tau_step / 2 + 1e-18)
        circular = np.angle(np.exp(1j * (once.phase - config.phase)))
        assert np.all(np.abs(circular) <= SPEC.phase_step / 2 + 1e-12)
        twice = quantize(once, SPEC)
        assert_array_equal(twice.phase, once.phase)
        assert_array_equal(twice.delay, once.delay)


def test_separated_quantization(rng, small_geometry):
    config = random_separated(rng, small_geometry, tau_max=SPEC.tau_max / 2)
    out = quantize(config, SPEC)
    steps = out.delay_az / SPEC.tau_step
    assert_allclose(steps, np.round(steps))
    assert out.phase_el.shape == (small_geometry.n_el,)


def test_out_of_range_delay_is_clamped():
    spec = QuantizationSpec(tau_step=2.5e-9, tau_max=10e-9, phase_bits=2)
    with pytest.warns(DelayRangeWarning):
        steps = delay_steps([12e-9, -1e-9, 5e-9], spec)
    assert_array_equal(steps, [4, 0, 2])


def test_spec_rejects_inverted_range():
    with pytest.raises(ValueError):
        QuantizationSpec(tau_step=5e-9, tau_max=1e-9)


def _three_users():
    users = [
        Direction(theta_az=-45.0, theta_el=95.0),
        Direction(theta_az=5.0, theta_el=105.0),
        Direction(theta_az=50.0, theta_el=118.0),
    ]
    return make_scenario(users, [0.3, 0.3, 0.4], 101)


def test_grid_aware_rounding_keeps_center_phase(rng, small_geometry):
    grid = FrequencyGrid(f_c=28e9, delta_f=120e3, m_count=101)
    for _ in range(20):
        config = random_config(rng, small_geometry, tau_max=SPEC.tau_max)
        out = quantize(config, SPEC, grid)
        assert np.all(np.abs(out.delay - config.delay) <= SPEC.tau_step / 2 + 1e-18)
        x1 = config.phase + 2 * np.pi * grid.f_c * config.delay
        x1_q = out.phase + 2 * np.pi * grid.f_c * out.delay
        assert np.all(np.abs(np.angle(np.exp(1j * (x1_q - x1)))) <= SPEC.phase_step / 2 + 1e-9)
        assert_allclose(out.phase / SPEC.phase_step, np.round(out.phase / SPEC.phase_step), atol=1e-9)


def test_quantized_joint_design_keeps_multiuser_gain(small_geometry):
    grid = FrequencyGrid(f_c=28e9, delta_f=120e3, m_count=101)
    scenario = _three_users()
    continuous = joint_analytic(small_geometry, grid, scenario, tau_max=SPEC.tau_max)
    quantized = quantize(continuous, SPEC, grid)

    before = evaluate(small_geometry, grid, scenario, continuous).log_mean_gain
    after = evaluate(small_geometry, grid, scenario, quantized).log_mean_gain
    assert after >= before - 1.0
    steps = quantized.delay / SPEC.tau_step
    assert_allclose(steps, np.round(steps), atol=1e-9)


def test_quantized_separated_design_keeps_multiuser_gain(small_geometry):
    grid = FrequencyGrid(f_c=28e9, delta_f=120e3, m_count=101)
    scenario = _three_users()
    continuous = separated_analytic(small_geometry, grid, scenario, tau_max=SPEC.tau_max)
    quantized = quantize(continuous, SPEC, grid)

    before = evaluate(small_geometry, grid, scenario, continuous).log_mean_gain
    after = evaluate(small_geometry, grid, scenario, quantized).log_mean_gain
    assert after >= before - 1.0
