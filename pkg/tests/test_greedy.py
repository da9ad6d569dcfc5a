import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from beamforming.gain import evaluate, expand
from beamforming.greedy import (
    IncrementalGainState,
    SeparatedGainState,
    greedy_optimize_joint,
    greedy_optimize_separated,
)
from beamforming.linsys import joint_analytic, make_scenario, separated_analytic
from beamforming.quantize import quantize
from conftest import random_config, random_separated
from models.models import (
    ArrayGeometry,
    Direction,
    FrequencyGrid,
    JptaConfig,
    OptimizerSettings,
    QuantizationSpec,
    SeparatedJptaConfig,
)

TIGHT = OptimizerSettings(zeta=1e-12, max_sweeps=50)


def _objective(geometry, grid, scenario, config):
    return evaluate(geometry, grid, scenario, config).log_mean_gain


def test_incremental_state_matches_direct_sum(rng, small_geometry, small_grid, two_user_scenario, coarse_spec):
    config = quantize(random_config(rng, small_geometry, coarse_spec.tau_max), coarse_spec)
    state = IncrementalGainState(small_geometry, small_grid, two_user_scenario, config, coarse_spec)
    assert state.oracle_check() < 1e-9
    for _ in range(30):
        y, z = int(rng.integers(0, 4)), int(rng.integers(0, 6))
        state.set_delay(y, z, int(rng.integers(0, coarse_spec.n_delay_steps + 1)))
        state.set_phase(y, z, int(rng.integers(0, coarse_spec.phase_levels)))
    assert state.oracle_check() < 1e-9
    assert_allclose(
        state.objective(), _objective(small_geometry, small_grid, two_user_scenario, state.config()), atol=1e-9
    )


def test_candidates_match_direct_evaluation(rng, small_geometry, small_grid, two_user_scenario, coarse_spec):
    config = quantize(random_config(rng, small_geometry, coarse_spec.tau_max), coarse_spec)
    state = IncrementalGainState(small_geometry, small_grid, two_user_scenario, config, coarse_spec)
    candidates = state.delay_candidates(1, 2)
    for index in (0, 3, coarse_spec.n_delay_steps):
        delay = config.delay.copy()
        delay[1, 2] = index * coarse_spec.tau_step
        moved = JptaConfig(phase=config.phase, delay=delay)
        assert_allclose(candidates[index], _objective(small_geometry, small_grid, two_user_scenario, moved), atol=1e-9)


def test_separated_state_matches_direct_sum(rng, small_geometry, small_grid, two_user_scenario, coarse_spec):
    config = quantize(random_separated(rng, small_geometry, coarse_spec.tau_max / 2), coarse_spec)
    state = SeparatedGainState(small_geometry, small_grid, two_user_scenario, config, coarse_spec)
    state.set_delay("az", 2, 5)
    state.set_phase("el", 4, 3)
    assert state.oracle_check() < 1e-9
    assert_allclose(
        state.objective(), _objective(small_geometry, small_grid, two_user_scenario, state.config()), atol=1e-9
    )


def test_greedy_joint_is_monotone_and_on_grid(small_geometry, wide_grid, coarse_spec, fast_settings):
    users = [Direction(theta_az=-40.0, theta_el=95.0), Direction(theta_az=35.0, theta_el=115.0)]
    scenario = make_scenario(users, [0.5, 0.5], wide_grid.m_count)
    init = joint_analytic(small_geometry, wide_grid, scenario, tau_max=coarse_spec.tau_max)
    config, trace = greedy_optimize_joint(small_geometry, wide_grid, scenario, init, coarse_spec, fast_settings)

    history = np.asarray(trace.objective_history)
    assert np.all(np.diff(history) >= -1e-9)
    start = _objective(small_geometry, wide_grid, scenario, quantize(init, coarse_spec, wide_grid))
    assert_allclose(history[0], start, atol=1e-9)
    assert _objective(small_geometry, wide_grid, scenario, config) >= start - 1e-12

    assert_allclose(config.delay / coarse_spec.tau_step, np.round(config.delay / coarse_spec.tau_step), atol=1e-9)
    assert_allclose(config.phase / coarse_spec.phase_step, np.round(config.phase / coarse_spec.phase_step), atol=1e-9)
    assert config.delay.max() <= coarse_spec.tau_max + 1e-18


def test_greedy_joint_coordinate_optimality(rng, small_geometry, small_grid, two_user_scenario, coarse_spec):
    init = random_config(rng, small_geometry, coarse_spec.tau_max)
    config, trace = greedy_optimize_joint(small_geometry, small_grid, two_user_scenario, init, coarse_spec, TIGHT)
    assert trace.converged

    state = IncrementalGainState(small_geometry, small_grid, two_user_scenario, config, coarse_spec)
    for _ in range(10):
        y, z = int(rng.integers(0, 4)), int(rng.integers(0, 6))
        delays = state.delay_candidates(y, z)
        phases = state.phase_candidates(y, z)
        assert delays.max() <= delays[state.delay_idx[y, z]] + 1e-9
        assert phases.max() <= phases[state.phase_idx[y, z]] + 1e-9


def test_greedy_fixed_point_converges_in_one_sweep(rng, small_geometry, small_grid, two_user_scenario, coarse_spec):
    first, _ = greedy_optimize_joint(
        small_geometry, small_grid, two_user_scenario, random_config(rng, small_geometry), coarse_spec, TIGHT
    )
    second, trace = greedy_optimize_joint(small_geometry, small_grid, two_user_scenario, first, coarse_spec, TIGHT)
    assert trace.sweeps_run == 1
    assert trace.converged
    assert_array_equal(second.phase, first.phase)
    assert_array_equal(second.delay, first.delay)


def test_greedy_reports_non_convergence(small_geometry, small_grid, two_user_scenario, coarse_spec):
    settings = OptimizerSettings(zeta=1e-12, max_sweeps=1)
    init = JptaConfig.zeros(small_geometry)
    config, trace = greedy_optimize_joint(small_geometry, small_grid, two_user_scenario, init, coarse_spec, settings)
    assert not trace.converged
    assert trace.sweeps_run == 1
    assert trace.final_config is config
    assert trace.objective_history[-1] > trace.objective_history[0]


def test_greedy_separated_single_user_broadside(small_geometry, small_grid, coarse_spec):
    scenario = make_scenario([Direction(theta_az=0.0, theta_el=90.0)], None, small_grid.m_count)
    init = SeparatedJptaConfig.zeros(small_geometry)
    config, trace = greedy_optimize_separated(small_geometry, small_grid, scenario, init, coarse_spec, TIGHT)
    assert trace.converged
    assert trace.sweeps_run == 1
    for values in (config.phase_az, config.delay_az, config.phase_el, config.delay_el):
        assert_array_equal(values, 0.0)


def test_greedy_separated_is_monotone(small_geometry, small_grid, two_user_scenario, coarse_spec, fast_settings):
    init = separated_analytic(small_geometry, small_grid, two_user_scenario, tau_max=coarse_spec.tau_max)
    config, trace = greedy_optimize_separated(
        small_geometry, small_grid, two_user_scenario, init, coarse_spec, fast_settings
    )
    assert isinstance(config, SeparatedJptaConfig)
    assert np.all(np.diff(trace.objective_history) >= -1e-9)
    assert_allclose(
        trace.objective_history[-1], _objective(small_geometry, small_grid, two_user_scenario, config), atol=1e-9
    )


def test_joint_search_space_contains_separated(two_users):
    geometry = ArrayGeometry(n_az=3, n_el=3)
    grid = FrequencyGrid(f_c=28e9, delta_f=2e6, m_count=11)
    scenario = make_scenario(two_users, [0.5, 0.5], grid.m_count)
    axis_spec = QuantizationSpec(tau_step=2.5e-9, tau_max=10e-9, phase_bits=3)
    joint_spec = QuantizationSpec(tau_step=2.5e-9, tau_max=20e-9, phase_bits=3)

    sep_init = separated_analytic(geometry, grid, scenario, tau_max=axis_spec.tau_max)
    sep_config, sep_trace = greedy_optimize_separated(geometry, grid, scenario, sep_init, axis_spec, TIGHT)
    joint_config, _ = greedy_optimize_joint(geometry, grid, scenario, expand(sep_config), joint_spec, TIGHT)

    g_sep = _objective(geometry, grid, scenario, sep_config)
    g_joint = _objective(geometry, grid, scenario, joint_config)
    assert_allclose(g_sep, sep_trace.objective_history[-1], atol=1e-9)
    assert g_sep <= g_joint + 1e-9


def test_exhaustive_oracle_small_grid(two_users):
    geometry = ArrayGeometry(n_az=2, n_el=2)
    grid = FrequencyGrid(f_c=28e9, delta_f=20e6, m_count=5)
    scenario = make_scenario(two_users, [0.4, 0.6], grid.m_count)
    spec = QuantizationSpec(tau_step=2.5e-9, tau_max=5e-9, phase_bits=2)
    state = IncrementalGainState(geometry, grid, scenario, JptaConfig.zeros(geometry), spec)

    # Opções por elemento: índice d * 4 + p, 3 atrasos x 4 fases
    n_delays, n_phases = spec.n_delay_steps + 1, spec.phase_levels
    options = (state.delay_phasors[:, None, :] * state.phase_phasors[None, :, None]).reshape(-1, grid.m_count)
    terms = [options * state.steering[:, y, z][None, :] for y in range(2) for z in range(2)]
    sums = (
        terms[0][:, None, None, None, :]
        + terms[1][None, :, None, None, :]
        + terms[2][None, None, :, None, :]
        + terms[3][None, None, None, :, :]
    )
    values = state.objective_from_sums(sums.reshape(-1, grid.m_count))
    best = np.unravel_index(int(np.argmax(values)), (n_delays * n_phases,) * 4)
    global_max = float(values.max())

    delay = np.array([best[e] // n_phases for e in range(4)], dtype=float).reshape(2, 2) * spec.tau_step
    phase = np.array([best[e] % n_phases for e in range(4)], dtype=float).reshape(2, 2) * spec.phase_step
    optimum = JptaConfig(phase=phase, delay=delay)
    assert_allclose(_objective(geometry, grid, scenario, optimum), global_max, atol=1e-9)

    config, trace = greedy_optimize_joint(geometry, grid, scenario, optimum, spec, TIGHT)
    assert trace.sweeps_run == 1
    assert_array_equal(config.delay, optimum.delay)
    assert_array_equal(config.phase, optimum.phase)

    from_zero, _ = greedy_optimize_joint(geometry, grid, scenario, JptaConfig.zeros(geometry), spec, TIGHT)
    assert _objective(geometry, grid, scenario, from_zero) <= global_max + 1e-9


@pytest.mark.parametrize("solver", [greedy_optimize_joint, greedy_optimize_separated])
def test_greedy_is_deterministic(solver, small_geometry, small_grid, two_user_scenario, coarse_spec, fast_settings):
    joint = solver is greedy_optimize_joint
    init = (joint_analytic if joint else separated_analytic)(
        small_geometry, small_grid, two_user_scenario, tau_max=coarse_spec.tau_max
    )
    first, _ = solver(small_geometry, small_grid, two_user_scenario, init, coarse_spec, fast_settings)
    second, _ = solver(small_geometry, small_grid, two_user_scenario, init, coarse_spec, fast_settings)
    assert first.model_dump().keys() == second.model_dump().keys()
    for key, value in first.model_dump().items():
        assert_array_equal(value, second.model_dump()[key])
