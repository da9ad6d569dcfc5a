"""Reproduções no arranjo de referência 16x24 com 793 subportadoras.

Demoram de minutos a dezenas de minutos; rode com `pytest -m slow`.
"""
import math
from pathlib import Path

import numpy as np
import pytest

from beamforming.gain import count_sidelobes, evaluate, gain, gain_map, to_db
from beamforming.linsys import joint_analytic
from beamforming.quantize import quantize
from factories.config_factory import ConfigFactory
from harness.experiment import angle_grid, run_experiment
from models.models import ExperimentConfig
from utils.data_utils import load_experiment_file

pytestmark = pytest.mark.slow

ALPHA_GRID = [0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50]
FAIRNESS_ALPHAS = [0.3, 0.2, 0.15, 0.1, 0.25]
DATA_DIR = Path(__file__).resolve().parents[1] / "src" / "data"


def _run(config, solver, scenario):
    solve = ConfigFactory.solver(solver)
    beam, trace = solve(config.geometry, config.grid, scenario, config.quantization, config.optimizer, True)
    return beam, trace, evaluate(config.geometry, config.grid, scenario, beam, solver)


def test_single_user_reaches_element_count():
    config = ExperimentConfig(n_users=1)
    scenario = ConfigFactory.scenario(config)
    direction = scenario.directions[0]
    continuous = joint_analytic(config.geometry, config.grid, scenario, tau_max=config.quantization.tau_max)
    center = config.grid.m_count // 2
    assert gain(config.geometry, config.grid, continuous, direction, center) >= 0.99 * 384

    quantized = quantize(continuous, config.quantization, config.grid)
    g_l = evaluate(config.geometry, config.grid, scenario, quantized).log_mean_gain
    assert abs(g_l - 10 * math.log10(384)) <= 0.2


def test_quantization_keeps_four_user_gain():
    config = ExperimentConfig(n_users=4)
    scenario = ConfigFactory.scenario(config)
    continuous = joint_analytic(config.geometry, config.grid, scenario, tau_max=config.quantization.tau_max)
    quantized = quantize(continuous, config.quantization, config.grid)
    before = evaluate(config.geometry, config.grid, scenario, continuous).log_mean_gain
    after = evaluate(config.geometry, config.grid, scenario, quantized).log_mean_gain
    assert after >= before - 1.0


def test_joint_beats_separated_over_alpha_sweep(tmp_path):
    config = ExperimentConfig(
        n_users=2,
        solvers=["joint-ls", "joint-minimax", "sep-ls", "sep-minimax"],
        sweep={"alpha_two_user": ALPHA_GRID},
        output_dir=str(tmp_path),
    )
    records = run_experiment(config)
    assert len(records) == 40
    gl = {(r.scenario_id, r.solver): r.gl_db for r in records}
    scenario_ids = sorted({r.scenario_id for r in records})
    for criterion in ("ls", "minimax"):
        gaps = np.array([gl[(sid, f"joint-{criterion}")] - gl[(sid, f"sep-{criterion}")] for sid in scenario_ids])
        assert np.all(gaps >= 0)

    # Com alpha < 0.3 a diferença passa de 4.5 dB neste posicionamento de usuários.
    balanced = [sid for sid, alpha in zip(scenario_ids, ALPHA_GRID) if alpha >= 0.3]
    ls_gaps = np.array([gl[(sid, "joint-ls")] - gl[(sid, "sep-ls")] for sid in balanced])
    assert np.all((ls_gaps >= 0.3) & (ls_gaps <= 4.5))
    assert abs(ls_gaps.mean() - 1.29) <= 0.4


def test_minimax_is_fairer_than_ls():
    config = ExperimentConfig(n_users=5, alphas=FAIRNESS_ALPHAS)
    scenario = ConfigFactory.scenario(config)
    spread = {
        solver: _run(config, solver, scenario)[2].spread_db
        for solver in ("joint-ls", "joint-minimax", "sep-ls", "sep-minimax")
    }
    assert spread["joint-minimax"] < spread["joint-ls"]
    assert spread["sep-minimax"] < spread["sep-ls"]
    assert abs(spread["joint-minimax"] - 3.0) <= 1.0
    assert abs(spread["joint-ls"] - 5.0) <= 1.0


def test_iterative_solvers_improve_joint_ls():
    config = load_experiment_file(DATA_DIR / "four_user_iterative.json", ["optimizer.show_progress=false"])
    scenario = ConfigFactory.scenario(config)
    base = _run(config, "joint-ls", scenario)[2].log_mean_gain

    gd = _run(config, "gd-joint", scenario)[2]
    greedy = _run(config, "greedy-joint", scenario)[2]
    gd_gain = gd.log_mean_gain - base
    greedy_gain = greedy.log_mean_gain - base

    assert greedy_gain > 0.5
    assert abs(gd_gain - 2.11) <= 0.6
    assert abs(greedy.log_mean_gain - gd.log_mean_gain) <= 0.7


def test_gradient_descent_is_faster_than_greedy(tmp_path):
    config = ExperimentConfig(n_users=4, solvers=["gd-joint", "greedy-joint"], output_dir=str(tmp_path))
    records = {r.solver: r for r in run_experiment(config)}
    assert records["gd-joint"].metrics.wall_time < records["greedy-joint"].metrics.wall_time


def test_gain_map_covers_every_user():
    config = ExperimentConfig(n_users=5)
    scenario = ConfigFactory.scenario(config)
    az = angle_grid(-90.0, 90.0, 1.0)
    el = angle_grid(75.0, 135.0, 1.0)

    joint, _, _ = _run(config, "joint-ls", scenario)
    joint_map = to_db(gain_map(config.geometry, config.grid, joint, az, el))
    # O máximo sobre subportadoras forma uma crista entre usuários; cada usuário precisa estar nela.
    for direction in scenario.directions:
        near_az = np.abs(az - direction.theta_az) <= 1.0
        near_el = np.abs(el - direction.theta_el) <= 1.0
        assert joint_map[np.ix_(near_az, near_el)].max() >= joint_map.max() - 8.0

    separated, _, _ = _run(config, "sep-ls", scenario)
    sep_map = to_db(gain_map(config.geometry, config.grid, separated, az, el))
    assert count_sidelobes(sep_map, 10.0) >= count_sidelobes(joint_map, 10.0)
