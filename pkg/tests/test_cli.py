import json
import math

import pandas as pd
import pytest

from harness.run_jpta import EXIT_OK, EXIT_USAGE, OUTPUT_ENV, main


@pytest.fixture
def config_file(tmp_path):
    def write(**fields):
        data = {
            "name": "cli",
            "n_az": 2,
            "n_el": 3,
            "m_count": 21,
            "n_users": 1,
            "map_az_step": 30.0,
            "map_el_step": 30.0,
        }
        data.update(fields)
        path = tmp_path / "experiment.json"
        path.write_text(json.dumps(data), encoding="utf-8")
        return str(path)

    return write


def test_solve_single_user(config_file, tmp_path):
    out = tmp_path / "out"
    code = main(["solve", "--config", config_file(), "--solver", "joint-ls", "--out", str(out), "-q"])
    assert code == EXIT_OK

    table = pd.read_csv(out / "tables" / "phase_delay_cli-000_joint-ls.csv")
    assert list(table.columns) == ["y", "z", "phase_rad", "delay_ns", "delay_steps"]
    assert len(table) == 6
    assert (table["delay_steps"] * 2.5 - table["delay_ns"]).abs().max() < 1e-9

    assert not (out / "phase_delay_joint-ls.csv").exists()

    result = json.loads((out / "solve_joint-ls.json").read_text(encoding="utf-8"))
    assert result["status"] == "Sucesso"
    assert result["results"]["table_file"].endswith("phase_delay_cli-000_joint-ls.csv")
    assert abs(result["results"]["gl_db"] - 10 * math.log10(6)) < 0.1


def test_solve_prints_gain(config_file, tmp_path, capsys):
    main(["solve", "-c", config_file(), "--solver", "sep-ls", "--out", str(tmp_path), "-q"])
    assert "G_l = 7.7" in capsys.readouterr().out


def test_output_dir_from_environment(config_file, tmp_path, monkeypatch):
    target = tmp_path / "from_env"
    monkeypatch.setenv(OUTPUT_ENV, str(target))
    assert main(["solve", "-c", config_file(), "--solver", "joint-ls", "-q"]) == EXIT_OK
    assert (target / "tables" / "phase_delay_cli-000_joint-ls.csv").exists()


def test_missing_config_is_usage_error(tmp_path):
    assert main(["solve", "-c", str(tmp_path / "nope.json"), "--solver", "joint-ls", "-q"]) == EXIT_USAGE


def test_invalid_field_is_usage_error(config_file, tmp_path, capsys):
    code = main(["solve", "-c", config_file(n_az=0), "--solver", "joint-ls", "--out", str(tmp_path), "-q"])
    assert code == EXIT_USAGE
    assert "n_az" in capsys.readouterr().out


def test_unknown_override_is_usage_error(config_file, tmp_path, capsys):
    code = main(["solve", "-c", config_file(), "--solver", "joint-ls", "--set", "bogus=1", "--out", str(tmp_path)])
    assert code == EXIT_USAGE
    assert "bogus" in capsys.readouterr().out


def test_solver_typo_lists_valid_names(config_file, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["solve", "-c", config_file(), "--solver", "joint-lss"])
    assert exc.value.code == EXIT_USAGE
    assert "joint-ls" in capsys.readouterr().err


def test_eval_map_two_point_grid(config_file, tmp_path):
    out = tmp_path / "maps"
    code = main([
        "eval-map", "-c", config_file(n_users=2), "--solver", "joint-ls", "--out", str(out), "-q",
        "--set", "map_az_range=[-10, 10]", "--set", "map_el_range=[95, 105]",
        "--az-step", "20", "--el-step", "10", "--el-slice", "100",
    ])
    assert code == EXIT_OK
    gain_map = pd.read_csv(out / "gain_map_joint-ls.csv")
    assert list(gain_map.columns) == ["theta_az_deg", "theta_el_deg", "max_gain_db"]
    assert len(gain_map) == 4
    slice_ = pd.read_csv(out / "freq_slice_joint-ls.csv")
    assert list(slice_.columns) == ["theta_az_deg", "subcarrier", "freq_hz", "gain_db"]
    assert len(slice_) == 2 * 21


def test_eval_map_rejects_single_point_axis(config_file, tmp_path):
    code = main([
        "eval-map", "-c", config_file(), "--solver", "joint-ls", "--out", str(tmp_path), "-q",
        "--set", "map_az_range=[-10, 10]", "--az-step", "100",
    ])
    assert code == EXIT_USAGE


def test_sweep_single_scenario(config_file, tmp_path):
    out = tmp_path / "sweep"
    assert main(["sweep", "-c", config_file(), "--out", str(out), "-q"]) == EXIT_OK
    metrics = pd.read_csv(out / "metrics.csv")
    assert len(metrics) == 1
    assert (out / "metrics.json").exists()


def test_sweep_resume_reuses_previous_session(config_file, tmp_path):
    out = tmp_path / "sweep"
    path = config_file(sweep={"n_users": [1, 2]})
    assert main(["sweep", "-c", path, "--out", str(out), "-q"]) == EXIT_OK
    assert main(["sweep", "-c", path, "--out", str(out), "--resume", "-q"]) == EXIT_OK
    metrics = pd.read_csv(out / "metrics.csv")
    assert list(metrics["scenario_id"]) == ["cli-000", "cli-001"]


def test_compare_prints_matrix(config_file, tmp_path, capsys):
    path = config_file(n_users=2, sweep={"alpha_two_user": [0.3, 0.5]})
    code = main(["compare", "-c", path, "--solvers", "joint-ls,sep-ls", "--out", str(tmp_path), "-q"])
    assert code == EXIT_OK
    printed = capsys.readouterr().out
    assert "cli-000" in printed and "cli-001" in printed
    assert "joint-ls - sep-ls" in printed
    assert len(pd.read_csv(tmp_path / "metrics.csv")) == 4


def test_compare_rejects_unknown_solver(config_file, tmp_path):
    code = main(["compare", "-c", config_file(), "--solvers", "joint-ls,nope", "--out", str(tmp_path), "-q"])
    assert code == EXIT_USAGE
