import json
from pathlib import Path

import numpy as np
import pytest

from tlpricing.cli import RunSpec, main, run
from tlpricing.io import (
    load_scenario,
    read_report,
    save_load_csv,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
)
from tlpricing.model import validate_scenario
from tlpricing.objective import operator_cost
from tlpricing.scenarios import make_eight_slot, make_log_toy, make_two_slot_linear


def test_scenario_json_round_trip(tmp_path):
    for s in (make_two_slot_linear(), make_log_toy(), make_eight_slot("log")):
        path = tmp_path / "scenario.json"
        save_scenario(s, path)
        loaded = load_scenario(path)
        assert validate_scenario(loaded) == []
        assert loaded.T0 == s.T0 and loaded.L == s.L and loaded.T == s.T
        assert np.allclose(loaded.alpha, s.alpha)
        for a, b in zip(loaded.user_types, s.user_types):
            assert np.allclose(a.beta, b.beta)
            assert np.allclose(a.x_ini, b.x_ini)
            assert a.delta == b.delta
        h0, _ = operator_cost(s, s.flat_prices())
        h1, _ = operator_cost(loaded, loaded.flat_prices())
        assert h0 == pytest.approx(h1, abs=1e-12)


def test_csv_matrix_reference(tmp_path):
    s = make_log_toy()
    data = scenario_to_dict(s)
    save_load_csv(np.asarray(s.user_types[0].x_ini), tmp_path / "usage.csv")
    data["user_types"][0]["x_ini"] = "usage.csv"
    with open(tmp_path / "scenario.json", "w") as fh:
        json.dump(data, fh)
    loaded = load_scenario(tmp_path / "scenario.json")
    assert np.allclose(loaded.user_types[0].x_ini, s.user_types[0].x_ini)


def test_load_matrix_csv_round_trip(tmp_path):
    s = make_log_toy()
    _, load = operator_cost(s, s.flat_prices())
    path = tmp_path / "load.csv"
    save_load_csv(load.x_aft, path)
    back = np.loadtxt(path, delimiter=",").reshape(s.T0, s.L)
    assert np.allclose(back, load.x_aft, atol=1e-10)


def test_loader_renormalizes_float_noise(tmp_path):
    s = make_log_toy()
    data = scenario_to_dict(s)
    data["alpha"][0][0] = 1.0 + 2e-7
    loaded = scenario_from_dict(data)
    assert validate_scenario(loaded) == []


def test_run_flat_mode(tmp_path):
    s = make_log_toy()
    path = tmp_path / "scenario.json"
    save_scenario(s, path)
    report = run(RunSpec(scenario_path=str(path), solver="spg", mode="flat"))
    h_flat, _ = operator_cost(s, s.flat_prices())
    assert report.objective == pytest.approx(h_flat, abs=1e-12)
    assert report.metrics.average_discount == 0.0


def test_report_round_trip(tmp_path):
    s = make_log_toy()
    scen = tmp_path / "scenario.json"
    out = tmp_path / "report.json"
    save_scenario(s, scen)
    code = main([
        "run", "--scenario", str(scen), "--solver", "dycors", "--seed", "3",
        "--out", str(out), "--config", str(_write_config(tmp_path, {"nf_max": 40})),
    ])
    assert code == 0
    data = read_report(out)
    h, _ = operator_cost(s, np.asarray(data["best_p"]))
    assert data["objective"] == pytest.approx(h, abs=1e-8)
    assert data["solver"] == "dycors"


def _write_config(tmp_path, cfg):
    path = tmp_path / "config.json"
    with open(path, "w") as fh:
        json.dump(cfg, fh)
    return path


def test_cli_validate_ok_and_failure(tmp_path, capsys):
    s = make_two_slot_linear()
    good = tmp_path / "good.json"
    save_scenario(s, good)
    assert main(["validate", "--scenario", str(good)]) == 0

    data = scenario_to_dict(s)
    data["user_types"][0]["delta"] = 1.7
    bad = tmp_path / "bad.json"
    with open(bad, "w") as fh:
        json.dump(data, fh)
    assert main(["validate", "--scenario", str(bad)]) == 1
    out = capsys.readouterr().out
    assert "delta" in out


def test_cli_rejects_incompatible_solver(tmp_path, capsys):
    s = make_two_slot_linear()
    path = tmp_path / "scenario.json"
    save_scenario(s, path)
    assert main(["run", "--scenario", str(path), "--solver", "spg"]) == 1
    err = capsys.readouterr().err
    assert "spg" in err


def test_cli_oracle_subcommand(tmp_path, capsys):
    s = make_two_slot_linear(gamma=1.0, delta=1.0)
    path = tmp_path / "scenario.json"
    save_scenario(s, path)
    assert main(["oracle", "--scenario", str(path), "--step", "0.05"]) == 0
    out = capsys.readouterr().out
    assert "-2.0" in out


def test_cli_missing_file_is_validation_failure(capsys):
    assert main(["run", "--scenario", "/nonexistent/path.json"]) == 1


def test_cli_spg_with_config_file(tmp_path):
    s = make_log_toy()
    scen = tmp_path / "scenario.json"
    save_scenario(s, scen)
    cfg = _write_config(
        tmp_path, {"mu_schedule": [1e-2, 1e-4], "max_iters": 200, "eps_pg": 1e-4}
    )
    out = tmp_path / "report.json"
    code = main([
        "run", "--scenario", str(scen), "--solver", "spg",
        "--config", str(cfg), "--out", str(out),
    ])
    assert code == 0
    data = read_report(out)
    assert data["objective"] <= data["flat_objective"] + 1e-12


def test_cli_solver_error_exit_code(tmp_path, capsys):
    # demand below the smoothing floor makes the smoothed stage unsolvable
    from tlpricing.model import Logarithmic, Scenario, UserType, normalize_scenario
    from tlpricing.scenarios import chain_beta

    s = normalize_scenario(
        Scenario(
            T0=2, L=1, T=2, capacity=1.0, gamma=1.0, p0=1.0,
            alpha=np.ones((2, 1)),
            user_types=[
                UserType(Logarithmic(1.0), 1.0, chain_beta(2, 1, 2), np.array([[1e-9], [0.0]]))
            ],
        )
    )
    scen = tmp_path / "scenario.json"
    save_scenario(s, scen)
    assert main(["run", "--scenario", str(scen), "--solver", "spg"]) == 2
    assert "solver error" in capsys.readouterr().err


def test_cli_compare_subcommand(tmp_path, capsys):
    s = make_log_toy()
    scen = tmp_path / "scenario.json"
    save_scenario(s, scen)
    cfg = _write_config(tmp_path, {"dycors": {"nf_max": 60}})
    code = main([
        "compare", "--scenario", str(scen), "--solvers", "spg,dycors",
        "--seed", "0", "--config", str(cfg),
    ])
    assert code == 0
    out = capsys.readouterr().out
    assert "spg" in out and "dycors" in out

    assert main(["compare", "--scenario", str(scen), "--solvers", "spg,bogus"]) == 1


def test_gradient_solver_beats_search_budget_on_log_instance(tmp_path):
    # qualitative comparison: with exact gradients available, the projected
    # gradient method should never lose to a 60-evaluation surrogate search
    from tlpricing.dycors import DycorsConfig, dycors_solve
    from tlpricing.spg import spg_solve

    s = make_log_toy()
    rep_spg = spg_solve(s)
    rep_dy = dycors_solve(s, DycorsConfig(nf_max=60, seed=0))
    assert rep_spg.objective <= rep_dy.objective + 1e-9


def test_run_time_only_broadcasts(tmp_path):
    s = make_log_toy()
    path = tmp_path / "scenario.json"
    save_scenario(s, path)
    report = run(
        RunSpec(
            scenario_path=str(path), solver="dycors", mode="time-only", seed=0,
            config={"nf_max": 30},
        )
    )
    assert np.allclose(report.best_p[:, :1], report.best_p)
    assert report.mode == "time-only"


def test_bundled_scenario_files_match_builders():
    root = Path(__file__).resolve().parents[1] / "scenarios"
    pairs = [
        ("two_slot_linear.json", make_two_slot_linear()),
        ("log_toy_2x1.json", make_log_toy()),
        ("eight_slot_log.json", make_eight_slot("log")),
        ("eight_slot_linear.json", make_eight_slot("linear")),
    ]
    for fname, built in pairs:
        loaded = load_scenario(root / fname)
        assert validate_scenario(loaded) == []
        h0, _ = operator_cost(built, built.flat_prices())
        h1, _ = operator_cost(loaded, loaded.flat_prices())
        assert h0 == pytest.approx(h1, abs=1e-12)
        assert np.allclose(loaded.alpha, built.alpha)


def test_run_oracle_grid_solver(tmp_path):
    s = make_two_slot_linear(gamma=1.0, delta=1.0)
    path = tmp_path / "scenario.json"
    save_scenario(s, path)
    report = run(
        RunSpec(scenario_path=str(path), solver="oracle-grid", config={"step": 0.01})
    )
    assert report.objective == pytest.approx(-2.0, abs=1e-12)
