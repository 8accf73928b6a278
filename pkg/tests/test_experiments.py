import json

import numpy as np
import pytest

from distauction.experiments import (
    EXPERIMENTS,
    ConfigError,
    ExperimentConfig,
    assigned_ranks,
    run_experiment,
    trial_seed,
)

SMALL = {
    "optimality_vs_eps": {"trials": 6, "n_users": 5, "eps_grid": [0.5, 0.05]},
    "iterations": {"trials": 6, "n_users": 5, "eps_grid": [0.5, 0.1]},
    "truncation_outage": {"trials": 6, "n_grid": [8, 16]},
    "rank_distribution": {"trials": 4, "n_users": 50, "tolerance": 1.0},
    "mezard_parisi": {"trials": 4, "n_grid": [5, 20], "tolerance": 10.0},
    "greedy_vs_bounds": {"trials": 6, "n_users": 4, "snr_grid": [0.0, 30.0]},
}


def test_trial_seed_is_stable():
    assert trial_seed(1, "x", 0) == trial_seed(1, "x", 0)
    assert len({trial_seed(1, "x", i) for i in range(100)}) == 100
    assert trial_seed(1, "x", 0) != trial_seed(2, "x", 0) != trial_seed(1, "y", 0)


@pytest.mark.parametrize("name", sorted(EXPERIMENTS))
def test_runs_are_byte_reproducible(name, tmp_path):
    cfg = ExperimentConfig.for_experiment(name, **SMALL[name])
    a = run_experiment(cfg).write(tmp_path / "a")
    b = run_experiment(cfg).write(tmp_path / "b")
    for f in ("config.json", "trials.csv", "summary.json"):
        assert (a / f).read_bytes() == (b / f).read_bytes()
    assert cfg.config_hash() in (a / "trials.csv").read_text().splitlines()[0]


def test_parallel_matches_sequential():
    seq = run_experiment(ExperimentConfig.for_experiment("optimality_vs_eps", **SMALL["optimality_vs_eps"]))
    par = run_experiment(ExperimentConfig.for_experiment("optimality_vs_eps", jobs=2, **SMALL["optimality_vs_eps"]))
    assert seq.trials_csv() == par.trials_csv()


def test_overwrite_refused_for_other_config(tmp_path):
    cfg = ExperimentConfig.for_experiment("mezard_parisi", **SMALL["mezard_parisi"])
    run_experiment(cfg).write(tmp_path)
    run_experiment(cfg).write(tmp_path)  # same config rewrites in place
    other = ExperimentConfig.for_experiment("mezard_parisi", **{**SMALL["mezard_parisi"], "trials": 5})
    with pytest.raises(ConfigError, match="different config"):
        run_experiment(other).write(tmp_path)
    run_experiment(other).write(tmp_path, force=True)
    assert json.loads((tmp_path / "summary.json").read_text())["config"]["trials"] == 5


@pytest.mark.parametrize("bad", [
    {"trials": 0}, {"distribution": "cauchy"}, {"objective": "median"}, {"eps_grid": [0.1, -1]},
])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.for_experiment("iterations", **bad)


def test_config_from_dict():
    cfg = ExperimentConfig.from_dict({"experiment": "iterations", "trials": 3})
    assert cfg.trials == 3 and cfg.eps_grid == [0.5, 0.2, 0.1, 0.05, 0.02]
    with pytest.raises(ConfigError, match="unknown config keys"):
        ExperimentConfig.from_dict({"experiment": "iterations", "trails": 3})
    with pytest.raises(ConfigError, match="unknown experiment"):
        ExperimentConfig.from_dict({"experiment": "nope"})


def test_hard_checks_pass_on_small_runs():
    for name, kw in SMALL.items():
        assert run_experiment(ExperimentConfig.for_experiment(name, **kw)).ok, name


def test_assigned_ranks():
    X = np.array([[3.0, 1.0, 2.0], [1.0, 2.0, 3.0]])
    assert assigned_ranks(X, np.array([1, 2]), "min").tolist() == [1, 3]
    assert assigned_ranks(X, np.array([1, 2]), "max").tolist() == [3, 1]
