import csv
import json
import math

import numpy as np
import pytest

from pinnbench.domain import DomainSpec, GridSpec, NoiseSpec
from pinnbench.experiment import (DegenerateReference, ScenarioConfig,
                                  benchmark_suite, canonical_name, infer_field,
                                  relative_l2_error, run_scenario,
                                  RESULTS_COLUMNS)
from pinnbench.fieldio import read_field
from pinnbench.loss import SamplingPlan
from pinnbench.network import NetworkConfig, NetworkParams, load_checkpoint
from pinnbench.optimizer import AdamConfig, LbfgsConfig


def tiny_scenario(master_seed=123, iterations=15, optimizer="adam", **net_kwargs):
    return ScenarioConfig.from_master_seed(
        master_seed,
        grid=GridSpec(nx=26, ny=26, nt=50),
        network=NetworkConfig(hidden_layers=2, hidden_width=8, **net_kwargs),
        plan=SamplingPlan(n_collocation=20, n_bc_per_edge=8, n_ic_symbolic=16,
                          data_batch=64, ic_batch=64),
        adam=AdamConfig(lr=0.002, iterations=iterations),
        optimizer=optimizer,
        lbfgs=LbfgsConfig(max_iterations=3) if optimizer == "adam+lbfgs" else None,
    )


# --- relative L2 ------------------------------------------------------------

def test_rel_l2_identical_is_zero():
    f = np.random.default_rng(0).standard_normal((5, 5))
    assert relative_l2_error(f, f) == 0.0


def test_rel_l2_homogeneity():
    f = np.random.default_rng(1).standard_normal((4, 6)) + 3.0
    assert relative_l2_error(2 * f, f) == pytest.approx(1.0, rel=1e-12)


def test_rel_l2_zero_prediction():
    f = np.random.default_rng(2).standard_normal((3, 3)) + 1.0
    assert relative_l2_error(np.zeros_like(f), f) == pytest.approx(1.0, rel=1e-12)


def test_rel_l2_degenerate_reference():
    with pytest.raises(DegenerateReference):
        relative_l2_error(np.ones((2, 2)), np.zeros((2, 2)))


def test_rel_l2_shape_mismatch():
    with pytest.raises(ValueError):
        relative_l2_error(np.ones((2, 2)), np.ones((3, 2)))


# --- infer_field ------------------------------------------------------------

def test_infer_zero_theta_is_zero_field():
    cfg = NetworkConfig(hidden_layers=1, hidden_width=2)
    params = NetworkParams(cfg, np.zeros(cfg.param_count, dtype=np.float32))
    field, elapsed = infer_field(params, DomainSpec(), GridSpec(), 0.1)
    assert field.shape == (51, 51)
    assert np.all(field == 0.0)
    assert elapsed > 0


def test_infer_flags_extrapolation():
    cfg = NetworkConfig(hidden_layers=1, hidden_width=2)
    params = NetworkParams(cfg, np.zeros(cfg.param_count, dtype=np.float32))
    with pytest.warns(UserWarning, match="extrapolating"):
        infer_field(params, DomainSpec(), GridSpec(), 0.5)


# --- scenario runner --------------------------------------------------------

def test_canonical_name():
    assert canonical_name(NetworkConfig(hidden_layers=9, hidden_width=64),
                          "adam", 10000, 0.002) == "9L-64N/ADAM/10000/lr0.002"


def test_zero_iteration_scenario_deterministic(tmp_path):
    cfg = tiny_scenario(iterations=0)
    r1 = run_scenario(cfg, tmp_path / "a")
    r2 = run_scenario(cfg, tmp_path / "b")
    assert r1.rel_l2_error == r2.rel_l2_error
    assert r1.final_loss == r2.final_loss
    assert r1.ic_mse == r2.ic_mse


def test_scenario_metric_consistency(tmp_path):
    cfg = tiny_scenario()
    result = run_scenario(cfg, tmp_path)
    params, _ = load_checkpoint(result.checkpoint_path)
    clean_tf = read_field(tmp_path / f"field_{cfg.file_tag}_fdm_tfinal").single_level()
    pred, _ = infer_field(params, cfg.domain, cfg.grid, cfg.domain.t_final)
    assert relative_l2_error(pred, clean_tf) == result.rel_l2_error


def test_scenario_times_positive(tmp_path):
    r = run_scenario(tiny_scenario(), tmp_path)
    assert r.train_time > 0 and r.fdm_time > 0 and r.inference_time > 0


def test_scenario_artifacts_complete(tmp_path):
    cfg = tiny_scenario()
    result = run_scenario(cfg, tmp_path)
    for tag in ("clean_ic", "pinn_ic", "fdm_tfinal", "pinn_tfinal"):
        ff = read_field(tmp_path / f"field_{cfg.file_tag}_{tag}")
        assert ff.values.shape == (1, 26, 26)
    assert (tmp_path / f"trace_{cfg.file_tag}_adam.csv").exists()
    params, meta = load_checkpoint(result.checkpoint_path)
    assert meta["scenario"] == cfg.name


def test_scenario_loss_breakdown_csv(tmp_path):
    cfg = tiny_scenario()
    run_scenario(cfg, tmp_path)
    path = tmp_path / f"loss_{cfg.file_tag}_adam.csv"
    rows = list(csv.DictReader(path.open()))
    assert list(rows[0].keys()) == ["iter", "physics", "ic", "data", "total", "wall_ms"]
    assert len(rows) == cfg.adam.iterations
    first = rows[0]
    total = float(first["total"])
    parts = (float(first["physics"]), float(first["ic"]), float(first["data"]))
    assert total == pytest.approx(parts[0] + 500 * parts[1] + 10 * parts[2], rel=1e-5)


def test_scenario_two_stage_writes_both_traces(tmp_path):
    cfg = tiny_scenario(optimizer="adam+lbfgs")
    run_scenario(cfg, tmp_path)
    assert (tmp_path / f"trace_{cfg.file_tag}_adam.csv").exists()
    assert (tmp_path / f"trace_{cfg.file_tag}_lbfgs.csv").exists()


def test_scenario_rejects_unstable_grid(tmp_path):
    from pinnbench.domain import StabilityViolation
    cfg = tiny_scenario()
    cfg.grid = GridSpec(nx=26, ny=26, nt=2)
    with pytest.raises(StabilityViolation):
        run_scenario(cfg, tmp_path)


def test_resume_matches_straight_run(tmp_path):
    full = run_scenario(tiny_scenario(iterations=20), tmp_path / "full")
    first = run_scenario(tiny_scenario(iterations=12), tmp_path / "half")
    resumed = run_scenario(tiny_scenario(iterations=20), tmp_path / "resumed",
                           resume_from=first.checkpoint_path)
    assert resumed.final_loss == full.final_loss
    assert resumed.rel_l2_error == full.rel_l2_error
    # trace numbering continues where the checkpoint stopped
    rows = list(csv.DictReader(
        (tmp_path / "resumed" / f"trace_{tiny_scenario(iterations=20).file_tag}_adam.csv").open()))
    assert int(rows[0]["iter"]) == 13
    assert int(rows[-1]["iter"]) == 20


# --- suite ------------------------------------------------------------------

def test_suite_results_csv_columns(tmp_path):
    cfgs = [tiny_scenario(master_seed=1, iterations=5),
            tiny_scenario(master_seed=2, iterations=6)]
    results = benchmark_suite(cfgs, tmp_path)
    assert len(results) == 2
    with (tmp_path / "results.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == RESULTS_COLUMNS
    assert len(rows) == 3
    env = json.loads((tmp_path / "environment.json").read_text())
    assert "hardware" in env and "precision" in env


def test_suite_records_failures_and_continues(tmp_path):
    good = tiny_scenario(master_seed=3, iterations=5)
    bad = tiny_scenario(master_seed=4, iterations=5)
    bad.grid = GridSpec(nx=26, ny=26, nt=2)  # unstable
    bad.name = "bad-grid"
    results = benchmark_suite([bad, good], tmp_path)
    assert results[0].status.startswith("error:")
    assert math.isnan(results[0].rel_l2_error)
    assert results[1].status == "ok"


def test_suite_rejects_duplicates(tmp_path):
    cfg = tiny_scenario()
    with pytest.raises(ValueError, match="duplicate"):
        benchmark_suite([cfg, tiny_scenario()], tmp_path)


def test_suite_rejects_empty(tmp_path):
    with pytest.raises(ValueError):
        benchmark_suite([], tmp_path)
