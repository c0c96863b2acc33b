import json

import numpy as np
import pandas as pd
import pytest

from app.logic.continuum import predicted_limit
from app.logic.db_utils import clean_nans, load_experiment_results
from app.logic.lattice import LatticeVector
from app.services.engine import (
    SCALING_COLUMNS,
    _map_epsilons,
    run_constraint_audit,
    run_counterexamples,
    run_experiment,
    run_flatnorm,
    run_scaling,
    summarize_scaling,
)
from app.services.experiment_config import load_experiment_config, parse_experiment_config


def _config(experiment="scaling", epsilons=(0.125, 0.0625), dislocations=None, **extra):
    if dislocations is None:
        dislocations = [{"b": [1, 0], "x": [0.0, 0.0]}]
    return parse_experiment_config({
        "experiment": experiment,
        "domain": {"type": "square", "half_width": 1.0},
        "epsilons": list(epsilons),
        "dislocations": dislocations,
        **extra,
    })


def test_map_epsilons_keeps_order_in_a_pool():
    assert _map_epsilons(lambda e: 2 * e, [1.0, 0.5, 0.25], threads=1) == [2.0, 1.0, 0.5]
    assert _map_epsilons(lambda e: 2 * e, [1.0, 0.5, 0.25], threads=2) == [2.0, 1.0, 0.5]


def test_scaling_rows():
    df = run_scaling(_config())
    assert list(df.columns[:len(SCALING_COLUMNS)]) == SCALING_COLUMNS
    assert list(df["epsilon"]) == [0.125, 0.0625]
    assert df["error"].isna().all()
    assert (df["F"] > 0).all()
    assert (df["F"] <= df["recovery_energy"] * (1 + 1e-8)).all()
    assert df["ms_ok"].all()
    assert np.allclose(df["predicted"], predicted_limit([LatticeVector(1, 0)]))
    assert (df["flat_error"] <= df["epsilon"]).all()
    assert np.allclose(df["tv"], 1.0)


def test_failed_epsilon_becomes_an_error_row():
    config = _config(epsilons=(0.125, 0.03125), dislocations=[{"b": [1, 0], "x": [0.95, 0.0]}])
    df = run_scaling(config)
    coarse = df[df["epsilon"] == 0.125].iloc[0]
    fine = df[df["epsilon"] == 0.03125].iloc[0]
    assert isinstance(coarse["error"], str) and coarse["error"]
    assert np.isnan(coarse["F"])
    assert pd.isna(fine["error"])
    assert fine["F"] > 0

    summary = summarize_scaling(df, config)
    assert summary["n_valid"] == 1
    assert "slope" not in summary


def test_scaling_summary():
    config = _config()
    summary = summarize_scaling(run_scaling(config), config)
    assert summary["n_valid"] == 2
    assert summary["predicted"] == pytest.approx(predicted_limit([LatticeVector(1, 0)]))
    for key in ("slope", "intercept", "slope_relative_error", "core_constants", "flat_monotone",
                "flat_final_over_eps"):
        assert key in summary
    assert len(summary["core_constants"]) == 2


def test_counterexamples():
    report = run_counterexamples(_config("counterexamples", epsilons=(0.125, 0.0625), dislocations=[]))
    assert report["epsilons"] == [0.125, 0.0625]
    assert report["all_energies_zero"]
    assert report["constrained_minima_positive"]
    for entry in report["entries"]:
        ms = entry["counter_ms"]
        assert ms["charged_triangles"] == ms["n_triangles"]
        assert not ms["ms_ok"]
        assert ms["tv"] == pytest.approx(np.sqrt(3.0) * ms["n_triangles"])
        assert entry["crack"]["charged_triangles"] == 0
        assert entry["dilation"]["condli_fraction"] == 0.0
        assert entry["dilation"]["constrained_min"] > 0
    assert report["counter_ms_tv_exponent"] == pytest.approx(-2.0, abs=0.2)
    assert report["counter_ms_flat_exponent"] < 0


def test_flatnorm_rows():
    df = run_flatnorm(_config("flatnorm", epsilons=(0.125, 0.0625)))
    assert df["error"].isna().all()
    errors = df["recovery_flat_error"].to_numpy()
    assert errors[1] < errors[0]
    assert (df["recovery_flat_error"] <= df["epsilon"]).all()
    assert (df["counter_ms_flat"] > 0).all()
    assert (df["counter_ms_flat"] < df["counter_ms_tv"]).all()


@pytest.mark.parametrize("b", [[1, 0], [0, 1], [-1, 1], [-1, 0], [0, -1], [1, -1]])
def test_constraint_audit(b):
    config = _config("constraint_audit", epsilons=(0.125,), dislocations=[{"b": b, "x": [0.0, 0.0]}])
    row = run_constraint_audit(config).iloc[0]
    assert pd.isna(row["error"])
    assert row["dislocation_free"] == row["n_triangles"] - 1
    # the cut slip is trace free on every triangle it crosses
    assert row["condli_fraction"] == 1.0
    assert row["condli_satisfied"] == row["dislocation_free"]


def test_run_experiment_writes_outputs_and_ledger(tmp_path):
    config = _config()
    out = tmp_path / "scaling.csv"
    db = tmp_path / "ledger.db"
    result = run_experiment(config, out_path=str(out), db_path=str(db))

    df = pd.read_csv(out)
    assert len(df) == 2
    with open(result["sidecar"]) as f:
        sidecar = json.load(f)
    assert "slope" in sidecar["summary"]
    assert load_experiment_config(result["sidecar"]) == config

    rows = load_experiment_results(result["run_id"], "scaling_row")
    assert [r["epsilon"] for r in rows] == [0.125, 0.0625]
    summary = load_experiment_results(result["run_id"], "scaling_summary")
    assert len(summary) == 1 and summary[0]["epsilon"] is None


def test_run_experiment_counterexamples_json(tmp_path):
    config = _config("counterexamples", epsilons=(0.25, 0.125), dislocations=[])
    result = run_experiment(config, out_path=str(tmp_path / "ce.json"))
    with open(result["output"]) as f:
        report = json.load(f)
    assert report["all_energies_zero"] is True
    assert result["run_id"] is None
    assert "entries" not in result["summary"]


def test_clean_nans():
    cleaned = clean_nans({"a": np.float64("nan"), "b": [np.int64(3), float("inf")], "c": np.arange(2)})
    assert cleaned == {"a": None, "b": [3, None], "c": [0, 1]}


@pytest.mark.slow
def test_scaling_sweep_reaches_the_predicted_slope():
    epsilons = tuple(2.0 ** -k for k in range(4, 9))
    config = _config(epsilons=epsilons, threads=3)
    df = run_scaling(config)
    assert df["error"].isna().all()
    summary = summarize_scaling(df, config)
    assert summary["n_valid"] == len(epsilons)
    assert summary["slope_relative_error"] <= 0.15
    assert summary["flat_monotone"]
    assert summary["flat_final_over_eps"] <= 2.0
    assert summary["korn_spread"] <= 2.0
    assert (df["F"] <= df["recovery_energy"] * (1 + 1e-8)).all()
