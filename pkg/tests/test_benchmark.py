"""Benchmark grid plumbing on a fast closed-form configuration.

Accuracy claims about the estimators live in the acceptance suite; here we
only exercise aggregation, determinism, failure capture, and artifact output,
so everything runs on the tiny linear toy in a couple of seconds.
"""

import json

import numpy as np
import pytest

from orthocmr.benchmark import (
    METHOD_KINDS,
    BenchmarkReport,
    benchmark,
    make_dataset,
    reports_to_csv,
    run_cell,
    validate_method,
    write_benchmark_artifacts,
)
from orthocmr.config import ConfigError

RIDGE_S = {"kind": "ridge-on-basis", "basis": {"kind": "polynomial", "degree": 1}}
GAUSS_D = {"kind": "gaussian-ridge", "basis": {"kind": "polynomial", "degree": 1}, "antithetic": True}
LINEAR = {"arch": "linear-in-basis"}

DML = {
    "name": "dml",
    "kind": "dml-cmr",
    "s": RIDGE_S,
    "density": GAUSS_D,
    "structural": LINEAR,
    "fit": {"mc_draws": 4, "solver": "closed-form"},
}
NAIVE = {
    "name": "naive",
    "kind": "naive",
    "density": GAUSS_D,
    "structural": LINEAR,
    "fit": {"mc_draws": 1, "solver": "closed-form"},
}
TOY = {"generator": "linear-toy", "params": {}}


@pytest.fixture(scope="module")
def toy_reports():
    return benchmark([DML, NAIVE], TOY, n_grid=[200, 400], seeds=3, cfg={"k_folds": 2}, seed=0)


def test_grid_shape_and_percentile_ordering(toy_reports):
    assert len(toy_reports) == 4  # 2 methods x 2 sample sizes
    assert {(r.method, r.n) for r in toy_reports} == {
        ("dml", 200), ("dml", 400), ("naive", 200), ("naive", 400),
    }
    for r in toy_reports:
        assert len(r.mse) == len(r.seeds) == 3
        assert r.q25 <= r.median <= r.q75
        assert not r.failures
        assert r.runtime_s > 0
        assert len(r.config_hash) == 12


def test_standardised_and_original_errors_both_reported(toy_reports):
    for r in toy_reports:
        assert len(r.mse_standardised) == len(r.mse)
        assert all(v >= 0 for v in r.mse_standardised)


def test_rerun_is_bit_identical(toy_reports):
    again = benchmark([DML, NAIVE], TOY, n_grid=[200, 400], seeds=3, cfg={"k_folds": 2}, seed=0)
    assert reports_to_csv(again) == reports_to_csv(toy_reports)
    assert [r.config_hash for r in again] == [r.config_hash for r in toy_reports]


def test_duplicate_seeds_duplicate_their_cells():
    reports = benchmark([DML], TOY, n_grid=[200], seeds=[5, 5, 9], cfg={"k_folds": 2}, seed=0)
    (r,) = reports
    assert r.seeds == [5, 5, 9]
    assert r.mse[0] == r.mse[1]
    assert r.mse[0] != r.mse[2]


def test_different_run_seed_changes_the_numbers(toy_reports):
    other = benchmark([DML], TOY, n_grid=[200], seeds=3, cfg={"k_folds": 2}, seed=1)
    base = next(r for r in toy_reports if (r.method, r.n) == ("dml", 200))
    assert other[0].mse != base.mse


def test_run_hash_override_lands_in_reports():
    reports = benchmark(
        [DML], TOY, n_grid=[200], seeds=1, cfg={"k_folds": 2}, seed=0, run_hash="feedc0ffee12"
    )
    assert reports[0].config_hash == "feedc0ffee12"


def test_csv_layout(toy_reports):
    text = reports_to_csv(toy_reports)
    lines = text.splitlines()
    assert lines[0] == "method,n,seed,mse"
    assert len(lines) == 1 + 4 * 3
    method, n, seed, mse = lines[1].split(",")
    assert method == "dml" and n == "200" and seed == "0"
    assert float(mse) >= 0


# ---------------------------------------------------------------------------
# validation


def test_method_kinds_are_the_documented_three():
    assert METHOD_KINDS == ("dml-cmr", "naive", "ce-dml-cmr")


@pytest.mark.parametrize(
    "broken,field",
    [
        ({**DML, "name": ""}, "methods[0].name"),
        ({**DML, "kind": "naive-cmr"}, "methods[0].kind"),
        ({k: v for k, v in DML.items() if k != "density"}, "methods[0].density"),
        ({k: v for k, v in DML.items() if k != "s"}, "methods[0].s"),
        ({**DML, "fit": [1, 2]}, "methods[0].fit"),
    ],
)
def test_validate_method_names_the_offending_field(broken, field):
    with pytest.raises(ConfigError) as err:
        validate_method(broken, "methods[0]")
    assert field in str(err.value)


def test_naive_methods_do_not_need_a_regression_stage():
    validate_method(NAIVE)  # no "s" key


def test_duplicate_method_names_rejected():
    with pytest.raises(ConfigError, match="duplicate method names"):
        benchmark([DML, {**NAIVE, "name": "dml"}], TOY, n_grid=[200], seeds=1)


@pytest.mark.parametrize(
    "kwargs,field",
    [
        (dict(methods=[], dataset=TOY, n_grid=[200]), "methods"),
        (dict(methods=[DML], dataset={}, n_grid=[200]), "dataset.generator"),
        (dict(methods=[DML], dataset=TOY, n_grid=[]), "n_grid"),
        (dict(methods=[DML], dataset=TOY, n_grid=[200], seeds=[]), "seeds"),
    ],
)
def test_benchmark_argument_validation(kwargs, field):
    with pytest.raises(ConfigError) as err:
        benchmark(**kwargs)
    assert field in str(err.value)


def test_make_dataset_rejects_unknown_generator_and_params():
    with pytest.raises(ConfigError, match="unknown generator"):
        make_dataset("toy-linear", {}, 100, 0)
    with pytest.raises(ConfigError, match="dataset.params"):
        make_dataset("linear-toy", {"thetaO": 2.0}, 100, 0)


# ---------------------------------------------------------------------------
# failure capture


def test_failed_cells_are_recorded_not_raised():
    # closed-form solver cannot drive a net, so every cell fails
    bad = {**DML, "name": "bad", "structural": {"arch": "feedforward-net", "hidden": [4]}}
    reports = benchmark([bad], TOY, n_grid=[200], seeds=2, cfg={"k_folds": 2}, seed=0)
    (r,) = reports
    assert r.mse == [] and r.seeds == []
    assert len(r.failures) == 2
    assert {f["seed"] for f in r.failures} == {0, 1}
    assert all("closed-form solver" in f["error"] for f in r.failures)
    assert np.isnan(r.median)


def test_run_cell_error_payload():
    bad = {**DML, "structural": {"arch": "feedforward-net", "hidden": [4]}}
    out = run_cell(bad, "linear-toy", {}, 100, cell_seed=3, base_fit={"k_folds": 2}, run_seed=0)
    assert set(out) == {"seed", "error", "runtime_s"}
    assert out["seed"] == 3 and "FitError" in out["error"]


def test_report_percentile_and_sign_validation():
    kwargs = dict(
        method="m", generator="linear-toy", params={}, n=100, seeds=[0], runtime_s=1.0,
        config_hash="abc123abc123",
    )
    with pytest.raises(ValueError, match="percentiles out of order"):
        BenchmarkReport(mse=[1.0], median=0.5, q25=0.8, q75=0.9, **kwargs)
    with pytest.raises(ValueError, match="nonnegative"):
        BenchmarkReport(mse=[-1.0], median=0.5, q25=0.4, q75=0.9, **kwargs)


# ---------------------------------------------------------------------------
# artifacts


def test_artifacts_on_disk(tmp_path, toy_reports):
    paths = write_benchmark_artifacts(toy_reports, tmp_path, plot=True)
    run_hash = toy_reports[0].config_hash
    assert paths["json"].endswith(f"benchmark-{run_hash}.json")
    payload = json.loads((tmp_path / f"benchmark-{run_hash}.json").read_text())
    assert len(payload) == 4
    assert payload[0]["units_note"].startswith("mse is in original outcome units")
    assert (tmp_path / f"benchmark-{run_hash}.csv").read_text() == reports_to_csv(toy_reports)
    svg = (tmp_path / f"benchmark-{run_hash}.svg").read_text()
    assert "<svg" in svg[:400]
    # atomic writes leave no temp droppings behind
    leftovers = [p for p in tmp_path.iterdir() if ".tmp" in p.name]
    assert leftovers == []
