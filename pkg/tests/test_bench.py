import json

import numpy as np
import pytest

from conftest import random_ensemble
from esv.bench import (
    CSV_HEADER,
    BenchScenario,
    exact_truth,
    export_report,
    generate_scenario_models,
    load_scenario,
    make_scenario,
    minimum_budget,
    orderings_for_budget,
    random_tree,
    run_convergence,
)
from esv.errors import DomainError
from esv.estimators import exact_shapley
from esv.masking import SetFunctionCache
from esv.models import model_to_dict


def _split_features(model):
    return {int(f) for t in model.trees for f in t.feature if f >= 0}


def test_dense10_uses_all_features():
    for seed in range(5):
        m = generate_scenario_models("dense10", seed)
        assert _split_features(m) == set(range(10)) and m.n_features == 10
        assert m.trees[0].n_nodes == 127


def test_sparse_uses_three_features():
    for seed in range(5):
        m = generate_scenario_models("sparse3of100", seed)
        assert _split_features(m) == {0, 1, 2} and m.n_features == 100
        assert m.trees[0].n_nodes == 31


def test_generation_deterministic():
    a = json.dumps(model_to_dict(generate_scenario_models("dense10", 7)))
    b = json.dumps(model_to_dict(generate_scenario_models("dense10", 7)))
    c = json.dumps(model_to_dict(generate_scenario_models("dense10", 8)))
    assert a == b and a != c
    with pytest.raises(DomainError):
        generate_scenario_models("dense11", 0)


def test_scenario_validation():
    sc = make_scenario("dense10")
    with pytest.raises(DomainError):
        BenchScenario("x", sc.model, sc.x, sc.background, (0,), budgets=(64, 32))
    with pytest.raises(DomainError):
        BenchScenario("x", sc.model, sc.x, sc.background, (0,), replicates=1)
    with pytest.raises(DomainError):
        BenchScenario("x", sc.model, sc.x, sc.background, (10,))


def test_grouped_truth_matches_direct_enumeration():
    rng = np.random.default_rng(11)
    model = random_tree(rng, 4, [0, 3, 5], 24)
    x, bg = rng.normal(size=24), rng.normal(size=(6, 24))
    sc = BenchScenario("s", model, x, bg, (0, 3, 7), budgets=(64,), replicates=2)
    truth = exact_truth(sc)
    small = random_tree(np.random.default_rng(11), 4, [0, 3, 5], 12)
    direct = exact_shapley(SetFunctionCache(small, x[:12], bg[:, :12])).phi
    assert truth[7] == 0.0
    np.testing.assert_allclose([truth[0], truth[3]], direct[[0, 3]], atol=1e-12)


def test_budget_rules():
    assert minimum_budget("permutation", 10) == 11
    assert minimum_budget("lime", 100) == 103
    assert orderings_for_budget(32, 10) == 3
    assert orderings_for_budget(5, 1) == 1
    with pytest.raises(DomainError):
        minimum_budget("gradient", 3)


def _small_scenario(**kw):
    rng = np.random.default_rng(2)
    model = random_ensemble(rng, 4)
    args = dict(budgets=(8, 16, 64), replicates=12, seed=5)
    args.update(kw)
    return BenchScenario("small", model, rng.normal(size=4), rng.normal(size=(5, 4)), (0, 1, 2), **args)


def test_full_enumeration_has_no_spread():
    sc = _small_scenario()
    report = run_convergence(sc, threads=1)
    for f in sc.tracked:
        k = report.cell("kernel-lasso", f, 64)
        p = report.cell("permutation", f, 64)
        for c in (k, p):
            assert c.p10 == pytest.approx(c.p90, abs=1e-12)
            assert abs(c.mean - c.truth) <= 1e-6


def test_band_shrinkage_and_invariants():
    sc = _small_scenario()
    report = run_convergence(sc, threads=1)
    for est in ("kernel-lasso", "permutation"):
        for f in sc.tracked:
            cells = [report.cell(est, f, b) for b in sc.budgets if report.cell(est, f, b)]
            assert cells[-1].p90 - cells[-1].p10 <= cells[0].p90 - cells[0].p10
    assert all(c.p10 <= c.p90 for c in report.cells)
    assert all(c.replicates == 12 for c in report.cells)


def test_skips_below_minimum():
    sc = _small_scenario(budgets=(4, 64))
    report = run_convergence(sc, threads=1)
    skipped = {(e, b) for e, b, _ in report.skipped}
    assert ("permutation", 4) in skipped and ("lime", 4) in skipped
    assert report.cell("permutation", 0, 4) is None
    assert report.cell("kernel-lasso", 0, 4) is not None


def test_threads_do_not_change_report():
    sc = _small_scenario()
    assert run_convergence(sc, threads=1).to_csv() == run_convergence(sc, threads=3).to_csv()


def test_export(tmp_path):
    sc = make_scenario("dense10", fast=True)
    sc.replicates = 3
    report = run_convergence(sc, threads=1)
    files = export_report(report, tmp_path / "a")
    export_report(report, tmp_path / "b")
    csv = (tmp_path / "a" / "report.csv").read_text()
    lines = csv.splitlines()
    assert lines[0] == CSV_HEADER == "estimator,feature,budget,mean,p10,p90,truth"
    assert len(lines) - 1 == len(report.cells)
    assert csv == (tmp_path / "b" / "report.csv").read_text()
    assert sorted(p.rsplit("/", 1)[-1] for p in files) == ["feature_0.svg", "feature_1.svg",
                                                         "feature_2.svg", "report.csv"]
    import xml.etree.ElementTree as ET

    root = ET.parse(tmp_path / "a" / "feature_0.svg").getroot()
    bands = [p for p in root.iter("{http://www.w3.org/2000/svg}polygon")]
    assert len(bands) == 3


def test_load_scenario_files(tmp_path):
    p = tmp_path / "s.json"
    p.write_text('{"scenario": "sparse3of100", "seed": 3, "replicates": 4, "budgets": [128, 256]}')
    sc = load_scenario(p)
    assert sc.name == "sparse3of100" and sc.replicates == 4 and sc.budgets == (128, 256)
    assert sc.tracked == (0, 1, 50) and sc.seed == 3

    model = {"kind": "linear", "n_features": 3, "weights": [1, 2, 3], "intercept": 0}
    (tmp_path / "m.json").write_text(json.dumps(model))
    p.write_text(json.dumps({"model": "m.json", "instance": [1, 1, 1], "background": [[0, 0, 0]],
                             "tracked": [0, 2], "budgets": [4, 8], "replicates": 3}))
    sc = load_scenario(p)
    assert sc.name == "s" and sc.M == 3
    report = run_convergence(sc, threads=1)
    assert report.truth == {0: 1.0, 2: 3.0}
    assert report.cell("kernel-lasso", 2, 8).mean == pytest.approx(3.0)
