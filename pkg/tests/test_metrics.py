import json

import numpy as np
import pytest
from hypothesis import given

from aclspc.core import SeededRng
from aclspc.metrics import (MetricsReport, aggregate, chamfer_eval, evaluate_dataset, sample_metrics,
                            ucd, uhd, write_report_csv, write_report_json)
from aclspc.model import forward_complete, init_params

from oracles import chamfer_parts, nn_loop
from strategies import clouds


def test_chamfer_eval_examples():
    g = np.random.default_rng(0).normal(size=(9, 3))
    assert chamfer_eval(g, g) == (0.0, 0.0, 0.0)
    assert chamfer_eval([[0, 0, 0]], [[1, 0, 0], [0, 1, 0]]) == (1.0, 1.0, 2.0)


def test_ucd_uhd_examples():
    c = np.random.default_rng(1).normal(size=(9, 3))
    assert ucd(c[:4], c) == 0.0 and uhd(c[:4], c) == 0.0
    assert ucd([[0, 0, 0], [2, 0, 0]], [[0, 0, 0]]) == 1.0
    assert uhd([[0, 0, 0], [3, 0, 0]], [[0, 0, 0]]) == 3.0


@given(clouds(max_size=40), clouds(max_size=40))
def test_metrics_match_loop_oracle(a, b):
    p, c, cd = chamfer_eval(a, b)
    rp, rc, rcd = chamfer_parts(a, b)
    assert abs(p - rp) <= 1e-12 * (1 + rp) and abs(c - rc) <= 1e-12 * (1 + rc)
    d = nn_loop(a, b)[1]
    assert abs(ucd(a, b) - d.mean()) <= 1e-12 * (1 + d.mean())
    assert uhd(a, b) == d.max()


def _setup():
    params = init_params(16, SeededRng(0), encoder_widths=(8, 16), decoder_widths=(16,))
    g = np.random.default_rng(0)
    return params, g.normal(size=(10, 3)), g.normal(size=(30, 3))


def test_single_sample_dataset_equals_sample_metrics():
    params, partial, gt = _setup()
    agg, per = evaluate_dataset(params, [(partial, gt)])
    ref = sample_metrics(partial, forward_complete(params, partial), gt)
    for k in ("ucd", "uhd", "precision", "coverage", "cd"):
        assert getattr(agg, k) == getattr(ref, k) == getattr(per[0], k)


def test_duplicated_sample_same_aggregate():
    params, partial, gt = _setup()
    one, _ = evaluate_dataset(params, [(partial, gt)])
    two, _ = evaluate_dataset(params, [(partial, gt), (partial, gt)])
    for k in ("ucd", "uhd", "precision", "coverage", "cd"):
        assert getattr(one, k) == getattr(two, k)
    assert two.n_samples == 2


def test_missing_gt_only_reports_ucd_uhd():
    params, partial, _ = _setup()
    agg, _ = evaluate_dataset(params, [(partial, None)])
    assert agg.cd is None and agg.precision is None and agg.coverage is None
    assert agg.ucd > 0 and agg.n_with_gt == 0


def test_aggregate_mixes_gt_and_no_gt():
    r1 = MetricsReport(1.0, 2.0, 0.5, 0.5, 1.0, n_with_gt=1)
    r2 = MetricsReport(3.0, 4.0)
    agg = aggregate([r1, r2])
    assert (agg.ucd, agg.uhd, agg.cd, agg.n_with_gt) == (2.0, 3.0, 1.0, 1)
    with pytest.raises(ValueError):
        aggregate([])


def test_scale_multiplies_distances():
    params, partial, gt = _setup()
    a, _ = evaluate_dataset(params, [(partial, gt)])
    b, _ = evaluate_dataset(params, [(partial, gt)], scale=100.0)
    assert b.cd == pytest.approx(100 * a.cd, rel=1e-14)
    assert b.scale == 100.0


def test_reports_written(tmp_path):
    params, partial, gt = _setup()
    agg, per = evaluate_dataset(params, [(partial, gt), (partial, None)])
    write_report_csv(tmp_path / "r.csv", per, agg)
    write_report_json(tmp_path / "r.json", per, agg)
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "id,precision,coverage,cd,ucd,uhd,scale"
    assert len(lines) == 4 and lines[-1].startswith("mean,")
    doc = json.loads((tmp_path / "r.json").read_text())
    assert len(doc["samples"]) == 2 and doc["aggregate"]["cd"] == pytest.approx(agg.cd)
