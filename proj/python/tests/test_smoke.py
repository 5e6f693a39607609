import math

import pytest

import biasbench


def test_hcic_worked_example():
    r = biasbench.compute_hcic([0, 0, 0, 1, 1, 0, 0, 2, 4])
    assert r["hcic"] == pytest.approx(0.1)
    assert r["n_scores"] == 9


def test_errors_carry_codes():
    with pytest.raises(biasbench.Error) as info:
        biasbench.compute_hcic([9] * 9)
    assert info.value.code == "out_of_range"
    with pytest.raises(biasbench.Error) as info:
        biasbench.normalize_config({"bogus": 1})
    assert info.value.code == "schema"


def test_cosine_and_rebin():
    assert biasbench.cosine_similarity([1, 1], [1, 0]) == pytest.approx(1 / math.sqrt(2))
    assert biasbench.rebin_attribute(1.7) == 2


def test_curve_counts():
    pts = biasbench.fnmr_fmr([0.9, 0.7, 0.4, 0.5, 0.3], [True, True, True, False, False], [0.6])
    assert pts[0]["fnmr"] == pytest.approx(1 / 3)
    assert pts[0]["fmr"] == 0.0


def test_maxmin_toy():
    mesh = {s: [[float(s)]] for s in (0, 1, 5, 6)}
    chosen, dists = biasbench.maxmin_filter([0, 1, 5, 6], mesh, 3)
    assert chosen == [0, 6, 1]
    assert dists == [None, 6.0, 1.0]


def test_world():
    w = biasbench.World(3)
    z = w.sample_latents(2, stream=1)
    assert len(z) == 2 and len(z[0]) == w.dim
    assert w.sample_latents(2, stream=1) == z
    attrs = w.attributes([0.0] * w.dim)
    assert attrs["age"] == pytest.approx(0.5)
    assert attrs["group"] in {"WM", "WF", "BM", "BF", "AM", "AF"}


def test_config_defaults_round_trip():
    cfg = biasbench.default_config()
    assert biasbench.normalize_config(cfg) == cfg
    assert biasbench.normalize_config({}) == cfg


def test_small_pipeline(tmp_path):
    cfg = {
        "out": str(tmp_path),
        "sample": {"training_count": 1500, "candidate_seeds": 12},
        "curate": {"screen_keep": 8, "final_seeds": 4},
        "pairs": {"n_other": 2},
        "analyze": {"bootstrap_resamples": 20},
    }
    first = biasbench.run_pipeline(cfg)
    assert [o["stage"] for o in first][0] == "world"
    assert not any(o["cached"] for o in first)
    assert (tmp_path / "report" / "summary.json").exists()
    assert all(o["cached"] for o in biasbench.run_pipeline(cfg))
    with pytest.raises(biasbench.Error):
        biasbench.run_pipeline(dict(cfg, out=str(tmp_path / "empty")), "report")
