"""End-to-end experiment harness checks at miniature scale.

Every run here uses a tiny dataset (32 px, a dozen images) and single-epoch
training so the full pipeline stays in the sub-second range per stage. The
shared module cache also exercises stage reuse across experiment kinds.
"""

import json
import os

import pytest

from fpforge import __version__
from fpforge.cli_harness import experiment as exp_mod
from fpforge.cli_harness.config import validate_config_dict
from fpforge.cli_harness.experiment import StageError, run_experiment

ARMS = ("none", "scaling", "mixup")


def _mini_raw(seed=7, experiment="cross_gan", **top):
    raw = {
        "experiment": experiment,
        "seed": seed,
        "dataset": {"side": 64, "n_train_real": 12, "n_train_fake": 12,
                    "n_test_real": 8, "n_test_fake_per_gan": 4},
        "extractor": {"epochs": 1, "batch_size": 8},
        "detector": {"epochs": 1, "batch_size": 8},
    }
    raw.update(top)
    return raw


def _run(workdir, name, **overrides):
    cfg = validate_config_dict(_mini_raw(
        out=str(workdir / name), cache_dir=str(workdir / "cache"), **overrides))
    return run_experiment(cfg)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("exp")


@pytest.fixture(scope="module")
def cross_gan_record(workdir):
    return _run(workdir, "xg")


def test_run_record_fields(cross_gan_record):
    rec = cross_gan_record
    assert len(rec.config_hash) == 16
    assert set(rec.config_hash) <= set("0123456789abcdef")
    assert rec.version == __version__
    # ISO-8601 UTC timestamps order lexicographically
    assert rec.started_at <= rec.finished_at
    for key in ("out", "cache", "dataset", "extractor", "report", "table"):
        assert key in rec.artifacts, key
    for arm in ARMS:
        assert f"detector_{arm}" in rec.artifacts


def test_cross_gan_report_structure(cross_gan_record):
    rep = cross_gan_record.report
    assert rep["experiment"] == "cross_gan"
    assert set(rep["arms"]) == set(ARMS)
    for arm in ARMS:
        sources = rep["arms"][arm]["sources"]
        assert set(sources) == {"blockres2", "sine8h", "checker16", "checker8", "checker4"}
        for row in sources.values():
            assert 0.0 <= row["acc"] <= 1.0
            assert 0.0 <= row["ap"] <= 1.0
            assert row["n_real"] == row["n_fake"] == 4
    summary = rep["summary"]
    assert set(summary["arms"]) == set(ARMS)
    for vals in summary["arms"].values():
        assert set(vals) == {"seen_acc", "seen_ap", "unseen_acc", "unseen_ap"}
    assert set(summary["deltas_vs_none"]) == {"scaling", "mixup"}


def test_cross_gan_mechanism_block(cross_gan_record):
    mech = cross_gan_record.report["mechanism"]
    assert mech["seen_gan"] == "blockres2"
    assert len(mech["characteristic_bin"]) == 2
    assert set(mech["psnr_median"]) == {"scaling", "mixup"}
    assert set(mech["spectral_rel_l2"]) == {"scaling", "mixup"}
    assert mech["peak_to_median_fake"] > 0
    assert mech["peak_to_median_real"] > 0


def test_output_files_written(workdir, cross_gan_record):
    out = workdir / "xg"
    assert (out / "report.json").is_file()
    assert (out / "run_record.json").is_file()
    table = (out / "table.txt").read_text(encoding="utf-8")
    for arm in ARMS:
        assert arm in table
    for fig in ("spectrum_real", "spectrum_seen_fake", "spectrum_scaling",
                "spectrum_mixup"):
        assert (out / "figures" / f"{fig}.pgm").is_file(), fig
    with open(out / "run_record.json", encoding="utf-8") as f:
        on_disk = json.load(f)
    assert on_disk["report"] == cross_gan_record.report
    assert on_disk["config_hash"] == cross_gan_record.config_hash


def test_report_json_is_canonical_bytes(workdir, cross_gan_record):
    raw = (workdir / "xg" / "report.json").read_bytes()
    parsed = json.loads(raw)
    redumped = json.dumps(parsed, sort_keys=True, separators=(",", ":"))
    assert raw.decode("utf-8") == redumped


def test_rerun_with_shared_cache_reproduces_bytes(workdir, cross_gan_record):
    _run(workdir, "xg2")
    a = (workdir / "xg" / "report.json").read_bytes()
    b = (workdir / "xg2" / "report.json").read_bytes()
    assert a == b


def test_rerun_with_fresh_cache_reproduces_bytes(workdir, tmp_path, cross_gan_record):
    cfg = validate_config_dict(_mini_raw(
        out=str(tmp_path / "out"), cache_dir=str(tmp_path / "cache")))
    run_experiment(cfg)
    a = (workdir / "xg" / "report.json").read_bytes()
    b = (tmp_path / "out" / "report.json").read_bytes()
    assert a == b


def test_different_seed_changes_report(workdir, cross_gan_record):
    _run(workdir, "xg-seed8", seed=8)
    a = (workdir / "xg" / "report.json").read_bytes()
    b = (workdir / "xg-seed8" / "report.json").read_bytes()
    assert a != b


def test_cache_reuse_skips_stage_rebuilds(workdir, cross_gan_record):
    cache = workdir / "cache"
    before = {p.name: p.stat().st_mtime for p in cache.iterdir()}
    _run(workdir, "xg3")
    after = {p.name: p.stat().st_mtime for p in cache.iterdir()}
    assert set(after) >= set(before)
    for name, mtime in before.items():
        assert after[name] == mtime, f"stage {name} was rebuilt"


def test_cross_category_run(workdir, cross_gan_record):
    rec = _run(workdir, "xc", experiment="cross_category")
    rep = rec.report
    assert rep["train_category"] == "meadow"
    for arm in ARMS:
        sources = rep["arms"][arm]["sources"]
        assert set(sources) == {"dune", "reef", "slate"}
        assert set(rep["summary"][arm]) == {"mean_acc", "mean_ap"}


def test_cross_category_honors_train_category(workdir, cross_gan_record):
    rec = _run(workdir, "xc2", experiment="cross_category", train_category="reef")
    rep = rec.report
    assert rep["train_category"] == "reef"
    assert set(rep["arms"]["none"]["sources"]) == {"meadow", "dune", "slate"}


def test_category_sweep_run(workdir, cross_gan_record):
    rec = _run(workdir, "sweep", experiment="category_sweep",
               category_counts=[1, 2])
    rows = rec.report["rows"]
    assert set(rows) == {f"{c}cat/{arm}" for c in (1, 2) for arm in ARMS}


def test_ablation_adv_run(workdir, cross_gan_record):
    rec = _run(workdir, "abl", experiment="ablation_adv")
    rep = rec.report
    assert set(rep["rows"]) == {"with_adv", "without_adv"}
    summary = rep["summary"]
    assert isinstance(summary["with_adv"]["disc_category_accuracy"], float)
    assert summary["without_adv"]["disc_category_accuracy"] is None


def test_ablation_detector_run(workdir, cross_gan_record):
    rec = _run(workdir, "abld", experiment="ablation_detector")
    rows = rec.report["rows"]
    assert set(rows) == {f"{v}/{arm}" for v in ("smaller", "small", "larger")
                         for arm in ARMS}


def test_stage_error_names_failing_stage(tmp_path, monkeypatch):
    def boom(*args, **kwargs):
        raise RuntimeError("boom")

    monkeypatch.setattr(exp_mod, "train_detector", boom)
    cfg = validate_config_dict(_mini_raw(
        out=str(tmp_path / "out"), cache_dir=str(tmp_path / "cache")))
    with pytest.raises(StageError, match="stage 'train-detector' failed: boom"):
        run_experiment(cfg)


def test_unknown_experiment_fails_in_plan_stage(workdir, cross_gan_record):
    cfg = validate_config_dict(_mini_raw(
        out=str(workdir / "bad"), cache_dir=str(workdir / "cache")))
    cfg.experiment = "warp_speed"
    with pytest.raises(StageError, match="stage 'plan' failed"):
        run_experiment(cfg)
