"""Command line behavior: exit codes, artifacts, and error reporting."""

import json
import os

import numpy as np
import pytest

from fpforge.cli_harness.main import build_parser, main
from fpforge.synthgan import Dataset


def _mini_config(tmp_path, **kw):
    raw = {
        "experiment": "cross_gan",
        "seed": 3,
        "dataset": {"side": 64, "n_train_real": 12, "n_train_fake": 12,
                    "n_test_real": 8, "n_test_fake_per_gan": 4},
        "extractor": {"epochs": 1, "batch_size": 8},
        "detector": {"epochs": 1, "batch_size": 8},
    }
    raw.update(kw)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(raw))
    return str(path)


@pytest.fixture(scope="module")
def cli_env(tmp_path_factory):
    """Mini dataset + extractor shared across CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    cfg = _mini_config(root)
    data = str(root / "ds")
    rc = main(["gen-data", "--config", cfg, "--out", data])
    assert rc == 0
    ex = str(root / "ex")
    rc = main(["train-extractor", "--config", cfg, "--data", data, "--out", ex])
    assert rc == 0
    return {"root": root, "cfg": cfg, "data": data,
            "extractor": os.path.join(ex, "extractor.fpck")}


def test_no_command_prints_help_and_fails():
    assert main([]) == 1


def test_unknown_command_is_usage_error():
    assert main(["transmogrify"]) == 1


def test_parser_collects_subcommands():
    parser = build_parser()
    args = parser.parse_args(["gen-data", "--seed", "7"])
    assert args.command == "gen-data" and args.seed == 7


def test_gen_data_writes_manifest(cli_env):
    ds = Dataset(cli_env["data"])
    assert len(ds.records) > 0
    assert os.path.exists(os.path.join(cli_env["data"], "data.f32"))


def test_gen_data_bad_config_exit_1(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"experiment": "cross_gan"}))  # missing seed
    assert main(["gen-data", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1


def test_train_extractor_artifacts(cli_env):
    exdir = os.path.dirname(cli_env["extractor"])
    assert os.path.exists(os.path.join(exdir, "history.csv"))
    stats = json.loads(open(os.path.join(exdir, "stats.json")).read())
    assert "recon_psnr_test_reals" in stats
    head = open(os.path.join(exdir, "history.csv")).readline().strip()
    assert head == "epoch,rec_loss,adv_loss"


def test_train_detector_requires_extractor_for_aug_arm(cli_env, tmp_path):
    rc = main(["train-detector", "--config", cli_env["cfg"], "--data",
               cli_env["data"], "--arm", "mixup", "--out", str(tmp_path / "d")])
    assert rc == 1


def test_detector_train_eval_cycle(cli_env, tmp_path):
    det = str(tmp_path / "det")
    rc = main(["train-detector", "--config", cli_env["cfg"], "--data",
               cli_env["data"], "--arm", "none", "--out", det])
    assert rc == 0
    assert os.path.exists(os.path.join(det, "detector.fpck"))
    meta = json.loads(open(os.path.join(det, "meta.json")).read())
    assert meta["arm"] == "none"

    ev = str(tmp_path / "ev")
    rc = main(["evaluate", "--config", cli_env["cfg"], "--data", cli_env["data"],
               "--detector", det, "--out", ev])
    assert rc == 0
    rep = json.loads(open(os.path.join(ev, "report.json")).read())
    assert "eval" in rep and "table" in rep
    assert os.path.exists(os.path.join(ev, "table.txt"))


def test_perturb_writes_augmented_dataset(cli_env, tmp_path):
    out = str(tmp_path / "aug")
    rc = main(["perturb", "--config", cli_env["cfg"], "--data", cli_env["data"],
               "--extractor", cli_env["extractor"], "--strategy", "mixup",
               "--out", out])
    assert rc == 0
    aug = Dataset(out)
    orig = Dataset(cli_env["data"])
    assert len(aug.records) == len(orig.records)
    perturbed = [r for r in aug.records if r.perturbation is not None]
    fakes = [r for r in aug.records if r.label == "fake"]
    assert perturbed and len(perturbed) == len(fakes)
    applied = [r for r in perturbed if r.perturbation.get("applied")]
    assert applied
    for r in applied:
        assert r.perturbation["strategy"] == "mixup"
        for p in r.perturbation["partners"]:
            assert orig.records[p].label == "fake"
    # real images are bit-identical in the copy
    for r in orig.records:
        if r.label == "real":
            np.testing.assert_array_equal(aug.image(r.index), orig.image(r.index))


def test_spectrum_exports(cli_env, tmp_path):
    out = str(tmp_path / "spec")
    rc = main(["spectrum", "--config", cli_env["cfg"], "--data", cli_env["data"],
               "--split", "test", "--label", "fake", "--gan", "blockres2",
               "--out", out])
    assert rc == 0
    assert os.path.exists(os.path.join(out, "spectrum.pgm"))
    assert os.path.exists(os.path.join(out, "spectrum.csv"))


def test_spectrum_no_match_exit_1(cli_env, tmp_path):
    rc = main(["spectrum", "--config", cli_env["cfg"], "--data", cli_env["data"],
               "--gan", "missing_gan", "--out", str(tmp_path / "s")])
    assert rc == 1


def test_evaluate_missing_detector_dir_exit_2(cli_env, tmp_path):
    rc = main(["evaluate", "--config", cli_env["cfg"], "--data", cli_env["data"],
               "--detector", str(tmp_path / "nothere"), "--out", str(tmp_path / "e")])
    assert rc == 2


def test_seed_override_changes_dataset(cli_env, tmp_path):
    out_a = str(tmp_path / "a")
    out_b = str(tmp_path / "b")
    assert main(["gen-data", "--config", cli_env["cfg"], "--seed", "3",
                 "--out", out_a]) == 0
    assert main(["gen-data", "--config", cli_env["cfg"], "--seed", "4",
                 "--out", out_b]) == 0
    blob_a = open(os.path.join(out_a, "data.f32"), "rb").read()
    blob_b = open(os.path.join(out_b, "data.f32"), "rb").read()
    assert blob_a != blob_b
    # same seed reproduces the original dataset bytes exactly
    orig = open(os.path.join(cli_env["data"], "data.f32"), "rb").read()
    assert blob_a == orig
