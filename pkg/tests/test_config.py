"""Strict JSON experiment configuration parsing."""

import json

import pytest

from fpforge.cli_harness.config import (ConfigError, config_to_json,
                                        parse_config, validate_config_dict)


def _base(**kw):
    d = {"experiment": "cross_gan", "seed": 1}
    d.update(kw)
    return d


def test_minimal_config_fills_defaults():
    cfg = validate_config_dict(_base())
    assert cfg.experiment == "cross_gan" and cfg.seed == 1
    assert cfg.dataset["side"] == 64
    assert cfg.extractor["lambda_adv"] == 1e-4
    assert cfg.perturb["alpha0"] == 5.0
    assert cfg.detector["lr"] == 1e-4
    assert cfg.detector["variant"] == "small"


def test_missing_required_keys():
    with pytest.raises(ConfigError, match="experiment"):
        validate_config_dict({"seed": 1})
    with pytest.raises(ConfigError, match="seed"):
        validate_config_dict({"experiment": "cross_gan"})


def test_unknown_key_rejected_with_path():
    with pytest.raises(ConfigError, match="detector.lrr"):
        validate_config_dict(_base(detector={"lrr": 1e-4}))
    with pytest.raises(ConfigError, match="bogus"):
        validate_config_dict(_base(bogus=1))


def test_type_mismatch_rejected_with_path():
    with pytest.raises(ConfigError, match="extractor.epochs"):
        validate_config_dict(_base(extractor={"epochs": "six"}))
    with pytest.raises(ConfigError, match="dataset.side"):
        validate_config_dict(_base(dataset={"side": 64.5}))
    with pytest.raises(ConfigError, match="detector.lr"):
        validate_config_dict(_base(detector={"lr": True}))


def test_unknown_experiment_kind():
    with pytest.raises(ConfigError, match="warp_speed"):
        validate_config_dict(_base(experiment="warp_speed"))


def test_negative_seed_rejected():
    with pytest.raises(ConfigError, match="seed"):
        validate_config_dict(_base(seed=-3))


def test_unknown_variant_rejected():
    with pytest.raises(ConfigError, match="variant"):
        validate_config_dict(_base(detector={"variant": "gigantic"}))


def test_bad_ablation_strategy():
    with pytest.raises(ConfigError, match="ablation_strategy"):
        validate_config_dict(_base(ablation_strategy="none"))


def test_bad_category_counts():
    with pytest.raises(ConfigError, match="category_counts"):
        validate_config_dict(_base(category_counts=[1, 0]))
    with pytest.raises(ConfigError, match="category_counts"):
        validate_config_dict(_base(category_counts=[99]))


def test_train_category_must_exist():
    with pytest.raises(ConfigError, match="train_category"):
        validate_config_dict(_base(train_category="volcano"))
    cfg = validate_config_dict(_base(train_category="meadow"))
    assert cfg.train_category == "meadow"


def test_dataset_invariants_surface_as_config_errors():
    with pytest.raises(ValueError):
        validate_config_dict(_base(dataset={"side": 48}))
    with pytest.raises(ValueError):
        validate_config_dict(_base(dataset={"seen_gan_ids": ["nogan"]}))


def test_parse_config_round_trip(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(_base(seed=7, detector={"epochs": 3})))
    cfg = parse_config(path)
    assert cfg.seed == 7
    assert cfg.detector["epochs"] == 3
    assert cfg.detector["lr"] == 1e-4  # default preserved alongside override


def test_parse_config_bad_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="JSON"):
        parse_config(path)


def test_parse_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config(tmp_path / "nope.json")


def test_parse_config_empty_file(tmp_path):
    path = tmp_path / "empty.json"
    path.write_text("")
    with pytest.raises(ConfigError, match="empty"):
        parse_config(path)


def test_canonical_excludes_out_and_cache():
    cfg = validate_config_dict(_base(out="/tmp/x", cache_dir="/tmp/c"))
    canon = cfg.to_canonical()
    assert "out" not in canon and "cache_dir" not in canon
    text = config_to_json(cfg)
    assert json.loads(text) == canon


def test_subconfig_builders():
    cfg = validate_config_dict(_base(seed=9))
    ds = cfg.dataset_config()
    assert ds.side == 64 and ds.seen_gan_ids == ("blockres2",)
    ec = cfg.extractor_config()
    assert ec.seed == 9 and ec.lambda_adv == 1e-4
    assert cfg.extractor_config(adv_enabled=False).adv_enabled is False
    pc = cfg.perturb_config("scaling")
    assert pc.strategy == "scaling" and pc.alpha0 == 5.0
    dc = cfg.detector_config()
    assert dc.seed == 9 and dc.variant == "small"
    assert cfg.detector_config(variant="larger").variant == "larger"
