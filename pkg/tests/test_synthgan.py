import json

import numpy as np
import pytest

from fpforge.synthgan import (CategoryProfile, Dataset, DatasetConfig,
                              GanProfile, SampleRecord, characteristic_bin,
                              default_categories, default_profiles,
                              embed_fingerprint, fingerprint_pattern, gen_real,
                              make_benchmark)


def _tiny_config(**kw):
    base = dict(side=64, n_train_real=8, n_train_fake=8, n_test_real=4,
                n_test_fake_per_gan=4)
    base.update(kw)
    return DatasetConfig(**base)


def test_gen_real_is_deterministic_and_bounded():
    cat = default_categories()[0]
    a = gen_real(cat, seed=7, side=32)
    b = gen_real(cat, seed=7, side=32)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (3, 32, 32)
    assert a.dtype == np.float32
    assert a.min() >= 0.0 and a.max() <= 1.0
    assert 0.2 <= a.mean() <= 0.8


def test_gen_real_varies_with_seed():
    cat = default_categories()[0]
    a = gen_real(cat, seed=1, side=32)
    b = gen_real(cat, seed=2, side=32)
    assert np.mean(a != b) > 0.9


def test_checkerboard_worked_example():
    # period 2, phase 0, amplitude a on a constant 0.5 image:
    # pixel (0,0) = 0.5 + a, pixel (0,1) = 0.5 - a
    a = 0.02
    profile = GanProfile(gan_id="c2", pattern="checkerboard", period_px=2,
                         phase=0.0, amplitude=a, orientation=0.0)
    img = np.full((3, 8, 8), 0.5, dtype=np.float32)
    out = embed_fingerprint(img, profile)
    assert out[0, 0, 0] == pytest.approx(0.5 + a, abs=1e-6)
    assert out[0, 0, 1] == pytest.approx(0.5 - a, abs=1e-6)
    assert out[0, 1, 0] == pytest.approx(0.5 - a, abs=1e-6)
    assert out[0, 1, 1] == pytest.approx(0.5 + a, abs=1e-6)


def test_fingerprint_pattern_is_zero_mean_and_same_for_channels():
    img = gen_real(default_categories()[1], seed=3, side=32)
    for profile in default_profiles():
        pat = fingerprint_pattern(profile, img)
        assert pat.shape == img.shape
        assert abs(pat.mean()) < 1e-9
        if profile.pattern != "block_upsample_residual":
            np.testing.assert_array_equal(pat[0], pat[1])
            np.testing.assert_array_equal(pat[0], pat[2])


def test_embed_clamps_to_unit_range():
    profile = default_profiles()[0]
    img = np.ones((3, 32, 32), dtype=np.float32)
    out = embed_fingerprint(img, profile)
    assert out.max() <= 1.0 and out.min() >= 0.0


def test_profile_validation():
    with pytest.raises(ValueError):
        GanProfile(gan_id="bad", pattern="nope", period_px=4, phase=0.0,
                   amplitude=0.02, orientation=0.0)
    with pytest.raises(ValueError):
        GanProfile(gan_id="bad", pattern="sine_grid", period_px=1, phase=0.0,
                   amplitude=0.02, orientation=0.0)
    with pytest.raises(ValueError):
        GanProfile(gan_id="bad", pattern="sine_grid", period_px=4, phase=0.0,
                   amplitude=0.5, orientation=0.0)
    with pytest.raises(ValueError):
        # odd checkerboard period cannot split into equal half-period blocks
        GanProfile(gan_id="bad", pattern="checkerboard", period_px=3, phase=0.0,
                   amplitude=0.02, orientation=0.0)


def test_characteristic_bins_disjoint_across_default_profiles():
    side = 64
    bins = [characteristic_bin(p, side) for p in default_profiles()]
    assert len(set(bins)) == len(bins)
    for u, v in bins:
        assert 0 <= u < side and 0 <= v < side
        assert (u, v) != (0, 0)


def test_dataset_config_validation():
    with pytest.raises(ValueError):
        _tiny_config(side=48)  # not a power of two
    with pytest.raises(ValueError):
        _tiny_config(seen_gan_ids=("ghost",))
    with pytest.raises(ValueError):
        _tiny_config(side=16)  # sine8h period 8 > 16/4


def test_make_benchmark_roundtrip(tmp_path):
    cfg = _tiny_config()
    ds = make_benchmark(cfg, master_seed=5, out_dir=tmp_path / "d")
    assert (tmp_path / "d" / "manifest.json").exists()
    assert (tmp_path / "d" / "data.f32").exists()

    reopened = Dataset(tmp_path / "d")
    assert len(reopened.records) == len(ds.records)
    np.testing.assert_array_equal(reopened.image(0), ds.image(0))

    n_gans = len(cfg.profiles)
    assert len(reopened.select(split="train", label="real")) == 8
    assert len(reopened.select(split="train", label="fake")) == 8
    assert len(reopened.select(split="test", label="real")) == 4
    assert len(reopened.select(split="test", label="fake")) == 4 * n_gans
    # train fakes come only from the seen GAN
    assert {r.gan_id for r in reopened.select(split="train", label="fake")} == \
        set(cfg.seen_gan_ids)
    # every profile contributes a test block
    assert {r.gan_id for r in reopened.select(split="test", label="fake")} == \
        {p.gan_id for p in cfg.profiles}


def test_make_benchmark_deterministic(tmp_path):
    cfg = _tiny_config()
    make_benchmark(cfg, master_seed=9, out_dir=tmp_path / "a")
    make_benchmark(cfg, master_seed=9, out_dir=tmp_path / "b")
    a = (tmp_path / "a" / "data.f32").read_bytes()
    b = (tmp_path / "b" / "data.f32").read_bytes()
    assert a == b
    assert (tmp_path / "a" / "manifest.json").read_bytes() == \
        (tmp_path / "b" / "manifest.json").read_bytes()


def test_make_benchmark_seed_changes_data(tmp_path):
    cfg = _tiny_config()
    make_benchmark(cfg, master_seed=1, out_dir=tmp_path / "a")
    make_benchmark(cfg, master_seed=2, out_dir=tmp_path / "b")
    assert (tmp_path / "a" / "data.f32").read_bytes() != \
        (tmp_path / "b" / "data.f32").read_bytes()


def test_dataset_stack_and_category_filter(tmp_path):
    ds = make_benchmark(_tiny_config(), master_seed=4, out_dir=tmp_path / "d")
    cats = {c.category_id for c in default_categories()}
    recs = ds.select(split="train", label="real",
                     category_id=next(iter(cats)))
    assert recs
    batch = ds.stack(recs)
    assert batch.shape == (len(recs), 3, 64, 64)
    assert batch.dtype == np.float32


def test_sample_record_json_roundtrip():
    r = SampleRecord(index=3, split="test", label="fake", category_id="dune",
                     gan_id="sine8h", seed=99, offset=36864)
    assert SampleRecord.from_json(r.to_json()) == r
    r2 = SampleRecord(index=3, split="test", label="fake", category_id="dune",
                      gan_id="sine8h", seed=99, offset=36864,
                      perturbation={"strategy": "scaling", "alpha": 2.0})
    d = r2.to_json()
    assert d["perturbation"]["alpha"] == 2.0
    assert SampleRecord.from_json(d) == r2


def test_dataset_rejects_bad_manifest(tmp_path):
    cfg = _tiny_config()
    make_benchmark(cfg, master_seed=5, out_dir=tmp_path / "d")
    path = tmp_path / "d" / "manifest.json"
    m = json.loads(path.read_text())
    m["version"] = 99
    path.write_text(json.dumps(m))
    with pytest.raises(ValueError):
        Dataset(tmp_path / "d")


def test_categories_have_distinct_ids_and_palettes():
    cats = default_categories()
    assert len({c.category_id for c in cats}) == len(cats) == 4
    assert len({c.palette for c in cats}) == len(cats)
    assert isinstance(cats[0], CategoryProfile)
