"""Deterministic synthetic benchmark: procedural real images plus fakes built
by embedding architecture-specific fingerprint patterns.

Reals are low-pass filtered noise over a category palette with smooth blobs
and a little per-image sensor noise. Fakes add a zero-mean periodic or
upsampling-residual pattern, standing in for distinct generator families.
Everything is a pure function of (config, master seed): per-sample generators
are seeded from (master seed, split, index), so generation order never
matters.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .spectrum import fft2d, ifft2d

PATTERNS = ("checkerboard", "sine_grid", "block_upsample_residual")


@dataclass(frozen=True)
class GanProfile:
    gan_id: str
    pattern: str
    period_px: int = 8
    phase: float = 0.0
    amplitude: float = 0.02
    orientation: float = 0.0

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise ValueError(f"unknown pattern {self.pattern!r}, expected one of {PATTERNS}")
        if self.period_px < 2:
            raise ValueError(f"period_px must be >= 2, got {self.period_px}")
        if not (0.0 < self.amplitude <= 0.1):
            raise ValueError(f"amplitude must lie in (0, 0.1], got {self.amplitude}")
        if self.pattern == "checkerboard" and self.period_px % 2 != 0:
            raise ValueError("checkerboard period_px must be even (two blocks per cycle)")


@dataclass(frozen=True)
class CategoryProfile:
    category_id: str
    lowpass_cutoff: float
    palette: tuple
    blob_count: int = 6
    noise_scale: float = 0.12
    sensor_noise_max: float = 0.02

    def __post_init__(self):
        if self.lowpass_cutoff <= 0:
            raise ValueError("lowpass_cutoff must be positive")
        if len(self.palette) != 3:
            raise ValueError("palette must have 3 channels")


def default_categories() -> tuple:
    return (
        CategoryProfile("meadow", lowpass_cutoff=3.0, palette=(0.42, 0.56, 0.40), blob_count=5),
        CategoryProfile("dune", lowpass_cutoff=4.0, palette=(0.60, 0.52, 0.38), blob_count=7),
        CategoryProfile("reef", lowpass_cutoff=5.0, palette=(0.38, 0.48, 0.60), blob_count=6),
        CategoryProfile("slate", lowpass_cutoff=6.0, palette=(0.50, 0.48, 0.52), blob_count=8),
    )


def default_profiles() -> tuple:
    # Unseen amplitudes sit where a seen-only detector's threshold behavior
    # and ranking both leave visible headroom; each pattern still peaks at
    # >=10x the spectrum median on fakes while staying <3x on reals.
    return (
        GanProfile("blockres2", "block_upsample_residual", period_px=2),
        GanProfile("sine8h", "sine_grid", period_px=8, amplitude=0.06),
        GanProfile("checker16", "checkerboard", period_px=16, amplitude=0.06),
        GanProfile("checker8", "checkerboard", period_px=8, amplitude=0.03),
        GanProfile("checker4", "checkerboard", period_px=4, amplitude=0.016),
    )


@dataclass(frozen=True)
class DatasetConfig:
    side: int = 64
    categories: tuple = field(default_factory=default_categories)
    profiles: tuple = field(default_factory=default_profiles)
    seen_gan_ids: tuple = ("blockres2",)
    n_train_real: int = 500
    n_train_fake: int = 500
    n_test_real: int = 200
    n_test_fake_per_gan: int = 200

    def __post_init__(self):
        if self.side & (self.side - 1) or self.side < 8:
            raise ValueError(f"side must be a power of two >= 8, got {self.side}")
        cat_ids = [c.category_id for c in self.categories]
        gan_ids = [p.gan_id for p in self.profiles]
        if len(set(cat_ids)) != len(cat_ids):
            raise ValueError(f"duplicate category_id in {cat_ids}")
        if len(set(gan_ids)) != len(gan_ids):
            raise ValueError(f"duplicate gan_id in {gan_ids}")
        unknown = set(self.seen_gan_ids) - set(gan_ids)
        if unknown:
            raise ValueError(f"seen_gan_ids not in profiles: {sorted(unknown)}")
        for p in self.profiles:
            if p.period_px > self.side // 4:
                raise ValueError(
                    f"profile {p.gan_id}: period_px {p.period_px} exceeds side/4 = {self.side // 4}"
                )

    @property
    def unseen_gan_ids(self) -> tuple:
        return tuple(p.gan_id for p in self.profiles if p.gan_id not in self.seen_gan_ids)


def _radial_lowpass_mask(side: int, cutoff: float) -> np.ndarray:
    k = np.minimum(np.arange(side), side - np.arange(side)).astype(np.float64)
    r = np.hypot(k[:, None], k[None, :])
    return (r <= cutoff).astype(np.float64)


def gen_real(category: CategoryProfile, seed, side: int = 64) -> np.ndarray:
    """Procedural real image, (3, side, side) float32 in [0,1], deterministic per (category, seed)."""
    rng = np.random.default_rng(seed)
    mask = _radial_lowpass_mask(side, category.lowpass_cutoff)
    img = np.empty((3, side, side), dtype=np.float64)
    white = rng.standard_normal((3, side, side))
    for c in range(3):
        smooth = ifft2d(fft2d(white[c]) * mask).real
        sd = smooth.std()
        img[c] = category.palette[c] + category.noise_scale * (smooth / sd if sd > 0 else smooth)

    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64)
    for _ in range(category.blob_count):
        cx = rng.uniform(0, side)
        cy = rng.uniform(0, side)
        sigma = rng.uniform(side / 12, side / 5)
        amps = rng.uniform(-0.28, 0.28, size=3)
        blob = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * sigma * sigma))
        img += amps[:, None, None] * blob

    sensor = rng.uniform(0.0, category.sensor_noise_max)
    img += sensor * rng.standard_normal((3, side, side))
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def fingerprint_pattern(profile: GanProfile, image: np.ndarray) -> np.ndarray:
    """Zero-mean additive pattern for a profile, same shape as image (3,S,S).

    Checkerboard and sine grids ignore the content; the block-upsample
    residual is content-dependent (image minus its decimate-then-nearest-
    upsample copy, rescaled so the pattern RMS equals the amplitude).
    """
    img = np.asarray(image, dtype=np.float64)
    side = img.shape[-1]
    if profile.pattern == "checkerboard":
        block = profile.period_px // 2
        shift = int(round(profile.phase / (2 * np.pi) * profile.period_px))
        idx = np.arange(side) + shift
        parity = (idx[:, None] // block + idx[None, :] // block) % 2
        plane = profile.amplitude * np.where(parity == 0, 1.0, -1.0)
    elif profile.pattern == "sine_grid":
        yy, xx = np.mgrid[0:side, 0:side].astype(np.float64)
        u = np.cos(profile.orientation) * xx + np.sin(profile.orientation) * yy
        plane = profile.amplitude * np.sin(2 * np.pi * u / profile.period_px + profile.phase)
    else:
        b = profile.period_px
        h = (side // b) * b
        blocks = img[..., :h, :h].reshape(3, h // b, b, h // b, b)
        up = np.repeat(np.repeat(blocks.mean(axis=(2, 4)), b, axis=1), b, axis=2)
        resid = np.zeros_like(img)
        resid[..., :h, :h] = img[..., :h, :h] - up
        rms = np.sqrt(np.mean(resid ** 2))
        pat = resid / rms * profile.amplitude if rms > 0 else resid
        return (pat - pat.mean()).astype(np.float64)
    plane = plane - plane.mean()
    return np.broadcast_to(plane, img.shape).astype(np.float64)


def embed_fingerprint(image: np.ndarray, profile: GanProfile) -> np.ndarray:
    """clamp(image + pattern, 0, 1); the pattern is zero-mean before clamping."""
    out = np.asarray(image, dtype=np.float64) + fingerprint_pattern(profile, image)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def characteristic_bin(profile: GanProfile, side: int):
    """Unshifted (row-freq, col-freq) bin where the profile's spectral peak sits."""
    k = side // profile.period_px
    if profile.pattern == "checkerboard":
        return (k, k)
    if profile.pattern == "sine_grid":
        ori = profile.orientation % np.pi
        return (0, k) if abs(ori) < 1e-6 else (k, 0)
    # Block upsampling replicates the content spectrum around multiples of
    # side/period; the replication centers themselves carry no energy because
    # block means are preserved. The strongest replicated line is the highest
    # content frequency shared by every category (the smallest lowpass
    # cutoff), sitting just inside the first alias center.
    k0 = int(round(min(c.lowpass_cutoff for c in default_categories())))
    return (0, k - k0)


MANIFEST_VERSION = 1
_IMG_DTYPE = np.dtype("<f4")


@dataclass
class SampleRecord:
    index: int
    split: str
    label: str
    category_id: str
    gan_id: object
    seed: int
    offset: int
    # set only on augmented copies: strategy plus its parameters
    perturbation: object = None

    def to_json(self) -> dict:
        d = {
            "index": self.index,
            "split": self.split,
            "label": self.label,
            "category_id": self.category_id,
            "gan_id": self.gan_id,
            "seed": self.seed,
            "offset": self.offset,
        }
        if self.perturbation is not None:
            d["perturbation"] = self.perturbation
        return d

    @staticmethod
    def from_json(d: dict) -> "SampleRecord":
        return SampleRecord(
            index=d["index"], split=d["split"], label=d["label"],
            category_id=d["category_id"], gan_id=d["gan_id"],
            seed=d["seed"], offset=d["offset"],
            perturbation=d.get("perturbation"),
        )


def _sample_seed(master_seed: int, split_code: int, index: int) -> int:
    return int(np.random.SeedSequence([int(master_seed), split_code, index]).generate_state(1)[0])


def make_benchmark(config: DatasetConfig, master_seed: int, out_dir) -> "Dataset":
    """Generate the benchmark to out_dir/manifest.json + out_dir/data.f32.

    Train fakes come only from the seen GAN(s); the test split holds one
    shared pool of reals plus a per-GAN fake block for every profile, so each
    per-GAN evaluation pairs equal-sized real and fake sets.
    """
    os.makedirs(out_dir, exist_ok=True)
    cats = list(config.categories)
    seen = [p for p in config.profiles if p.gan_id in config.seen_gan_ids]
    records = []
    item = 0

    def plan(split, split_code, label, count, gan_cycle):
        nonlocal item
        out = []
        for i in range(count):
            cat = cats[i % len(cats)]
            gan = None if label == "real" else gan_cycle[i % len(gan_cycle)]
            out.append((split, split_code, label, cat, gan, _sample_seed(master_seed, split_code, item), item))
            item += 1
        return out

    jobs = []
    jobs += plan("train", 0, "real", config.n_train_real, None)
    if seen:
        jobs += plan("train", 0, "fake", config.n_train_fake, seen)
    jobs += plan("test", 1, "real", config.n_test_real, None)
    for profile in config.profiles:
        jobs += plan("test", 1, "fake", config.n_test_fake_per_gan, [profile])

    img_bytes = 3 * config.side * config.side * _IMG_DTYPE.itemsize
    blob_path = os.path.join(out_dir, "data.f32")
    with open(blob_path, "wb") as blob:
        for idx, (split, _code, label, cat, gan, seed, _item) in enumerate(jobs):
            img = gen_real(cat, seed, config.side)
            if label == "fake":
                img = embed_fingerprint(img, gan)
            blob.write(np.ascontiguousarray(img, dtype=_IMG_DTYPE).tobytes())
            records.append(SampleRecord(
                index=idx, split=split, label=label, category_id=cat.category_id,
                gan_id=None if gan is None else gan.gan_id,
                seed=seed, offset=idx * img_bytes,
            ))

    manifest = {
        "version": MANIFEST_VERSION,
        "side": config.side,
        "channels": 3,
        "records": [r.to_json() for r in records],
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, sort_keys=True, separators=(",", ":"))
    return Dataset(out_dir)


class Dataset:
    """Read-only view over a manifest.json + data.f32 pair."""

    def __init__(self, root):
        self.root = str(root)
        with open(os.path.join(self.root, "manifest.json"), "r", encoding="utf-8") as f:
            manifest = json.load(f)
        if manifest.get("version") != MANIFEST_VERSION:
            raise ValueError(f"unsupported manifest version {manifest.get('version')}")
        self.side = int(manifest["side"])
        self.channels = int(manifest["channels"])
        self.records = [SampleRecord.from_json(d) for d in manifest["records"]]
        self._img_elems = self.channels * self.side * self.side
        n = len(self.records)
        self._blob = np.memmap(os.path.join(self.root, "data.f32"), dtype=_IMG_DTYPE,
                               mode="r", shape=(n * self._img_elems,))
        last = -1
        for r in self.records:
            if r.offset <= last or r.offset % _IMG_DTYPE.itemsize:
                raise ValueError(f"record {r.index}: bad offset {r.offset}")
            last = r.offset
            if r.label == "fake" and r.gan_id is None:
                raise ValueError(f"record {r.index}: fake without gan_id")
            if r.label == "real" and r.gan_id is not None:
                raise ValueError(f"record {r.index}: real with gan_id")

    def __len__(self) -> int:
        return len(self.records)

    def image(self, index: int) -> np.ndarray:
        r = self.records[index]
        start = r.offset // _IMG_DTYPE.itemsize
        flat = np.array(self._blob[start:start + self._img_elems], dtype=np.float32)
        return flat.reshape(self.channels, self.side, self.side)

    def select(self, split=None, label=None, gan_id="any", category_id=None):
        out = []
        for r in self.records:
            if split is not None and r.split != split:
                continue
            if label is not None and r.label != label:
                continue
            if gan_id != "any" and r.gan_id != gan_id:
                continue
            if category_id is not None and r.category_id != category_id:
                continue
            out.append(r)
        return out

    def stack(self, records) -> np.ndarray:
        out = np.empty((len(records), self.channels, self.side, self.side), dtype=np.float32)
        for i, r in enumerate(records):
            out[i] = self.image(r.index)
        return out

    def export_ppm(self, index: int, path) -> None:
        from .imageio import write_ppm

        write_ppm(path, self.image(index))
