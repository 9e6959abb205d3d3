"""Binary real/fake detector plus Acc/AP evaluation per test source.

The detector trains with BCE on reals and (optionally fingerprint-augmented)
fakes; fake is the positive class. Evaluation pairs each source's fakes with
the shared real pool and reports per-source accuracy at threshold 0.5 and
step-interpolated average precision, with arithmetic means across sources.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .augment import augment_batch
from .autodiff import Adam, Tape, Tensor, bce, global_avg_pool, relu, sigmoid
from .extractor import reconstruct
from .nn import Conv2d, Linear, Module

VARIANTS = {
    "smaller": (8, 16, 32),
    "small": (16, 32, 64, 64),
    "larger": (32, 64, 128, 128),
}


class Detector(Module):
    """Stride-2 conv stack + global average pool + linear to one logit."""

    def __init__(self, rng: np.random.Generator, variant: str = "small"):
        if variant not in VARIANTS:
            raise ValueError(f"unknown detector variant {variant!r}, "
                             f"expected one of {sorted(VARIANTS)}")
        widths = VARIANTS[variant]
        self.variant = variant
        cin = 3
        for i, w in enumerate(widths, start=1):
            setattr(self, f"conv{i}", Conv2d(cin, w, rng, stride=2, pad=1, name=f"c{i}"))
            cin = w
        self.fc = Linear(cin, 1, rng, name="fc")
        self._depth = len(widths)

    def __call__(self, x: Tensor) -> Tensor:
        h = x
        for i in range(1, self._depth + 1):
            h = relu(getattr(self, f"conv{i}")(h))
        return sigmoid(self.fc(global_avg_pool(h)))


@dataclass
class DetectorTrainConfig:
    lr: float = 1e-4
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    variant: str = "small"

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 2:
            raise ValueError("epochs must be >= 1 and batch_size >= 2")


def new_detector(seed: int, variant: str = "small") -> Detector:
    return Detector(np.random.default_rng(np.random.SeedSequence([seed, 19])), variant)


def train_detector(reals: np.ndarray, fakes: np.ndarray, config: DetectorTrainConfig,
                   perturb_config=None, ae=None):
    """Train the detector; fake label is 1, real is 0.

    With a perturb_config, each epoch re-augments the fake pool through the
    frozen extractor (its parameters are never stepped here). Returns
    (detector, history) with per-epoch mean BCE loss.
    """
    reals = np.asarray(reals, dtype=np.float32)
    fakes = np.asarray(fakes, dtype=np.float32)
    if len(reals) == 0 or len(fakes) == 0:
        raise ValueError("training needs both classes present")
    if perturb_config is not None and ae is None:
        raise ValueError("augmentation requires a trained extractor")

    det = new_detector(config.seed, config.variant)
    opt = Adam(det.params(), lr=config.lr)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 23]))

    recons = fps = None
    if perturb_config is not None:
        recons = reconstruct(fakes, ae)
        fps = fakes - recons

    half = config.batch_size // 2
    steps = max(1, (len(reals) + len(fakes)) // config.batch_size)
    history = []
    for epoch in range(config.epochs):
        order_r = rng.permutation(len(reals))
        order_f = rng.permutation(len(fakes))
        if perturb_config is not None:
            fake_pool = np.empty_like(fakes)
            chunk = 128
            for i in range(0, len(fakes), chunk):
                sel = slice(i, min(i + chunk, len(fakes)))
                fake_pool[sel], _ = augment_batch(
                    fakes[sel], ae, perturb_config, rng,
                    recons=recons[sel], fingerprints=fps[sel])
        else:
            fake_pool = fakes
        loss_sum = 0.0
        for step in range(steps):
            ri = order_r[(step * half) % len(reals):][:half]
            fi = order_f[(step * half) % len(fakes):][:half]
            if len(ri) < half:
                ri = order_r[:half]
            if len(fi) < half:
                fi = order_f[:half]
            xb = np.concatenate([reals[ri], fake_pool[fi]], axis=0)
            yb = np.concatenate([np.zeros(len(ri)), np.ones(len(fi))]).astype(np.float32)
            with Tape() as tape:
                scores = det(Tensor(xb))
                loss = bce(scores, yb[:, None])
            lv = float(loss.data)
            if not np.isfinite(lv):
                raise RuntimeError(f"non-finite detector loss at epoch {epoch} step {step}")
            tape.backward(loss)
            opt.step()
            loss_sum += lv
        history.append((epoch, loss_sum / steps))
    return det, history


def predict(x: np.ndarray, det: Detector, batch: int = 128) -> np.ndarray:
    """Probability scores in (0,1); (3,S,S) input gives a scalar array."""
    arr = np.asarray(x, dtype=np.float32)
    single = arr.ndim == 3
    if single:
        arr = arr[None]
    outs = []
    for i in range(0, len(arr), batch):
        outs.append(det(Tensor(arr[i:i + batch])).data[:, 0])
    scores = np.concatenate(outs)
    return scores[0] if single else scores


def accuracy(scores, labels, tau: float = 0.5) -> float:
    """Fraction of (score >= tau) agreeing with the binary label."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.size == 0:
        raise ValueError("accuracy: empty input")
    if s.shape != y.shape:
        raise ValueError(f"accuracy: shapes differ {s.shape} vs {y.shape}")
    return float(np.mean((s >= tau) == (y == 1)))


def average_precision(scores, labels) -> float:
    """Step-interpolated AP: descending scores, ties by original index, one
    PR point per rank."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("average_precision: scores and labels must be equal-length 1-D")
    n_pos = int(np.sum(y == 1))
    if n_pos == 0:
        raise ValueError("average_precision: no positive labels")
    order = np.argsort(-s, kind="stable")
    tp = 0
    ap = 0.0
    for rank, idx in enumerate(order, start=1):
        if y[idx] == 1:
            tp += 1
            ap += (1.0 / n_pos) * (tp / rank)
    return float(ap)


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; inf for identical inputs."""
    x = np.asarray(a, dtype=np.float64)
    z = np.asarray(b, dtype=np.float64)
    if x.shape != z.shape:
        raise ValueError(f"psnr: shape mismatch {x.shape} vs {z.shape}")
    err = np.mean((x - z) ** 2)
    if err == 0:
        return float("inf")
    return float(10.0 * np.log10(peak * peak / err))


@dataclass
class EvalReport:
    sources: dict
    mean_acc: float
    mean_ap: float
    config: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "sources": {k: dict(v) for k, v in sorted(self.sources.items())},
            "mean_acc": self.mean_acc,
            "mean_ap": self.mean_ap,
            "config": self.config,
        }

    @staticmethod
    def from_json(d: dict) -> "EvalReport":
        return EvalReport(sources=d["sources"], mean_acc=d["mean_acc"],
                          mean_ap=d["mean_ap"], config=d.get("config", {}))

    def mean_over(self, source_ids) -> tuple:
        accs = [self.sources[s]["acc"] for s in source_ids]
        aps = [self.sources[s]["ap"] for s in source_ids]
        return float(np.mean(accs)), float(np.mean(aps))


def _report_from_pairs(pairs: dict, config: dict) -> EvalReport:
    sources = {}
    for sid, (real_scores, fake_scores) in sorted(pairs.items()):
        n = min(len(real_scores), len(fake_scores))
        rs, fs = real_scores[:n], fake_scores[:n]
        scores = np.concatenate([rs, fs])
        labels = np.concatenate([np.zeros(n, dtype=np.int64), np.ones(n, dtype=np.int64)])
        sources[sid] = {
            "acc": accuracy(scores, labels),
            "ap": average_precision(scores, labels),
            "n_real": int(n),
            "n_fake": int(n),
        }
    return EvalReport(
        sources=sources,
        mean_acc=float(np.mean([v["acc"] for v in sources.values()])),
        mean_ap=float(np.mean([v["ap"] for v in sources.values()])),
        config=config,
    )


def cross_gan_eval(det: Detector, dataset, expected_gans=None, config=None) -> EvalReport:
    """Per-GAN Acc/AP on the test split: each GAN's fakes against the shared
    real pool, truncated to equal sizes."""
    real_recs = dataset.select(split="test", label="real")
    if not real_recs:
        raise ValueError("test split has no real images")
    real_scores = predict(dataset.stack(real_recs), det)
    gans = sorted({r.gan_id for r in dataset.select(split="test", label="fake")})
    if expected_gans is not None:
        missing = sorted(set(expected_gans) - set(gans))
        if missing:
            raise ValueError(f"test split missing fakes for GAN {missing[0]!r}")
        gans = sorted(expected_gans)
    pairs = {}
    for gan in gans:
        recs = dataset.select(split="test", label="fake", gan_id=gan)
        pairs[gan] = (real_scores, predict(dataset.stack(recs), det))
    return _report_from_pairs(pairs, config or {})


def cross_category_eval(det: Detector, dataset, gan_id: str, categories,
                        config=None) -> EvalReport:
    """Per-category Acc/AP for one GAN's test fakes against same-category reals."""
    pairs = {}
    for cat in sorted(categories):
        real_recs = dataset.select(split="test", label="real", category_id=cat)
        fake_recs = dataset.select(split="test", label="fake", gan_id=gan_id,
                                   category_id=cat)
        if not real_recs or not fake_recs:
            raise ValueError(f"test split missing category {cat!r} for GAN {gan_id!r}")
        pairs[cat] = (predict(dataset.stack(real_recs), det),
                      predict(dataset.stack(fake_recs), det))
    return _report_from_pairs(pairs, config or {})
