"""Fingerprint extractor: autoencoder trained to reconstruct reals, with a
category discriminator reading fake-image fingerprints through a gradient
reversal layer.

One joint backward pass per step drives both nets: the discriminator
descends on its softmax cross-entropy while the reversal layer hands the
autoencoder the sign-flipped adversarial gradient, weighted by lambda. The
discriminator's own gradient picks up the same lambda factor from the loss
sum, so its optimizer step rescales by 1/lambda to keep the stated lr_D.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Adam, Tape, Tensor, conv2d, global_avg_pool, grl, mse, relu, sigmoid,
    softmax_ce, sub, scale, add, upsample_nearest2x, save_checkpoint,
    load_checkpoint, params_checksum,
)
from .nn import Conv2d, Linear, Module


class Autoencoder(Module):
    """3 stride-2 conv stages down (3->16->32->64), nearest-upsample decoder
    back to 3 channels, sigmoid output in (0,1). Input side divisible by 8."""

    def __init__(self, rng: np.random.Generator):
        self.enc1 = Conv2d(3, 16, rng, stride=2, pad=1, name="enc1")
        self.enc2 = Conv2d(16, 32, rng, stride=2, pad=1, name="enc2")
        self.enc3 = Conv2d(32, 64, rng, stride=2, pad=1, name="enc3")
        self.dec1 = Conv2d(64, 32, rng, name="dec1")
        self.dec2 = Conv2d(32, 16, rng, name="dec2")
        self.dec3 = Conv2d(16, 3, rng, name="dec3")

    def __call__(self, x: Tensor) -> Tensor:
        h = relu(self.enc1(x))
        h = relu(self.enc2(h))
        h = relu(self.enc3(h))
        h = relu(self.dec1(upsample_nearest2x(h)))
        h = relu(self.dec2(upsample_nearest2x(h)))
        return sigmoid(self.dec3(upsample_nearest2x(h)))


class Discriminator(Module):
    """3 stride-2 conv stages + global average pool + linear to K logits."""

    def __init__(self, n_categories: int, rng: np.random.Generator):
        if n_categories < 1:
            raise ValueError(f"n_categories must be >= 1, got {n_categories}")
        self.conv1 = Conv2d(3, 16, rng, stride=2, pad=1, name="d1")
        self.conv2 = Conv2d(16, 32, rng, stride=2, pad=1, name="d2")
        self.conv3 = Conv2d(32, 64, rng, stride=2, pad=1, name="d3")
        self.fc = Linear(64, n_categories, rng, name="dfc")
        self.n_categories = n_categories

    def __call__(self, f: Tensor) -> Tensor:
        h = relu(self.conv1(f))
        h = relu(self.conv2(h))
        h = relu(self.conv3(h))
        return self.fc(global_avg_pool(h))


@dataclass
class ExtractorTrainConfig:
    lambda_adv: float = 1e-4
    lr_e: float = 1e-3
    lr_d: float = 1e-3
    epochs: int = 40
    batch_size: int = 32
    seed: int = 0
    adv_enabled: bool = True

    def __post_init__(self):
        if self.lambda_adv < 0:
            raise ValueError("lambda_adv must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")


def new_autoencoder(seed: int) -> Autoencoder:
    return Autoencoder(np.random.default_rng(np.random.SeedSequence([seed, 11])))


def new_discriminator(n_categories: int, seed: int) -> Discriminator:
    return Discriminator(n_categories, np.random.default_rng(np.random.SeedSequence([seed, 13])))


def train_extractor(reals: np.ndarray, fakes: np.ndarray, fake_labels: np.ndarray,
                    config: ExtractorTrainConfig):
    """Train E (and D when adv_enabled) on numpy batches.

    reals: (N,3,S,S) in [0,1]; fakes: (M,3,S,S); fake_labels: (M,) ints in [0,K).
    Returns (autoencoder, discriminator-or-None, history) where history is a
    list of (epoch, rec_loss, adv_loss) tuples, adv_loss NaN when disabled.
    """
    reals = np.asarray(reals, dtype=np.float32)
    fakes = np.asarray(fakes, dtype=np.float32)
    labels = np.asarray(fake_labels, dtype=np.int64)
    if labels.size and labels.min() < 0:
        raise ValueError("fake_labels must be non-negative")
    k = int(labels.max()) + 1 if labels.size else 0
    if config.adv_enabled:
        if k < 2:
            raise ValueError(f"adversarial training needs K >= 2 categories, got K={k}")
        if len(fakes) != len(labels):
            raise ValueError("fakes and fake_labels lengths differ")

    ae = new_autoencoder(config.seed)
    disc = new_discriminator(k, config.seed) if config.adv_enabled else None
    opt_e = Adam(ae.params(), lr=config.lr_e)
    opt_d = Adam(disc.params(), lr=config.lr_d) if disc is not None else None

    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 17]))
    bs = config.batch_size
    steps = max(1, len(reals) // bs)
    history = []
    for epoch in range(config.epochs):
        order_r = rng.permutation(len(reals))
        # drawn in both modes so adv_enabled never shifts the real-batch order
        order_f = rng.permutation(len(fakes))
        rec_sum = 0.0
        adv_sum = 0.0
        for step in range(steps):
            rb = reals[order_r[(step * bs) % len(reals):][:bs]]
            if len(rb) < bs:
                rb = reals[order_r[:bs]]
            with Tape() as tape:
                xr = Tensor(rb)
                recon = ae(xr)
                l_rec = mse(recon, xr)
                if config.adv_enabled:
                    fi = order_f[(step * bs) % len(fakes):][:bs]
                    if len(fi) < bs:
                        fi = order_f[:bs]
                    xf = Tensor(fakes[fi])
                    f = sub(xf, ae(xf))
                    logits = disc(grl(f))
                    l_adv = softmax_ce(logits, labels[fi])
                    loss = add(l_rec, scale(l_adv, config.lambda_adv))
                else:
                    l_adv = None
                    loss = l_rec
            lv = float(loss.data)
            if not np.isfinite(lv):
                raise RuntimeError(
                    f"non-finite training loss at epoch {epoch} step {step}: {lv}")
            tape.backward(loss)
            opt_e.step()
            if opt_d is not None and config.lambda_adv > 0:
                # undo the lambda factor baked into D's gradients by the loss sum
                opt_d.step(grad_scale=1.0 / config.lambda_adv)
            rec_sum += float(l_rec.data)
            adv_sum += float(l_adv.data) if l_adv is not None else float("nan")
        history.append((epoch, rec_sum / steps, adv_sum / steps))
    return ae, disc, history


def _batched(model, x: np.ndarray, batch: int = 64) -> np.ndarray:
    outs = []
    for i in range(0, len(x), batch):
        outs.append(model(Tensor(x[i:i + batch])).data)
    return np.concatenate(outs, axis=0)


def reconstruct(x: np.ndarray, ae: Autoencoder, batch: int = 64) -> np.ndarray:
    """E(x) for a (N,3,S,S) or (3,S,S) array, no gradient recording."""
    arr = np.asarray(x, dtype=np.float32)
    single = arr.ndim == 3
    if single:
        arr = arr[None]
    out = _batched(ae, arr, batch)
    return out[0] if single else out


def extract_fingerprint(x: np.ndarray, ae: Autoencoder, batch: int = 64) -> np.ndarray:
    """F = x - E(x), same shape as x, values in [-1, 1]."""
    arr = np.asarray(x, dtype=np.float32)
    return arr - reconstruct(arr, ae, batch)


def discriminator_accuracy(ae: Autoencoder, disc: Discriminator, fakes: np.ndarray,
                           labels: np.ndarray, batch: int = 64) -> float:
    """Fraction of fake fingerprints D assigns to their true category."""
    f = extract_fingerprint(np.asarray(fakes, dtype=np.float32), ae, batch)
    logits = _batched(disc, f, batch)
    pred = np.argmax(logits, axis=1)
    return float(np.mean(pred == np.asarray(labels)))


def history_to_csv(history) -> str:
    buf = io.StringIO()
    buf.write("epoch,rec_loss,adv_loss\n")
    for epoch, rec, adv in history:
        buf.write(f"{epoch},{rec:.9g},{adv:.9g}\n")
    return buf.getvalue()


def save_extractor(path, ae: Autoencoder, disc=None) -> None:
    params = {f"ae.{k}": v.data for k, v in ae.params().items()}
    if disc is not None:
        params.update({f"disc.{k}": v.data for k, v in disc.params().items()})
    save_checkpoint(path, params)


def load_extractor(path):
    """Rebuild (autoencoder, discriminator-or-None) from a checkpoint."""
    arrays = load_checkpoint(path)
    ae = new_autoencoder(0)
    ae.load_params({k[3:]: v for k, v in arrays.items() if k.startswith("ae.")})
    disc_arrays = {k[5:]: v for k, v in arrays.items() if k.startswith("disc.")}
    disc = None
    if disc_arrays:
        k_cat = disc_arrays["fc.weight"].shape[0]
        disc = new_discriminator(k_cat, 0)
        disc.load_params(disc_arrays)
    return ae, disc


def extractor_checksum(ae: Autoencoder) -> str:
    return params_checksum({k: v.data for k, v in ae.params().items()})
