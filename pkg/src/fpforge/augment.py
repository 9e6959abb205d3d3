"""Fingerprint perturbations and recomposition of augmented fakes.

Scaling multiplies a fingerprint by a random factor in [-alpha0, alpha0];
Mixup convexly combines n fingerprints with simplex-uniform ratios. A
perturbed fake is clamp(E(x) + F_new, 0, 1). All randomness flows through an
explicit generator, so batches are reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .extractor import reconstruct

STRATEGIES = ("scaling", "mixup")


@dataclass(frozen=True)
class PerturbConfig:
    strategy: str = "scaling"
    alpha0: float = 5.0
    n: int = 2
    apply_prob: float = 0.8
    alpha_min: float = 0.0  # optional floor on |alpha|; 0 keeps the plain uniform law

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}, expected one of {STRATEGIES}")
        if self.alpha0 <= 0:
            raise ValueError("alpha0 must be > 0")
        if self.n < 2:
            raise ValueError("mixup needs n >= 2 fingerprints")
        if not (0.0 <= self.apply_prob <= 1.0):
            raise ValueError("apply_prob must lie in [0, 1]")
        if not (0.0 <= self.alpha_min <= self.alpha0):
            raise ValueError("alpha_min must lie in [0, alpha0]")


def sample_alpha(alpha0: float, rng: np.random.Generator, alpha_min: float = 0.0) -> float:
    """Uniform on [-alpha0, alpha0]; with alpha_min > 0, uniform magnitude on
    [alpha_min, alpha0] with a random sign."""
    if alpha0 <= 0:
        raise ValueError("alpha0 must be > 0")
    if alpha_min == 0.0:
        return float(rng.uniform(-alpha0, alpha0))
    mag = rng.uniform(alpha_min, alpha0)
    return float(mag if rng.random() < 0.5 else -mag)


def perturb_scaling(fingerprint: np.ndarray, alpha: float) -> np.ndarray:
    """F_new = alpha * F."""
    if not math.isfinite(alpha):
        raise ValueError(f"alpha must be finite, got {alpha}")
    return np.asarray(fingerprint, dtype=np.float32) * np.float32(alpha)


def perturb_mixup(fingerprints, betas) -> np.ndarray:
    """F_new = sum(beta_i * F_i); betas must sum to 1."""
    fps = [np.asarray(f, dtype=np.float32) for f in fingerprints]
    b = np.asarray(betas, dtype=np.float64)
    if len(fps) < 2 or len(fps) != len(b):
        raise ValueError(f"mixup needs n >= 2 fingerprints with matching betas, "
                         f"got {len(fps)} and {len(b)}")
    if abs(b.sum() - 1.0) > 1e-9:
        raise ValueError(f"mixup betas must sum to 1, got {b.sum()!r}")
    shape = fps[0].shape
    for i, f in enumerate(fps):
        if f.shape != shape:
            raise ValueError(f"fingerprint {i} shape {f.shape} != {shape}")
    out = np.zeros(shape, dtype=np.float64)
    for beta, f in zip(b, fps):
        out += beta * f
    return out.astype(np.float32)


def recompose(recon: np.ndarray, f_new: np.ndarray) -> np.ndarray:
    """x_new = clamp(recon + F_new, 0, 1)."""
    r = np.asarray(recon, dtype=np.float32)
    f = np.asarray(f_new, dtype=np.float32)
    if r.shape != f.shape:
        raise ValueError(f"recompose: shape mismatch {r.shape} vs {f.shape}")
    return np.clip(r + f, 0.0, 1.0)


@dataclass
class AugmentReport:
    n_total: int = 0
    n_applied: int = 0
    n_fallback: int = 0
    samples: list = None

    def __post_init__(self):
        if self.samples is None:
            self.samples = []


def augment_batch(fakes: np.ndarray, ae, config: PerturbConfig,
                  rng: np.random.Generator, recons: np.ndarray = None,
                  fingerprints: np.ndarray = None):
    """Independently perturb each fake with probability apply_prob.

    Returns (augmented batch, AugmentReport). Mixup partners are drawn
    without replacement from the same batch; a batch smaller than n falls
    back to pass-through, counted in the report. Precomputed recons and
    fingerprints may be supplied to skip the autoencoder forward pass.
    """
    x = np.asarray(fakes, dtype=np.float32)
    if x.ndim != 4:
        raise ValueError(f"augment_batch: expected (N,3,S,S), got {x.shape}")
    n_batch = len(x)
    if recons is None:
        recons = reconstruct(x, ae)
    fps = np.asarray(fingerprints if fingerprints is not None else x - recons,
                     dtype=np.float32)
    out = x.copy()
    report = AugmentReport(n_total=n_batch)
    for i in range(n_batch):
        if rng.random() >= config.apply_prob:
            report.samples.append({"index": i, "applied": False})
            continue
        if config.strategy == "scaling":
            alpha = sample_alpha(config.alpha0, rng, config.alpha_min)
            f_new = perturb_scaling(fps[i], alpha)
            report.samples.append({"index": i, "applied": True,
                                   "strategy": "scaling", "alpha": alpha})
        else:
            if n_batch < config.n:
                report.n_fallback += 1
                report.samples.append({"index": i, "applied": False, "fallback": True})
                continue
            others = [j for j in range(n_batch) if j != i]
            partners = [i] + list(rng.choice(others, size=config.n - 1, replace=False))
            betas = rng.dirichlet(np.ones(config.n))
            f_new = perturb_mixup([fps[j] for j in partners], betas)
            report.samples.append({"index": i, "applied": True, "strategy": "mixup",
                                   "partners": [int(p) for p in partners],
                                   "betas": [float(b) for b in betas]})
        out[i] = recompose(recons[i], f_new)
        report.n_applied += 1
    return out, report


def force_apply(config: PerturbConfig) -> PerturbConfig:
    """Same perturbation with apply_prob pinned to 1 (mechanism measurements)."""
    return replace(config, apply_prob=1.0)
