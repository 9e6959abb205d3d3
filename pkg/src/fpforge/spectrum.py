"""2-D spectral analysis: radix-2 FFT, high-pass filtering, averaged spectra.

The FFT is a vectorized iterative Cooley-Tukey (decimation in time) applied
row-column; sides must be powers of two. Forward is unnormalized, inverse
carries the full 1/S^2 factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _bit_reversal(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    x = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for _ in range(bits):
        rev = (rev << 1) | (x & 1)
        x >>= 1
    return rev


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _fft_last_axis(x: np.ndarray, inverse: bool) -> np.ndarray:
    n = x.shape[-1]
    y = np.ascontiguousarray(x[..., _bit_reversal(n)], dtype=np.complex128)
    m = 1
    sign = 1.0 if inverse else -1.0
    while m < n:
        w = np.exp(sign * 1j * np.pi * np.arange(m) / m)
        blocks = y.reshape(y.shape[:-1] + (n // (2 * m), 2 * m))
        even = blocks[..., :m]
        odd = blocks[..., m:] * w
        nxt = np.empty_like(blocks)
        nxt[..., :m] = even + odd
        nxt[..., m:] = even - odd
        y = nxt.reshape(y.shape)
        m *= 2
    return y


def fft2d(image: np.ndarray) -> np.ndarray:
    """Unnormalized forward DFT of a square 2-D array (side a power of two)."""
    a = np.asarray(image)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"fft2d: expected a square 2-D array, got shape {a.shape}")
    n = a.shape[0]
    if not _is_pow2(n):
        raise ValueError(f"fft2d: side {n} is not a power of two")
    rows = _fft_last_axis(a.astype(np.complex128), inverse=False)
    return _fft_last_axis(rows.T, inverse=False).T


def ifft2d(freq: np.ndarray) -> np.ndarray:
    """Inverse of fft2d, including the 1/S^2 normalization."""
    a = np.asarray(freq)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"ifft2d: expected a square 2-D array, got shape {a.shape}")
    n = a.shape[0]
    if not _is_pow2(n):
        raise ValueError(f"ifft2d: side {n} is not a power of two")
    rows = _fft_last_axis(a.astype(np.complex128), inverse=True)
    return _fft_last_axis(rows.T, inverse=True).T / (n * n)


def box_blur3(image: np.ndarray) -> np.ndarray:
    """3x3 mean filter with edge-replicated padding, per trailing 2-D plane."""
    x = np.asarray(image, dtype=np.float64)
    pad = [(0, 0)] * (x.ndim - 2) + [(1, 1), (1, 1)]
    xp = np.pad(x, pad, mode="edge")
    acc = np.zeros_like(x)
    for di in range(3):
        for dj in range(3):
            acc += xp[..., di:di + x.shape[-2], dj:dj + x.shape[-1]]
    return acc / 9.0


def high_pass(image: np.ndarray) -> np.ndarray:
    """Residual x - box_blur3(x): suppresses the smooth content."""
    x = np.asarray(image, dtype=np.float64)
    return x - box_blur3(x)


@dataclass
class SpectrumImage:
    """DC-centered averaged spectrum: log(1+m) grid plus the raw magnitudes."""

    grid: np.ndarray       # log(1 + magnitude), fftshifted
    magnitude: np.ndarray  # linear mean |FFT|, fftshifted
    n_images: int

    @property
    def side(self) -> int:
        return self.grid.shape[0]


def _fftshift2(a: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    return np.roll(np.roll(a, n // 2, axis=0), n // 2, axis=1)


def shifted_bin(freq_uv: tuple[int, int], side: int) -> tuple[int, int]:
    """Grid index of an unshifted frequency pair in a DC-centered spectrum."""
    fu, fv = freq_uv
    return ((fu + side // 2) % side, (fv + side // 2) % side)


def average_spectrum(images) -> SpectrumImage:
    """Mean high-pass FFT magnitude over images, channel-averaged, log-compressed.

    Accepts an iterable of (C,S,S) or (S,S) arrays, or a stacked 4-D/3-D array.
    """
    arr = np.asarray(images, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None, None]
    elif arr.ndim == 3:
        arr = arr[:, None]
    elif arr.ndim != 4:
        raise ValueError(f"average_spectrum: unsupported input shape {arr.shape}")
    if arr.shape[0] == 0:
        raise ValueError("average_spectrum: empty image list")
    s = arr.shape[-1]
    if arr.shape[-2] != s:
        raise ValueError(f"average_spectrum: images must be square, got {arr.shape}")
    acc = np.zeros((s, s), dtype=np.float64)
    for img in arr:
        hp = high_pass(img)
        mags = np.zeros((s, s), dtype=np.float64)
        for ch in hp:
            mags += np.abs(fft2d(ch))
        acc += mags / hp.shape[0]
    mag = _fftshift2(acc / arr.shape[0])
    return SpectrumImage(grid=np.log1p(mag), magnitude=mag, n_images=int(arr.shape[0]))


def peak_to_median(spec: SpectrumImage, freq_uv: tuple[int, int]) -> float:
    """Linear magnitude at a frequency bin over the grid median magnitude."""
    i, j = shifted_bin(freq_uv, spec.side)
    med = float(np.median(spec.magnitude))
    if med <= 0:
        return float("inf") if spec.magnitude[i, j] > 0 else 0.0
    return float(spec.magnitude[i, j] / med)


def relative_l2(a: SpectrumImage, b: SpectrumImage) -> float:
    """||A - B|| / ||A|| over the log-magnitude grids."""
    ref = float(np.linalg.norm(a.grid))
    if ref == 0:
        return 0.0 if np.linalg.norm(b.grid) == 0 else float("inf")
    return float(np.linalg.norm(a.grid - b.grid) / ref)


def export_pgm(spec: SpectrumImage, path) -> None:
    """Min-max normalized 8-bit binary PGM (P5) of the log grid."""
    from .imageio import write_pgm

    g = spec.grid
    lo, hi = float(g.min()), float(g.max())
    norm = np.zeros_like(g) if hi <= lo else (g - lo) / (hi - lo)
    write_pgm(path, norm)


def export_csv(spec: SpectrumImage, path) -> None:
    """Raw log-magnitude grid as CSV rows."""
    np.savetxt(path, spec.grid, delimiter=",", fmt="%.9g")
