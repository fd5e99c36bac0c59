"""Time-series-to-image transforms.

Three representations share one output contract: H x W x 3 float32 pixels in
[0, 1]. A single bilinear kernel (half-pixel centers) is used for every
resampling step so regenerated datasets stay byte-stable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadConfig, EmptyRecord, WindowTooLong
from .signals import SignalRecord

SOURCE_KINDS = ("spatiotemporal", "gasf", "stft", "raw")

STFT_FLOOR = 1e-10  # magnitude floor applied before the log


@dataclass
class ImageSample:
    pixels: np.ndarray  # (H, W, C) float32
    label: int | None = None
    source_kind: str = "spatiotemporal"
    normalized: bool = False

    def __post_init__(self):
        arr = np.asarray(self.pixels, dtype=np.float32)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise BadConfig(f"pixels must be (H, W, C) with positive dims, got {arr.shape}")
        if self.source_kind not in SOURCE_KINDS:
            raise BadConfig(f"unknown source_kind {self.source_kind!r}")
        self.pixels = arr

    @property
    def shape(self):
        return self.pixels.shape


def minmax_scale(a: np.ndarray) -> np.ndarray:
    """Affine rescale to [0, 1]; a constant array maps to all zeros."""
    a = np.asarray(a, dtype=np.float64)
    lo, hi = a.min(), a.max()
    if hi == lo:
        return np.zeros_like(a)
    return (a - lo) / (hi - lo)


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample with half-pixel sample centers.

    Accepts (H, W) or (H, W, C); output dtype float64.
    """
    img = np.asarray(img, dtype=np.float64)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[:, :, None]
    h, w, _ = img.shape
    if out_h < 1 or out_w < 1:
        raise BadConfig("output size must be positive")

    def axis_coords(n_in, n_out):
        c = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        c = np.clip(c, 0.0, n_in - 1.0)
        i0 = np.floor(c).astype(int)
        i1 = np.minimum(i0 + 1, n_in - 1)
        return i0, i1, c - i0

    r0, r1, rf = axis_coords(h, out_h)
    c0, c1, cf = axis_coords(w, out_w)
    rf = rf[:, None, None]
    cf = cf[None, :, None]
    top = img[r0][:, c0] * (1 - cf) + img[r0][:, c1] * cf
    bot = img[r1][:, c0] * (1 - cf) + img[r1][:, c1] * cf
    out = top * (1 - rf) + bot * rf
    return out[:, :, 0] if squeeze else out


def _to_rgb(gray01: np.ndarray, kind: str, label) -> ImageSample:
    pixels = np.repeat(gray01[:, :, None], 3, axis=2).astype(np.float32)
    return ImageSample(pixels=pixels, label=label, source_kind=kind)


def assemble_spatiotemporal(record: SignalRecord, out_h: int, out_w: int) -> ImageSample:
    """Stack channels into a (channel x time) matrix and resize to an image.

    The raw matrix is min-max scaled first, then height is filled by
    replicating channel rows evenly and the time axis is linearly resampled.
    """
    if record.n_channels < 1 or record.n_samples < 1:
        raise EmptyRecord("record has no samples")
    if out_h < record.n_channels:
        raise BadConfig(
            f"out_h {out_h} must be >= channel count {record.n_channels}"
        )
    mat = minmax_scale(record.channels)
    # each output row takes the channel covering its vertical position
    rows = np.floor(np.arange(out_h) * record.n_channels / out_h).astype(int)
    tall = mat[rows]
    if record.n_samples == 1:
        wide = np.repeat(tall, out_w, axis=1)
    else:
        wide = bilinear_resize(tall[:, :, None], out_h, out_w)[:, :, 0]
    return _to_rgb(wide, "spatiotemporal", record.label)


def gasf_transform(series: np.ndarray, out_size: int, label=None) -> ImageSample:
    """Gramian angular summation field of one series.

    The series is min-max rescaled to [-1, 1] (a constant series maps to the
    midpoint 0), angles phi = arccos, and G[i][j] = cos(phi_i + phi_j). The
    raw Gram matrix is exactly symmetric; resampling to out_size happens last,
    followed by a [0, 1] rescale for the shared image contract.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 1 or len(series) < 1:
        raise BadConfig(f"expected non-empty 1D series, got shape {series.shape}")
    g = gasf_matrix(series)
    if len(series) != out_size:
        g = bilinear_resize(g, out_size, out_size)
    # fixed affine map from the Gram range [-1, 1]; data-independent, unlike
    # min-max, so pixel values stay comparable across samples
    return _to_rgb((g + 1.0) / 2.0, "gasf", label)


def gasf_matrix(series: np.ndarray) -> np.ndarray:
    """The raw GASF Gram matrix in [-1, 1], before any resampling."""
    series = np.asarray(series, dtype=np.float64)
    lo, hi = series.min(), series.max()
    if hi == lo:
        rescaled = np.zeros_like(series)
    else:
        rescaled = 2.0 * (series - lo) / (hi - lo) - 1.0
        rescaled = np.clip(rescaled, -1.0, 1.0)
    phi = np.arccos(rescaled)
    return np.cos(phi[:, None] + phi[None, :])


def stft_magnitude(signal: np.ndarray, window_len: int, hop: int) -> np.ndarray:
    """Hann-windowed short-time magnitudes, shape (n_bins, n_frames)."""
    signal = np.asarray(signal, dtype=np.float64)
    if window_len > len(signal):
        raise WindowTooLong(
            f"window {window_len} longer than signal of {len(signal)} samples"
        )
    if hop < 1 or hop > window_len:
        raise BadConfig(f"hop must be in 1..window_len, got {hop}")
    n = np.arange(window_len)
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * n / window_len)  # periodic Hann
    starts = range(0, len(signal) - window_len + 1, hop)
    frames = np.stack([signal[s : s + window_len] * window for s in starts])
    return np.abs(np.fft.rfft(frames, axis=1)).T


def stft_spectrogram(
    signal: np.ndarray,
    sample_rate: float,
    window_len: int,
    hop: int,
    out_size: int,
    label=None,
) -> ImageSample:
    """Log-magnitude spectrogram image: frequency rows x time columns."""
    del sample_rate  # axes are resampled and rescaled; rate kept for symmetry
    mag = stft_magnitude(signal, window_len, hop)
    logmag = np.log(np.maximum(mag, STFT_FLOOR))
    resized = bilinear_resize(logmag, out_size, out_size)
    return _to_rgb(minmax_scale(resized), "stft", label)
