"""Raw DAS-style signal containers and wavelet denoising.

The denoiser decomposes each 1D series with an orthogonal Daubechies filter
bank (symmetric boundary extension), soft-thresholds the detail bands, and
inverts the transform. Approximation coefficients are never thresholded:
shrinking the lowpass band would remove signal energy rather than noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadConfig, EmptyRecord, SignalTooShort

# Orthogonal scaling filters (reconstruction lowpass), lowest index first.
# db1/db2 are written in closed form; db4 is the standard 8-tap table.
_SQRT2 = float(np.sqrt(2.0))
_SQRT3 = float(np.sqrt(3.0))
WAVELET_FILTERS = {
    "db1": np.array([1.0, 1.0]) / _SQRT2,
    "db2": np.array(
        [1.0 + _SQRT3, 3.0 + _SQRT3, 3.0 - _SQRT3, 1.0 - _SQRT3]
    ) / (4.0 * _SQRT2),
    "db4": np.array(
        [
            0.23037781330885523,
            0.7148465705525415,
            0.6308807679295904,
            -0.02798376941698385,
            -0.18703481171888114,
            0.030841381835986965,
            0.032883011666982945,
            -0.010597401784997278,
        ]
    ),
}


@dataclass(frozen=True)
class SignalRecord:
    """Multi-channel 1D time series; the raw unit of the pipeline."""

    channels: np.ndarray  # (n_channels, n_samples)
    sample_rate: float
    label: int | None = None

    def __post_init__(self):
        arr = np.asarray(self.channels, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise EmptyRecord(f"expected non-empty (channels, samples) array, got shape {arr.shape}")
        if self.sample_rate <= 0:
            raise BadConfig(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "channels", arr)

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]

    @property
    def n_samples(self) -> int:
        return self.channels.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate


@dataclass(frozen=True)
class DenoiseConfig:
    threshold: float = 1.0  # soft-threshold level applied to detail bands
    wavelet_levels: int = 4
    wavelet_family: str = "db4"

    def __post_init__(self):
        if self.threshold < 0:
            raise BadConfig(f"threshold must be >= 0, got {self.threshold}")
        if self.wavelet_levels < 1:
            raise BadConfig(f"wavelet_levels must be >= 1, got {self.wavelet_levels}")
        if self.wavelet_family not in WAVELET_FILTERS:
            raise BadConfig(
                f"unknown wavelet family {self.wavelet_family!r}; "
                f"choose from {sorted(WAVELET_FILTERS)}"
            )


def soft_threshold(c, lam: float):
    """Soft-shrink coefficient(s): 0 where |c| <= lam, else c*(1 - lam/|c|).

    Equality with the threshold falls into the zero branch. Works on scalars
    and arrays; total function for lam >= 0.
    """
    c = np.asarray(c, dtype=np.float64)
    mag = np.abs(c)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        shrunk = np.where(mag > lam, c * (1.0 - lam / np.where(mag > 0, mag, 1.0)), 0.0)
    if shrunk.ndim == 0:
        return float(shrunk)
    return shrunk


def _filters(family: str):
    rec_lo = WAVELET_FILTERS[family]
    k = np.arange(len(rec_lo))
    rec_hi = ((-1.0) ** k) * rec_lo[::-1]
    return rec_lo, rec_hi


def _sym_pad(x: np.ndarray, n: int) -> np.ndarray:
    # half-sample symmetric extension: ... x1 x0 | x0 x1 ... xe | xe ...
    # implemented by folding positions into [0, len) with period 2*len,
    # which stays correct even when n exceeds len(x)
    size = len(x)
    t = np.arange(-n, size + n)
    m = np.mod(t, 2 * size)
    idx = np.where(m < size, m, 2 * size - 1 - m)
    return x[idx]


def dwt_single(x: np.ndarray, family: str):
    """One analysis level: symmetric extension, correlate, downsample.

    Coefficient arrays have length floor((n + L - 1) / 2) where L is the
    filter length; the redundancy is what makes the inverse exact for any n.
    """
    rec_lo, rec_hi = _filters(family)
    L = len(rec_lo)
    ext = _sym_pad(np.asarray(x, dtype=np.float64), L - 1)
    approx = np.correlate(ext, rec_lo, mode="valid")[1::2]
    detail = np.correlate(ext, rec_hi, mode="valid")[1::2]
    return approx, detail


def idwt_single(approx: np.ndarray, detail: np.ndarray, family: str, out_len: int) -> np.ndarray:
    """Inverse of :func:`dwt_single`, trimmed back to ``out_len`` samples."""
    rec_lo, rec_hi = _filters(family)
    L = len(rec_lo)
    up_a = np.zeros(2 * len(approx))
    up_d = np.zeros(2 * len(detail))
    up_a[::2] = approx
    up_d[::2] = detail
    y = np.convolve(up_a, rec_lo) + np.convolve(up_d, rec_hi)
    off = L - 2  # analysis downsampling phase 1 puts x[0] at index L-2
    return y[off : off + out_len]


def wavedec(x: np.ndarray, family: str, levels: int):
    """Multi-level decomposition; returns (approx, [detail_1..detail_levels], lengths)."""
    lengths = []
    details = []
    cur = np.asarray(x, dtype=np.float64)
    for _ in range(levels):
        lengths.append(len(cur))
        cur, d = dwt_single(cur, family)
        details.append(d)
    return cur, details, lengths


def waverec(approx: np.ndarray, details, family: str, lengths) -> np.ndarray:
    cur = approx
    for d, n in zip(reversed(details), reversed(lengths)):
        cur = idwt_single(cur, d, family, n)
    return cur


def wavelet_denoise(signal: np.ndarray, cfg: DenoiseConfig) -> np.ndarray:
    """Denoise one series: decompose, soft-threshold details, reconstruct.

    Output length equals input length. With threshold 0 this is a perfect
    round trip of the filter bank.
    """
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim != 1:
        raise BadConfig(f"expected 1D series, got shape {signal.shape}")
    if len(signal) < 2 ** cfg.wavelet_levels:
        raise SignalTooShort(
            f"signal length {len(signal)} < 2^{cfg.wavelet_levels} required "
            f"for {cfg.wavelet_levels} decomposition levels"
        )
    approx, details, lengths = wavedec(signal, cfg.wavelet_family, cfg.wavelet_levels)
    details = [soft_threshold(d, cfg.threshold) for d in details]
    return waverec(approx, details, cfg.wavelet_family, lengths)


def denoise_record(record: SignalRecord, cfg: DenoiseConfig) -> SignalRecord:
    """Apply :func:`wavelet_denoise` channel by channel."""
    denoised = np.stack([wavelet_denoise(ch, cfg) for ch in record.channels])
    return SignalRecord(channels=denoised, sample_rate=record.sample_rate, label=record.label)
