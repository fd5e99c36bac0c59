"""Train/eval image pipelines: resize, random crop, flip, channel normalize.

Train mode mirrors the 256 -> 224 crop protocol at any target size by scaling
the resize step with the same 8/7 ratio. All randomness comes from the passed
generator, so the pipeline is a pure function of (image, seed).
"""

from __future__ import annotations

import numpy as np

from .errors import BadConfig
from .imaging import ImageSample, bilinear_resize

IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float64)
IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float64)

RESIZE_RATIO = 256.0 / 224.0


def normalize_channels(pixels: np.ndarray, mean=IMAGENET_MEAN, std=IMAGENET_STD) -> np.ndarray:
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.shape[-1] != len(mean):
        raise BadConfig(
            f"image has {pixels.shape[-1]} channels, normalization expects {len(mean)}"
        )
    return (pixels - mean) / std


def random_crop_params(rng: np.random.Generator, in_h: int, in_w: int, size: int):
    top = int(rng.integers(0, in_h - size + 1))
    left = int(rng.integers(0, in_w - size + 1))
    return top, left


def horizontal_flip(pixels: np.ndarray) -> np.ndarray:
    return pixels[:, ::-1, :]


def augment_and_normalize(
    img: ImageSample,
    train_mode: bool,
    rng: np.random.Generator | None = None,
    out_size: int = 224,
) -> ImageSample:
    """Train: resize up, random crop, random h-flip, normalize. Eval: resize, normalize."""
    if img.normalized:
        raise BadConfig("image is already normalized")
    pixels = img.pixels.astype(np.float64)
    if train_mode:
        if rng is None:
            raise BadConfig("train-mode augmentation requires a generator")
        resize_to = max(out_size + 1, int(round(out_size * RESIZE_RATIO)))
        pixels = bilinear_resize(pixels, resize_to, resize_to)
        top, left = random_crop_params(rng, resize_to, resize_to, out_size)
        pixels = pixels[top : top + out_size, left : left + out_size]
        if rng.random() < 0.5:
            pixels = horizontal_flip(pixels)
    else:
        if pixels.shape[0] != out_size or pixels.shape[1] != out_size:
            pixels = bilinear_resize(pixels, out_size, out_size)
    pixels = normalize_channels(pixels).astype(np.float32)
    return ImageSample(
        pixels=pixels, label=img.label, source_kind=img.source_kind, normalized=True
    )
