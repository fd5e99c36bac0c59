"""Non-overlapping patch extraction and its exact inverse.

Patches are taken row-major over the grid; each patch is flattened in
(row, col, channel) order. unpatchify(patchify(img)) is bit-exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotDivisible


@dataclass(frozen=True)
class PatchSequence:
    patches: np.ndarray  # (m, patch*patch*C)
    grid_rows: int
    grid_cols: int
    patch_h: int
    patch_w: int
    channels: int

    @property
    def count(self) -> int:
        return self.grid_rows * self.grid_cols


def patchify(img, patch: int) -> PatchSequence:
    """Accepts an ImageSample or a bare (H, W, C) array."""
    pixels = np.asarray(getattr(img, "pixels", img))
    h, w, c = pixels.shape
    if h % patch or w % patch:
        raise NotDivisible(f"image {h}x{w} not divisible by patch {patch}")
    gr, gc = h // patch, w // patch
    tiled = pixels.reshape(gr, patch, gc, patch, c).transpose(0, 2, 1, 3, 4)
    flat = tiled.reshape(gr * gc, patch * patch * c)
    return PatchSequence(
        patches=flat, grid_rows=gr, grid_cols=gc, patch_h=patch, patch_w=patch, channels=c
    )


def unpatchify(seq: PatchSequence) -> np.ndarray:
    gr, gc, p, c = seq.grid_rows, seq.grid_cols, seq.patch_h, seq.channels
    tiled = seq.patches.reshape(gr, gc, p, p, c).transpose(0, 2, 1, 3, 4)
    return tiled.reshape(gr * p, gc * p, c)
