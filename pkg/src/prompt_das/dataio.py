"""On-disk dataset format.

One directory per split (train/val/test). Each sample is a little-endian
binary file: magic "DASI", format version u16, then H, W, C as u32, then
H*W*C row-major float32 pixels. Labels live in a per-split manifest.txt with
one "<filename> <label>" record per line.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import CorruptManifest, DatasetUnreadable, HeaderMismatch
from .imaging import ImageSample

MAGIC = b"DASI"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHIII")

SPLITS = ("train", "val", "test")


def write_sample(path: Path, pixels: np.ndarray) -> None:
    pixels = np.ascontiguousarray(pixels, dtype="<f4")
    h, w, c = pixels.shape
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, FORMAT_VERSION, h, w, c))
        f.write(pixels.tobytes())


def read_sample(path: Path) -> np.ndarray:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise DatasetUnreadable(f"cannot read {path}: {e}") from e
    if len(blob) < _HEADER.size:
        raise HeaderMismatch(f"{path}: file shorter than header")
    magic, version, h, w, c = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise HeaderMismatch(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise HeaderMismatch(f"{path}: unsupported format version {version}")
    expected = _HEADER.size + h * w * c * 4
    if len(blob) != expected:
        raise HeaderMismatch(
            f"{path}: header says {h}x{w}x{c} ({expected} bytes) but file has {len(blob)}"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size)
    return data.reshape(h, w, c).copy()


def write_manifest(split_dir: Path, records: list[tuple[str, int]]) -> None:
    lines = [f"{name} {label}\n" for name, label in records]
    (split_dir / "manifest.txt").write_text("".join(lines))


def read_manifest(split_dir: Path) -> list[tuple[str, int]]:
    split_dir = Path(split_dir)
    mpath = split_dir / "manifest.txt"
    if not mpath.is_file():
        raise CorruptManifest(f"no manifest.txt in {split_dir}")
    records = []
    for lineno, line in enumerate(mpath.read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise CorruptManifest(f"{mpath}:{lineno}: expected '<filename> <label>'")
        name, label = parts
        try:
            records.append((name, int(label)))
        except ValueError as e:
            raise CorruptManifest(f"{mpath}:{lineno}: label {label!r} is not an integer") from e
    if not records:
        raise CorruptManifest(f"{mpath}: manifest is empty")
    return records


def write_split(split_dir: Path, samples: list[ImageSample]) -> None:
    """Write samples as 0-padded numbered files plus the manifest."""
    split_dir = Path(split_dir)
    split_dir.mkdir(parents=True, exist_ok=True)
    records = []
    width = max(4, len(str(max(len(samples) - 1, 0))))
    for i, sample in enumerate(samples):
        name = f"{i:0{width}d}.dasi"
        write_sample(split_dir / name, sample.pixels)
        records.append((name, -1 if sample.label is None else int(sample.label)))
    write_manifest(split_dir, records)


def load_split(split_dir: Path, source_kind: str = "spatiotemporal") -> list[ImageSample]:
    split_dir = Path(split_dir)
    records = read_manifest(split_dir)
    samples = []
    for name, label in records:
        pixels = read_sample(split_dir / name)
        samples.append(
            ImageSample(
                pixels=pixels,
                label=None if label < 0 else label,
                source_kind=source_kind,
            )
        )
    return samples


def split_labels(split_dir: Path) -> list[int]:
    return [label for _, label in read_manifest(split_dir)]
