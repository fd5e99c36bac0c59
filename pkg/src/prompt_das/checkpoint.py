"""Versioned binary checkpoints.

Layout (little-endian throughout): magic "MPDC", format version u16, a
length-prefixed canonical config echo, the parameter count, then each
parameter in sorted-name order (name, shape, raw f32 data), and finally a
CRC32 of everything before it. A flipped byte anywhere surfaces as
ChecksumMismatch, never as a silently wrong load.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np
import torch

from .errors import ChecksumMismatch, DatasetUnreadable, HeaderMismatch, ShapeMismatch

MAGIC = b"MPDC"
FORMAT_VERSION = 1


def save_checkpoint(path: Path, config_text: str, params: dict[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<H", FORMAT_VERSION)
    config_bytes = config_text.encode("utf-8")
    blob += struct.pack("<I", len(config_bytes))
    blob += config_bytes
    blob += struct.pack("<I", len(params))
    for name in sorted(params):
        # asarray with order="C" keeps 0-d shapes (ascontiguousarray promotes to 1-d)
        arr = np.asarray(params[name], dtype="<f4", order="C")
        name_bytes = name.encode("utf-8")
        blob += struct.pack("<H", len(name_bytes))
        blob += name_bytes
        blob += struct.pack("<B", arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blob += arr.tobytes()
    blob += struct.pack("<I", zlib.crc32(bytes(blob)) & 0xFFFFFFFF)
    path.write_bytes(bytes(blob))
    return path


class _Reader:
    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise HeaderMismatch(f"{self.path}: truncated checkpoint")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path: Path) -> tuple[str, dict[str, np.ndarray]]:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise DatasetUnreadable(f"cannot read checkpoint {path}: {exc}") from exc
    if len(data) < 4:
        raise HeaderMismatch(f"{path}: file too small to be a checkpoint")
    stored_crc = struct.unpack("<I", data[-4:])[0]
    actual_crc = zlib.crc32(data[:-4]) & 0xFFFFFFFF
    reader = _Reader(data[:-4], path)
    if reader.take(4) != MAGIC:
        raise HeaderMismatch(f"{path}: bad magic, not a checkpoint file")
    if actual_crc != stored_crc:
        raise ChecksumMismatch(
            f"{path}: checksum mismatch (stored {stored_crc:#010x}, computed {actual_crc:#010x})"
        )
    (version,) = reader.unpack("<H")
    if version != FORMAT_VERSION:
        raise HeaderMismatch(f"{path}: unsupported checkpoint version {version}")
    (config_len,) = reader.unpack("<I")
    config_text = reader.take(config_len).decode("utf-8")
    (n_params,) = reader.unpack("<I")
    params: dict[str, np.ndarray] = {}
    for _ in range(n_params):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (ndim,) = reader.unpack("<B")
        shape = reader.unpack(f"<{ndim}I") if ndim else ()
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        arr = np.frombuffer(reader.take(4 * count), dtype="<f4").reshape(shape)
        params[name] = arr.copy()
    if reader.pos != len(reader.data):
        raise HeaderMismatch(f"{path}: {len(reader.data) - reader.pos} trailing bytes")
    return config_text, params


def module_params(module: torch.nn.Module, prefix: str = "") -> dict[str, np.ndarray]:
    return {
        prefix + name: tensor.detach().cpu().numpy().astype(np.float32)
        for name, tensor in module.state_dict().items()
    }


def load_module_params(
    module: torch.nn.Module, params: dict[str, np.ndarray], prefix: str = ""
) -> None:
    """Strict load: every module parameter must be present with the right shape."""
    state = module.state_dict()
    missing = [prefix + k for k in state if prefix + k not in params]
    if missing:
        raise ShapeMismatch(f"checkpoint missing parameters: {missing[:5]}")
    new_state = {}
    for name, tensor in state.items():
        arr = params[prefix + name]
        if tuple(arr.shape) != tuple(tensor.shape):
            raise ShapeMismatch(
                f"parameter {prefix + name}: checkpoint shape {tuple(arr.shape)} "
                f"!= model shape {tuple(tensor.shape)}"
            )
        new_state[name] = torch.from_numpy(arr.copy()).to(tensor.dtype)
    module.load_state_dict(new_state)
