"""Synthetic multi-channel vibration data with controllable class structure.

Each sample is an impulse train (Poisson arrivals) convolved with a damped
oscillation whose carrier sits in a per-class band, placed on a per-class
set of active channels with geometric distance attenuation, plus white noise.
Amplitude tiers play the role of source strength and carrier bands the role
of contact stiffness, so class identity is carried by texture, not by a
single trivial pixel statistic.

Every sample's random stream is derived from (seed, split, class, index), so
splits never leak into each other and regeneration is byte-stable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataio import SPLITS, load_split, read_manifest, write_split
from .errors import InvalidSpec
from .imaging import ImageSample, assemble_spatiotemporal, gasf_transform, stft_spectrogram
from .signals import SignalRecord

CHANNEL_ATTENUATION = 0.5  # per-channel-step amplitude decay from the epicenter
KERNEL_SECONDS = 0.2
KERNEL_DECAY_RATE = 12.0  # 1/s, envelope exp(-rate * t)

REPRESENTATIONS = ("spatiotemporal", "gasf", "stft", "mixed")


@dataclass(frozen=True)
class ClassSpec:
    class_id: int
    impulse_rate: float  # events per second
    impulse_amplitude: float
    amplitude_jitter: float
    active_channels: tuple[int, ...]
    carrier_band: tuple[float, float]  # (low_hz, high_hz)
    noise_std: float

    def validate(self, channels: int, sample_rate: float) -> None:
        if self.impulse_rate <= 0:
            raise InvalidSpec(f"class {self.class_id}: impulse_rate must be > 0")
        if not (0 <= self.amplitude_jitter < 1):
            raise InvalidSpec(f"class {self.class_id}: amplitude_jitter must be in [0, 1)")
        if not self.active_channels:
            raise InvalidSpec(f"class {self.class_id}: active_channels is empty")
        if any(c < 0 or c >= channels for c in self.active_channels):
            raise InvalidSpec(f"class {self.class_id}: active channel out of 0..{channels - 1}")
        low, high = self.carrier_band
        if not (0 < low < high < sample_rate / 2):
            raise InvalidSpec(
                f"class {self.class_id}: carrier band {self.carrier_band} must satisfy "
                f"0 < low < high < sample_rate/2 = {sample_rate / 2}"
            )
        if self.noise_std < 0:
            raise InvalidSpec(f"class {self.class_id}: noise_std must be >= 0")


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    channels: int
    sample_rate: float
    duration_s: float
    train_per_class: int
    val_per_class: int
    test_per_class: int
    class_specs: tuple[ClassSpec, ...] = field(default_factory=tuple)

    def validate(self) -> None:
        if self.channels < 1:
            raise InvalidSpec("channels must be >= 1")
        if self.sample_rate <= 0 or self.duration_s <= 0:
            raise InvalidSpec("sample_rate and duration_s must be positive")
        if min(self.train_per_class, self.val_per_class, self.test_per_class) < 1:
            raise InvalidSpec("per-class split counts must be positive")
        if not self.class_specs:
            raise InvalidSpec("scenario needs at least one class")
        ids = sorted(c.class_id for c in self.class_specs)
        if ids != list(range(len(ids))):
            raise InvalidSpec(f"class ids must be contiguous from 0, got {ids}")
        for cs in self.class_specs:
            cs.validate(self.channels, self.sample_rate)

    @property
    def num_classes(self) -> int:
        return len(self.class_specs)

    def count_for(self, split: str) -> int:
        return {
            "train": self.train_per_class,
            "val": self.val_per_class,
            "test": self.test_per_class,
        }[split]


def _event_kernel(freq: float, sample_rate: float) -> np.ndarray:
    t = np.arange(0, KERNEL_SECONDS, 1.0 / sample_rate)
    return np.sin(2 * np.pi * freq * t) * np.exp(-KERNEL_DECAY_RATE * t)


def generate_record(spec: ScenarioSpec, cls: ClassSpec, rng: np.random.Generator) -> SignalRecord:
    """One labeled multi-channel sample drawn from a class description."""
    n = int(round(spec.sample_rate * spec.duration_s))
    data = rng.normal(0.0, cls.noise_std, size=(spec.channels, n))
    n_events = max(1, rng.poisson(cls.impulse_rate * spec.duration_s))
    active = np.array(cls.active_channels)
    for _ in range(n_events):
        start = int(rng.integers(0, n))
        freq = rng.uniform(*cls.carrier_band)
        amp = cls.impulse_amplitude * (1.0 + cls.amplitude_jitter * rng.uniform(-1.0, 1.0))
        epicenter = int(rng.choice(active))
        kernel = _event_kernel(freq, spec.sample_rate)
        seg = kernel[: n - start]
        for ch in active:
            data[ch, start : start + len(seg)] += amp * CHANNEL_ATTENUATION ** abs(ch - epicenter) * seg
    return SignalRecord(channels=data, sample_rate=spec.sample_rate, label=cls.class_id)


def _record_rng(seed: int, split: str, class_id: int, index: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence([seed, SPLITS.index(split), class_id, index])
    )


def _assemble(record: SignalRecord, representation: str, image_size: int,
              stft_window: int, stft_hop: int) -> ImageSample:
    if representation == "spatiotemporal":
        return assemble_spatiotemporal(record, image_size, image_size)
    energies = (record.channels ** 2).mean(axis=1)
    series = record.channels[int(np.argmax(energies))]
    if representation == "gasf":
        return gasf_transform(series, image_size, label=record.label)
    if representation == "stft":
        return stft_spectrogram(
            series, record.sample_rate, stft_window, stft_hop, image_size, label=record.label
        )
    raise InvalidSpec(f"unknown representation {representation!r}")


def generate_dataset(
    spec: ScenarioSpec,
    seed: int,
    out_dir: Path,
    image_size: int = 32,
    representation: str = "spatiotemporal",
    keep_raw: bool = False,
) -> Path:
    """Write train/val/test image splits (and optionally raw signals) to disk."""
    spec.validate()
    if representation not in REPRESENTATIONS:
        raise InvalidSpec(f"representation must be one of {REPRESENTATIONS}")
    out_dir = Path(out_dir)
    n = int(round(spec.sample_rate * spec.duration_s))
    stft_window = min(256, n)
    stft_hop = max(1, stft_window // 2)
    kinds = ("spatiotemporal", "gasf", "stft")
    for split in SPLITS:
        images = []
        raw = []
        counter = 0
        for cls in spec.class_specs:
            for index in range(spec.count_for(split)):
                rng = _record_rng(seed, split, cls.class_id, index)
                record = generate_record(spec, cls, rng)
                rep = kinds[counter % 3] if representation == "mixed" else representation
                images.append(_assemble(record, rep, image_size, stft_window, stft_hop))
                if keep_raw:
                    raw.append(
                        ImageSample(
                            pixels=record.channels[:, :, None].astype(np.float32),
                            label=record.label,
                            source_kind="raw",
                        )
                    )
                counter += 1
        write_split(out_dir / split, images)
        if keep_raw:
            write_split(out_dir / "raw" / split, raw)
    info = [
        f"name = {spec.name}",
        f"classes = {spec.num_classes}",
        f"channels = {spec.channels}",
        f"sample_rate = {spec.sample_rate}",
        f"duration_s = {spec.duration_s}",
        f"image_size = {image_size}",
        f"representation = {representation}",
        f"seed = {seed}",
    ]
    (out_dir / "dataset.info").write_text("\n".join(info) + "\n")
    return out_dir


def describe_dataset(path: Path) -> dict:
    """Summarize an on-disk dataset: counts, shapes, per-class energy."""
    path = Path(path)
    summary: dict = {"splits": {}}
    for split in SPLITS:
        split_dir = path / split
        if not split_dir.is_dir():
            continue
        records = read_manifest(split_dir)
        samples = load_split(split_dir)
        shapes = {s.pixels.shape for s in samples}
        by_class: dict[int, list[float]] = {}
        for s in samples:
            by_class.setdefault(int(s.label), []).append(float((s.pixels ** 2).mean()))
        summary["splits"][split] = {
            "count": len(records),
            "shapes": sorted(shapes),
            "class_counts": {k: len(v) for k, v in sorted(by_class.items())},
            "class_mean_energy": {k: float(np.mean(v)) for k, v in sorted(by_class.items())},
        }
    if not summary["splits"]:
        from .errors import CorruptManifest

        raise CorruptManifest(f"no split directories with manifests under {path}")
    summary["classes"] = sorted(
        {c for s in summary["splits"].values() for c in s["class_counts"]}
    )
    return summary


def default_gait_scenario(
    train_per_class: int = 80, val_per_class: int = 40, test_per_class: int = 300
) -> ScenarioSpec:
    """Six classes: three source-strength tiers x two carrier bands."""
    amps = (1.0, 2.5, 6.0)
    bands = ((30.0, 70.0), (90.0, 150.0))
    rates = (1.6, 3.2)
    actives = ((2, 3, 4, 5), (1, 2, 3, 4, 5, 6), (0, 1, 2, 3, 4, 5, 6, 7))
    specs = []
    for tier, amp in enumerate(amps):
        for b, band in enumerate(bands):
            specs.append(
                ClassSpec(
                    class_id=len(specs),
                    impulse_rate=rates[b],
                    impulse_amplitude=amp,
                    amplitude_jitter=0.15,
                    active_channels=actives[tier],
                    carrier_band=band,
                    noise_std=0.05,
                )
            )
    return ScenarioSpec(
        name="gait6",
        channels=8,
        sample_rate=500.0,
        duration_s=2.0,
        train_per_class=train_per_class,
        val_per_class=val_per_class,
        test_per_class=test_per_class,
        class_specs=tuple(specs),
    )


def default_leak_scenario(
    train_per_class: int = 60, val_per_class: int = 20, test_per_class: int = 80
) -> ScenarioSpec:
    """Four classes mirroring a leak/no-leak/impact/cut style task."""
    rows = [
        (3.0, 3.0, (60.0, 110.0), (3, 4)),       # steady mid-band emission
        (0.8, 0.4, (20.0, 45.0), (2, 3, 4, 5)),  # background murmur
        (1.2, 8.0, (25.0, 60.0), (0, 1, 2, 3, 4, 5, 6, 7)),  # sharp wideband impacts
        (5.0, 2.0, (130.0, 200.0), (4, 5, 6)),   # dense high-band chatter
    ]
    specs = [
        ClassSpec(
            class_id=i,
            impulse_rate=rate,
            impulse_amplitude=amp,
            amplitude_jitter=0.2,
            active_channels=active,
            carrier_band=band,
            noise_std=0.05,
        )
        for i, (rate, amp, band, active) in enumerate(rows)
    ]
    return ScenarioSpec(
        name="leak4",
        channels=8,
        sample_rate=500.0,
        duration_s=2.0,
        train_per_class=train_per_class,
        val_per_class=val_per_class,
        test_per_class=test_per_class,
        class_specs=tuple(specs),
    )


# -- scenario spec files ------------------------------------------------------

_SCALAR_KEYS = {
    "name": str,
    "channels": int,
    "sample_rate": float,
    "duration_s": float,
    "train_per_class": int,
    "val_per_class": int,
    "test_per_class": int,
}
_CLASS_KEYS = {
    "impulse_rate": float,
    "impulse_amplitude": float,
    "amplitude_jitter": float,
    "active_channels": "int_list",
    "carrier_band": "float_pair",
    "noise_std": float,
}


def parse_scenario_file(path: Path) -> ScenarioSpec:
    """Parse the flat `key = value` scenario format; unknown keys are errors."""
    path = Path(path)
    if not path.is_file():
        raise InvalidSpec(f"scenario file not found: {path}")
    scalars: dict = {}
    class_rows: dict[int, dict] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidSpec(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in _SCALAR_KEYS:
            scalars[key] = _SCALAR_KEYS[key](value)
            continue
        parts = key.split(".")
        if len(parts) == 3 and parts[0] == "class" and parts[2] in _CLASS_KEYS:
            try:
                cid = int(parts[1])
            except ValueError:
                raise InvalidSpec(f"{path}:{lineno}: bad class index in {key!r}") from None
            kind = _CLASS_KEYS[parts[2]]
            if kind == "int_list":
                parsed = tuple(int(v) for v in value.split(","))
            elif kind == "float_pair":
                nums = [float(v) for v in value.split(",")]
                if len(nums) != 2:
                    raise InvalidSpec(f"{path}:{lineno}: carrier_band needs two values")
                parsed = (nums[0], nums[1])
            else:
                parsed = kind(value)
            class_rows.setdefault(cid, {})[parts[2]] = parsed
            continue
        raise InvalidSpec(f"{path}:{lineno}: unknown key {key!r}")
    missing = set(_SCALAR_KEYS) - set(scalars)
    if missing:
        raise InvalidSpec(f"{path}: missing keys {sorted(missing)}")
    specs = []
    for cid in sorted(class_rows):
        row = class_rows[cid]
        missing = set(_CLASS_KEYS) - set(row)
        if missing:
            raise InvalidSpec(f"{path}: class {cid} missing {sorted(missing)}")
        specs.append(ClassSpec(class_id=cid, **row))
    spec = ScenarioSpec(class_specs=tuple(specs), **scalars)
    spec.validate()
    return spec


def write_scenario_file(spec: ScenarioSpec, path: Path) -> None:
    lines = [
        f"name = {spec.name}",
        f"channels = {spec.channels}",
        f"sample_rate = {spec.sample_rate}",
        f"duration_s = {spec.duration_s}",
        f"train_per_class = {spec.train_per_class}",
        f"val_per_class = {spec.val_per_class}",
        f"test_per_class = {spec.test_per_class}",
    ]
    for cs in spec.class_specs:
        prefix = f"class.{cs.class_id}"
        lines += [
            f"{prefix}.impulse_rate = {cs.impulse_rate}",
            f"{prefix}.impulse_amplitude = {cs.impulse_amplitude}",
            f"{prefix}.amplitude_jitter = {cs.amplitude_jitter}",
            f"{prefix}.active_channels = {','.join(str(c) for c in cs.active_channels)}",
            f"{prefix}.carrier_band = {cs.carrier_band[0]},{cs.carrier_band[1]}",
            f"{prefix}.noise_std = {cs.noise_std}",
        ]
    Path(path).write_text("\n".join(lines) + "\n")
