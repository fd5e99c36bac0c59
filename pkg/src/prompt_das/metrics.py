"""Evaluation metrics and their CSV persistence.

metrics.csv holds only deterministic quantities so byte-identical reruns can
be asserted; wall-clock goes to a separate timing.csv.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorruptManifest, LabelOutOfRange, ShapeMismatch

METRICS_FILENAME = "metrics.csv"
TIMING_FILENAME = "timing.csv"


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    per_class_accuracy: tuple[float, ...]
    confusion: np.ndarray  # rows = true class, cols = predicted class
    trainable_count: int
    trainable_fraction: float
    wall_clock_s: float | None = None

    @property
    def num_classes(self) -> int:
        return self.confusion.shape[0]


def compute_metrics(
    labels: np.ndarray,
    predictions: np.ndarray,
    num_classes: int,
    trainable_count: int = 0,
    trainable_fraction: float = 0.0,
    wall_clock_s: float | None = None,
) -> MetricsReport:
    labels = np.asarray(labels, dtype=np.int64)
    predictions = np.asarray(predictions, dtype=np.int64)
    if labels.shape != predictions.shape:
        raise ShapeMismatch(f"labels {labels.shape} vs predictions {predictions.shape}")
    if labels.size == 0:
        raise ShapeMismatch("cannot compute metrics over zero samples")
    for arr, what in ((labels, "label"), (predictions, "prediction")):
        if arr.min() < 0 or arr.max() >= num_classes:
            raise LabelOutOfRange(f"{what} outside 0..{num_classes - 1}")
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (labels, predictions), 1)
    row_sums = confusion.sum(axis=1)
    per_class = tuple(
        float(confusion[c, c] / row_sums[c]) if row_sums[c] else 0.0 for c in range(num_classes)
    )
    accuracy = float(np.trace(confusion) / labels.size)
    return MetricsReport(
        accuracy=accuracy,
        per_class_accuracy=per_class,
        confusion=confusion,
        trainable_count=trainable_count,
        trainable_fraction=trainable_fraction,
        wall_clock_s=wall_clock_s,
    )


def write_metrics_csv(report: MetricsReport, out_dir: Path) -> Path:
    """Persist as kind,i,j,value rows; timing (if any) goes to timing.csv."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / METRICS_FILENAME
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "i", "j", "value"])
        writer.writerow(["overall_accuracy", "", "", repr(report.accuracy)])
        for c, acc in enumerate(report.per_class_accuracy):
            writer.writerow(["per_class_accuracy", c, "", repr(acc)])
        for i in range(report.num_classes):
            for j in range(report.num_classes):
                writer.writerow(["confusion", i, j, int(report.confusion[i, j])])
        writer.writerow(["trainable_count", "", "", report.trainable_count])
        writer.writerow(["trainable_fraction", "", "", repr(report.trainable_fraction)])
    if report.wall_clock_s is not None:
        (out_dir / TIMING_FILENAME).write_text("phase,seconds\neval,%.3f\n" % report.wall_clock_s)
    return path


def read_metrics_csv(path: Path) -> MetricsReport:
    path = Path(path)
    if not path.is_file():
        raise CorruptManifest(f"metrics file not found: {path}")
    cells: dict[str, list] = {"per_class": [], "confusion": []}
    scalars: dict[str, float] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["kind", "i", "j", "value"]:
            raise CorruptManifest(f"{path}: unexpected metrics header {header}")
        for row in reader:
            if len(row) != 4:
                raise CorruptManifest(f"{path}: malformed row {row}")
            kind, i, j, value = row
            if kind == "per_class_accuracy":
                cells["per_class"].append((int(i), float(value)))
            elif kind == "confusion":
                cells["confusion"].append((int(i), int(j), int(value)))
            else:
                scalars[kind] = float(value)
    if "overall_accuracy" not in scalars or not cells["confusion"]:
        raise CorruptManifest(f"{path}: incomplete metrics file")
    n = max(i for i, _, _ in cells["confusion"]) + 1
    confusion = np.zeros((n, n), dtype=np.int64)
    for i, j, v in cells["confusion"]:
        confusion[i, j] = v
    per_class = tuple(v for _, v in sorted(cells["per_class"]))
    return MetricsReport(
        accuracy=scalars["overall_accuracy"],
        per_class_accuracy=per_class,
        confusion=confusion,
        trainable_count=int(scalars.get("trainable_count", 0)),
        trainable_fraction=scalars.get("trainable_fraction", 0.0),
        wall_clock_s=None,
    )
