"""Metrics: confusion accounting and byte-stable CSV persistence."""

import numpy as np
import pytest

from prompt_das.errors import CorruptManifest, LabelOutOfRange, ShapeMismatch
from prompt_das.metrics import (
    MetricsReport,
    compute_metrics,
    read_metrics_csv,
    write_metrics_csv,
)


class TestCompute:
    def test_hand_example(self):
        report = compute_metrics([0, 0, 1, 2], [0, 1, 1, 2], 3)
        assert report.accuracy == 0.75
        assert report.per_class_accuracy == (0.5, 1.0, 1.0)
        assert report.confusion.tolist() == [[1, 1, 0], [0, 1, 0], [0, 0, 1]]

    def test_confusion_rows_sum_to_class_counts(self):
        rng = np.random.default_rng(0)
        labels = rng.integers(0, 4, size=200)
        preds = rng.integers(0, 4, size=200)
        report = compute_metrics(labels, preds, 4)
        assert report.confusion.sum() == 200
        assert np.array_equal(report.confusion.sum(axis=1), np.bincount(labels, minlength=4))
        assert report.accuracy == np.trace(report.confusion) / 200

    def test_absent_class_scores_zero(self):
        report = compute_metrics([0, 0], [0, 0], 3)
        assert report.per_class_accuracy == (1.0, 0.0, 0.0)

    def test_perfect_and_worst(self):
        assert compute_metrics([0, 1, 2], [0, 1, 2], 3).accuracy == 1.0
        assert compute_metrics([0, 1, 2], [1, 2, 0], 3).accuracy == 0.0

    def test_errors(self):
        with pytest.raises(ShapeMismatch):
            compute_metrics([0, 1], [0], 2)
        with pytest.raises(ShapeMismatch):
            compute_metrics([], [], 2)
        with pytest.raises(LabelOutOfRange):
            compute_metrics([0, 3], [0, 1], 3)
        with pytest.raises(LabelOutOfRange):
            compute_metrics([0, 1], [0, 5], 3)


class TestCsv:
    def make_report(self, wall=None):
        return compute_metrics(
            [0, 0, 1, 2, 2, 2], [0, 1, 1, 2, 2, 0], 3,
            trainable_count=512, trainable_fraction=512 / 213958, wall_clock_s=wall,
        )

    def test_round_trip_is_exact(self, tmp_path):
        report = self.make_report()
        path = write_metrics_csv(report, tmp_path)
        loaded = read_metrics_csv(path)
        assert loaded.accuracy == report.accuracy
        assert loaded.per_class_accuracy == report.per_class_accuracy
        assert np.array_equal(loaded.confusion, report.confusion)
        assert loaded.trainable_count == 512
        assert loaded.trainable_fraction == report.trainable_fraction

    def test_wall_clock_never_touches_metrics_csv(self, tmp_path):
        a = write_metrics_csv(self.make_report(wall=1.234), tmp_path / "a").read_bytes()
        b = write_metrics_csv(self.make_report(wall=99.9), tmp_path / "b").read_bytes()
        assert a == b
        assert (tmp_path / "a" / "timing.csv").is_file()
        assert b"1.234" not in a

    def test_no_timing_file_without_wall_clock(self, tmp_path):
        write_metrics_csv(self.make_report(wall=None), tmp_path)
        assert not (tmp_path / "timing.csv").exists()

    def test_read_missing(self, tmp_path):
        with pytest.raises(CorruptManifest):
            read_metrics_csv(tmp_path / "metrics.csv")

    def test_read_bad_header(self, tmp_path):
        path = tmp_path / "metrics.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(CorruptManifest):
            read_metrics_csv(path)

    def test_read_malformed_row(self, tmp_path):
        path = write_metrics_csv(self.make_report(), tmp_path)
        path.write_text(path.read_text() + "confusion,0\n")
        with pytest.raises(CorruptManifest):
            read_metrics_csv(path)

    def test_read_incomplete(self, tmp_path):
        path = tmp_path / "metrics.csv"
        path.write_text("kind,i,j,value\noverall_accuracy,,,0.5\n")
        with pytest.raises(CorruptManifest):
            read_metrics_csv(path)
