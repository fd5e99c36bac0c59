"""Supervised fine-tuning: SGD + momentum, linear lr scaling, cosine decay.

The optimizer only ever receives the method's trainable parameters, and a
byte-level snapshot of everything frozen is re-checked every epoch, so a
frozen parameter that moves is a hard error rather than a quiet bug.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .augment import augment_and_normalize
from .errors import (
    BadConfig,
    EmptyGrid,
    FrozenViolation,
    InsufficientData,
    InvalidSpec,
    LabelOutOfRange,
    NonFiniteLoss,
)
from .imaging import ImageSample
from .metrics import MetricsReport, compute_metrics
from .patches import patchify
from .vit import VisionTransformer
from .vpt import FinetuneMethod, PromptBank, apply_freeze, count_trainable, cross_entropy, vpt_forward


@dataclass(frozen=True)
class FinetuneSchedule:
    epochs: int = 200
    batch_size: int = 16
    base_lr: float = 0.5
    weight_decay: float = 0.0
    momentum: float = 0.9
    augment: bool = True

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidSpec("epochs and batch_size must be >= 1")
        if self.base_lr <= 0:
            raise InvalidSpec("base_lr must be positive")

    @property
    def effective_lr(self) -> float:
        return self.base_lr * self.batch_size / 256.0


def cosine_lr(epoch: int, total_epochs: int, peak_lr: float) -> float:
    return 0.5 * peak_lr * (1.0 + math.cos(math.pi * epoch / total_epochs))


def sample_label(sample: ImageSample) -> int:
    if sample.label is None or sample.label < 0:
        raise LabelOutOfRange("sample has no usable label")
    return int(sample.label)


def to_patch_tensors(
    samples: list[ImageSample],
    image_size: int,
    patch: int,
    train_mode: bool,
    seed: int = 0,
    epoch: int = 0,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Augment (train) or just normalize (eval), patchify, and stack.

    Train-mode randomness is a pure function of (seed, epoch, sample index).
    """
    rows = []
    labels = []
    for index, sample in enumerate(samples):
        rng = (
            np.random.default_rng(np.random.SeedSequence([seed, epoch, index]))
            if train_mode
            else None
        )
        prepared = augment_and_normalize(sample, train_mode, rng=rng, out_size=image_size)
        rows.append(patchify(prepared, patch).patches)
        labels.append(sample_label(sample))
    patches = torch.from_numpy(np.stack(rows).astype(np.float32))
    return patches, torch.tensor(labels, dtype=torch.long)


def forward_logits(
    model: VisionTransformer,
    bank: PromptBank | None,
    method: FinetuneMethod,
    patches: torch.Tensor,
) -> torch.Tensor:
    if method.kind == "VPT":
        return vpt_forward(model, bank, method.prompt_config, patches)
    return model(patches)


def _frozen_snapshot(modules: list[torch.nn.Module]) -> dict[str, bytes]:
    snap = {}
    for mi, module in enumerate(modules):
        for name, param in module.named_parameters():
            if not param.requires_grad:
                snap[f"{mi}.{name}"] = param.detach().cpu().numpy().tobytes()
    return snap


def _check_frozen(modules: list[torch.nn.Module], snapshot: dict[str, bytes]) -> None:
    current = _frozen_snapshot(modules)
    if current.keys() != snapshot.keys():
        raise FrozenViolation("the set of frozen parameters changed during training")
    for name, blob in snapshot.items():
        if current[name] != blob:
            raise FrozenViolation(f"frozen parameter {name} changed during training")


@dataclass
class FinetuneResult:
    log_rows: list[dict]
    best_epoch: int
    best_val_acc: float
    wall_clock_s: float


def finetune(
    model: VisionTransformer,
    bank: PromptBank | None,
    method: FinetuneMethod,
    train_samples: list[ImageSample],
    val_samples: list[ImageSample],
    schedule: FinetuneSchedule,
    seed: int,
    out_dir: Path | None = None,
) -> FinetuneResult:
    """Train; on return, model/bank hold the best-validation-epoch weights."""
    method.validate()
    schedule.validate()
    apply_freeze(model, bank, method)
    modules = [model] + ([bank] if bank is not None else [])
    frozen = _frozen_snapshot(modules)
    trainable = [p for mod in modules for p in mod.parameters() if p.requires_grad]
    optimizer = torch.optim.SGD(
        trainable,
        lr=schedule.effective_lr,
        momentum=schedule.momentum,
        weight_decay=schedule.weight_decay,
    )
    cfg = model.config
    val_patches, val_labels = to_patch_tensors(val_samples, cfg.image_size, cfg.patch_size, False)
    n = len(train_samples)
    rows: list[dict] = []
    best_val, best_epoch = -1.0, -1
    best_state = None
    start = time.perf_counter()
    for epoch in range(schedule.epochs):
        lr = cosine_lr(epoch, schedule.epochs, schedule.effective_lr)
        for group in optimizer.param_groups:
            group["lr"] = lr
        patches, labels = to_patch_tensors(
            train_samples, cfg.image_size, cfg.patch_size, schedule.augment, seed=seed, epoch=epoch
        )
        order = np.random.default_rng(np.random.SeedSequence([seed, epoch, n])).permutation(n)
        losses, hits = [], 0
        for bstart in range(0, n, schedule.batch_size):
            idx = torch.as_tensor(order[bstart : bstart + schedule.batch_size], dtype=torch.long)
            logits = forward_logits(model, bank, method, patches[idx])
            loss = cross_entropy(logits, labels[idx])
            if not torch.isfinite(loss):
                raise NonFiniteLoss(f"training loss became {loss.item()} at epoch {epoch}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
            hits += int((logits.detach().argmax(dim=1) == labels[idx]).sum())
        with torch.no_grad():
            val_logits = forward_logits(model, bank, method, val_patches)
        val_acc = float((val_logits.argmax(dim=1) == val_labels).float().mean())
        rows.append(
            {
                "epoch": epoch,
                "train_loss": float(np.mean(losses)),
                "train_acc": hits / n,
                "val_acc": val_acc,
                "lr": lr,
            }
        )
        if val_acc > best_val:  # ties keep the earliest epoch
            best_val, best_epoch = val_acc, epoch
            best_state = [
                {k: v.detach().clone() for k, v in mod.state_dict().items()} for mod in modules
            ]
        _check_frozen(modules, frozen)
    wall = time.perf_counter() - start
    for mod, state in zip(modules, best_state):
        mod.load_state_dict(state)
    _check_frozen(modules, frozen)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "train_log.csv", "w", newline="") as fh:
            writer = csv.DictWriter(
                fh, fieldnames=["epoch", "train_loss", "train_acc", "val_acc", "lr"]
            )
            writer.writeheader()
            writer.writerows(rows)
        (out_dir / "timing.csv").write_text("phase,seconds\nfinetune,%.3f\n" % wall)
    return FinetuneResult(rows, best_epoch, best_val, wall)


def evaluate_model(
    model: VisionTransformer,
    bank: PromptBank | None,
    method: FinetuneMethod,
    samples: list[ImageSample],
    batch_size: int = 64,
) -> MetricsReport:
    """Deterministic eval-mode metrics (no augmentation, no gradient)."""
    method.validate()
    cfg = model.config
    start = time.perf_counter()
    patches, labels = to_patch_tensors(samples, cfg.image_size, cfg.patch_size, False)
    preds = []
    with torch.no_grad():
        for bstart in range(0, len(samples), batch_size):
            logits = forward_logits(model, bank, method, patches[bstart : bstart + batch_size])
            preds.append(logits.argmax(dim=1))
    preds = torch.cat(preds).numpy()
    counted = count_trainable(method, cfg)
    return compute_metrics(
        labels.numpy(),
        preds,
        cfg.num_classes,
        trainable_count=counted.count,
        trainable_fraction=counted.fraction,
        wall_clock_s=time.perf_counter() - start,
    )


def grid_search(
    run_point,
    base_lrs: list[float],
    weight_decays: list[float],
    csv_path: Path | None = None,
) -> tuple[float, float, list[dict]]:
    """Train one run per (base_lr, weight_decay) and return the best point.

    `run_point(base_lr, weight_decay)` returns (val_acc, wall_clock_s) and may
    raise NonFiniteLoss; diverged points fold out of the comparison. Ties go
    to the lower base_lr, then the lower weight decay.
    """
    if not base_lrs or not weight_decays:
        raise EmptyGrid("grid search needs at least one base_lr and one weight_decay")
    rows = []
    for base_lr in base_lrs:
        for wd in weight_decays:
            try:
                val_acc, wall = run_point(base_lr, wd)
            except NonFiniteLoss:
                val_acc, wall = float("nan"), float("nan")
            rows.append(
                {"base_lr": base_lr, "weight_decay": wd, "val_acc": val_acc, "wall_clock_s": wall}
            )
    if csv_path is not None:
        csv_path = Path(csv_path)
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        with open(csv_path, "w", newline="") as fh:
            writer = csv.DictWriter(
                fh, fieldnames=["base_lr", "weight_decay", "val_acc", "wall_clock_s"]
            )
            writer.writeheader()
            writer.writerows(rows)
    survivors = [r for r in rows if not math.isnan(r["val_acc"])]
    if not survivors:
        raise NonFiniteLoss("every grid point diverged")
    best = min(survivors, key=lambda r: (-r["val_acc"], r["base_lr"], r["weight_decay"]))
    return best["base_lr"], best["weight_decay"], rows


def nested_subset_indices(
    labels: list[int], size: int, num_classes: int, seed: int
) -> list[int]:
    """Class-balanced subset of `size` samples; smaller sizes prefix larger ones."""
    if size % num_classes != 0:
        raise BadConfig(f"subset size {size} not divisible by {num_classes} classes")
    per_class = size // num_classes
    by_class: dict[int, list[int]] = {}
    for index, label in enumerate(labels):
        by_class.setdefault(label, []).append(index)
    chosen: list[int] = []
    for cls in range(num_classes):
        pool = by_class.get(cls, [])
        if len(pool) < per_class:
            raise InsufficientData(
                f"class {cls} has {len(pool)} train samples, need {per_class}"
            )
        rng = np.random.default_rng(np.random.SeedSequence([seed, cls]))
        order = rng.permutation(len(pool))
        chosen.extend(pool[i] for i in order[:per_class])
    return sorted(chosen)
