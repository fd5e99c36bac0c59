"""Masked-autoencoder pretraining.

The encoder only ever sees the class token plus the visible patches; the
decoder re-inflates the sequence with a shared mask token, re-applies its own
position embeddings, and predicts raw pixels. The loss averages squared error
over masked pixels only, so anything the decoder says about visible patches
is free.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import InvalidSpec, NonFiniteLoss, RatioOutOfRange, ShapeMismatch
from .vit import INIT_STD, Block, ModelConfig, VisionTransformer, count_parameters


@dataclass(frozen=True)
class MaskPartition:
    visible_indices: tuple[int, ...]
    masked_indices: tuple[int, ...]
    ratio: float


def random_mask(m: int, ratio: float, rng: np.random.Generator) -> MaskPartition:
    """Uniform without-replacement partition with |masked| = round(ratio * m)."""
    if not 0.0 <= ratio <= 1.0:
        raise RatioOutOfRange(f"mask ratio {ratio} outside [0, 1]")
    num_masked = int(math.floor(ratio * m + 0.5))
    perm = rng.permutation(m)
    masked = np.sort(perm[:num_masked])
    visible = np.sort(perm[num_masked:])
    return MaskPartition(tuple(int(i) for i in visible), tuple(int(i) for i in masked), ratio)


def batch_masks(m: int, ratio: float, rngs: list[np.random.Generator]) -> tuple[np.ndarray, np.ndarray]:
    """Stack one fresh partition per image: (b, |visible|), (b, |masked|)."""
    parts = [random_mask(m, ratio, rng) for rng in rngs]
    vis = np.stack([p.visible_indices for p in parts]).astype(np.int64)
    masked = np.stack([p.masked_indices for p in parts]).astype(np.int64)
    return vis, masked


@dataclass(frozen=True)
class DecoderConfig:
    d_dec: int = 32
    depth_dec: int = 2
    heads_dec: int = 4

    def validate(self) -> None:
        if self.d_dec < 1 or self.depth_dec < 1:
            raise InvalidSpec("d_dec and depth_dec must be >= 1")
        if self.d_dec % self.heads_dec != 0:
            raise InvalidSpec(f"d_dec {self.d_dec} not divisible by heads_dec {self.heads_dec}")


def base_companion_decoder() -> DecoderConfig:
    """Accounting-only companion to the base encoder; never trained here."""
    return DecoderConfig(d_dec=512, depth_dec=8, heads_dec=16)


class MaskedAutoencoder(nn.Module):
    def __init__(
        self,
        encoder_config: ModelConfig,
        decoder_config: DecoderConfig,
        generator: torch.Generator | None = None,
    ):
        super().__init__()
        decoder_config.validate()
        self.decoder_config = decoder_config
        self.encoder = VisionTransformer(encoder_config, generator=generator)
        d_dec = decoder_config.d_dec
        m = encoder_config.num_patches
        self.decoder_embed = nn.Linear(encoder_config.d_model, d_dec)
        self.mask_token = nn.Parameter(torch.zeros(1, 1, d_dec))
        self.decoder_pos_embed = nn.Parameter(torch.zeros(1, 1 + m, d_dec))
        self.decoder_blocks = nn.ModuleList(
            Block(d_dec, decoder_config.heads_dec, d_dec * 4)
            for _ in range(decoder_config.depth_dec)
        )
        self.decoder_norm = nn.LayerNorm(d_dec)
        self.decoder_pred = nn.Linear(d_dec, encoder_config.patch_dim)
        self._init_decoder(generator)

    def _init_decoder(self, generator: torch.Generator | None) -> None:
        for module in (self.decoder_embed, self.decoder_pred, *self.decoder_blocks, self.decoder_norm):
            for sub in module.modules():
                if isinstance(sub, nn.Linear):
                    nn.init.trunc_normal_(sub.weight, std=INIT_STD, generator=generator)
                    nn.init.zeros_(sub.bias)
                elif isinstance(sub, nn.LayerNorm):
                    nn.init.ones_(sub.weight)
                    nn.init.zeros_(sub.bias)
        nn.init.trunc_normal_(self.mask_token, std=INIT_STD, generator=generator)
        nn.init.trunc_normal_(self.decoder_pos_embed, std=INIT_STD, generator=generator)

    def forward(
        self, patches: torch.Tensor, visible_idx: torch.Tensor, masked_idx: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """patches (b, m, patch_dim) with per-image index rows -> (reconstruction, loss)."""
        b, m, patch_dim = patches.shape
        if m != self.encoder.config.num_patches or patch_dim != self.encoder.config.patch_dim:
            raise ShapeMismatch(
                f"expected (b, {self.encoder.config.num_patches}, {self.encoder.config.patch_dim}),"
                f" got {tuple(patches.shape)}"
            )
        d_dec = self.decoder_config.d_dec
        visible = patches.gather(1, visible_idx[:, :, None].expand(-1, -1, patch_dim))
        tokens = self.encoder.forward_tokens(self.encoder.embed(visible, visible_idx))
        tokens = self.decoder_embed(tokens)  # (b, 1 + |visible|, d_dec)

        full = self.mask_token.expand(b, m, d_dec)
        full = full.scatter(1, visible_idx[:, :, None].expand(-1, -1, d_dec), tokens[:, 1:])
        seq = torch.cat([tokens[:, :1], full], dim=1) + self.decoder_pos_embed
        for block in self.decoder_blocks:
            seq = block(seq)
        recon = self.decoder_pred(self.decoder_norm(seq))[:, 1:]

        sq = (recon - patches) ** 2
        loss = sq.gather(1, masked_idx[:, :, None].expand(-1, -1, patch_dim)).mean()
        return recon, loss


def mae_forward(
    model: MaskedAutoencoder, patches: torch.Tensor, mask: MaskPartition
) -> tuple[torch.Tensor, torch.Tensor]:
    """Single-partition wrapper: accepts (m, D) or (b, m, D) sharing one mask."""
    single = patches.dim() == 2
    if single:
        patches = patches[None]
    b = patches.shape[0]
    vis = torch.as_tensor(mask.visible_indices, dtype=torch.long).expand(b, -1)
    masked = torch.as_tensor(mask.masked_indices, dtype=torch.long).expand(b, -1)
    recon, loss = model(patches, vis, masked)
    return (recon[0] if single else recon), loss


def masked_mse(recon: torch.Tensor, target: torch.Tensor, mask: MaskPartition) -> torch.Tensor:
    """Mean squared error over masked patches only (reference reduction)."""
    idx = torch.as_tensor(mask.masked_indices, dtype=torch.long)
    return ((recon[..., idx, :] - target[..., idx, :]) ** 2).mean()


@dataclass(frozen=True)
class PretrainSchedule:
    epochs: int = 100
    batch_size: int = 16
    lr: float = 0.001
    weight_decay: float = 0.05
    warmup_frac: float = 0.05
    mask_ratio: float = 0.75

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidSpec("epochs and batch_size must be >= 1")
        if not 0.0 <= self.mask_ratio <= 1.0:
            raise RatioOutOfRange(f"mask ratio {self.mask_ratio} outside [0, 1]")
        if not 0.0 <= self.warmup_frac < 1.0:
            raise InvalidSpec("warmup_frac must be in [0, 1)")


def warmup_cosine_lr(step: int, total_steps: int, base_lr: float, warmup_steps: int) -> float:
    if step < warmup_steps:
        return base_lr * (step + 1) / warmup_steps
    span = max(1, total_steps - warmup_steps)
    return 0.5 * base_lr * (1.0 + math.cos(math.pi * (step - warmup_steps) / span))


def pretrain(
    model: MaskedAutoencoder,
    patch_tensor: torch.Tensor,
    schedule: PretrainSchedule,
    seed: int,
    log_path: Path | None = None,
) -> list[dict]:
    """Run the mask -> encode -> decode -> MSE -> AdamW loop over a patch tensor.

    `patch_tensor` is the full pool, (n, m, patch_dim) float32. Masks are fresh
    per image per epoch, derived from (seed, epoch, image index). Returns the
    per-epoch log rows; optionally writes them as CSV.
    """
    schedule.validate()
    n = patch_tensor.shape[0]
    m = model.encoder.config.num_patches
    optimizer = torch.optim.AdamW(
        [p for p in model.parameters() if p.requires_grad],
        lr=schedule.lr,
        betas=(0.9, 0.999),
        weight_decay=schedule.weight_decay,
    )
    steps_per_epoch = math.ceil(n / schedule.batch_size)
    total_steps = schedule.epochs * steps_per_epoch
    warmup_steps = max(1, round(schedule.warmup_frac * total_steps))
    rows = []
    step = 0
    start = time.perf_counter()
    for epoch in range(schedule.epochs):
        order = np.random.default_rng(np.random.SeedSequence([seed, epoch])).permutation(n)
        losses = []
        epoch_lr = warmup_cosine_lr(step, total_steps, schedule.lr, warmup_steps)
        for batch_start in range(0, n, schedule.batch_size):
            idx = order[batch_start : batch_start + schedule.batch_size]
            lr = warmup_cosine_lr(step, total_steps, schedule.lr, warmup_steps)
            for group in optimizer.param_groups:
                group["lr"] = lr
            rngs = [
                np.random.default_rng(np.random.SeedSequence([seed, epoch, int(i)])) for i in idx
            ]
            vis, masked = batch_masks(m, schedule.mask_ratio, rngs)
            batch = patch_tensor[torch.as_tensor(idx, dtype=torch.long)]
            _, loss = model(batch, torch.from_numpy(vis), torch.from_numpy(masked))
            if not torch.isfinite(loss):
                raise NonFiniteLoss(f"pretraining loss became {loss.item()} at step {step}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
            step += 1
        rows.append({"epoch": epoch, "mean_loss": float(np.mean(losses)), "lr": epoch_lr})
    wall = time.perf_counter() - start
    if log_path is not None:
        log_path = Path(log_path)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        with open(log_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["epoch", "mean_loss", "lr"])
            writer.writeheader()
            writer.writerows(rows)
        (log_path.parent / "timing.csv").write_text(
            "phase,seconds\npretrain,%.3f\n" % wall
        )
    return rows


def mae_parameter_total(encoder_config: ModelConfig, decoder_config: DecoderConfig) -> int:
    """Closed-form parameter count for encoder + decoder (accounting only)."""
    decoder_config.validate()
    d = encoder_config.d_model
    dd = decoder_config.d_dec
    m = encoder_config.num_patches
    per_block = 2 * dd + 3 * (dd * dd + dd) + dd * dd + dd + 2 * dd + dd * (4 * dd) + 4 * dd + 4 * dd * dd + dd
    decoder = (
        d * dd + dd          # projection into decoder width
        + dd                 # mask token
        + (1 + m) * dd       # decoder position table
        + decoder_config.depth_dec * per_block
        + 2 * dd             # decoder final norm
        + dd * encoder_config.patch_dim + encoder_config.patch_dim
    )
    return count_parameters(encoder_config)["total"] + decoder
