"""A small Vision Transformer written from primitives.

Pre-norm blocks, learned position embeddings, a class token, and a linear
classification head. The desk-scale preset keeps everything small enough to
finite-difference check; the base preset exists so the parameter accounting
can be validated against the well-known 85.8M figure.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .errors import InvalidSpec

INIT_STD = 0.02


@dataclass(frozen=True)
class ModelConfig:
    image_size: int = 32
    patch_size: int = 8
    d_model: int = 64
    depth: int = 4
    n_heads: int = 4
    mlp_ratio: float = 4.0
    num_classes: int = 6
    in_channels: int = 3

    def validate(self) -> None:
        if self.image_size % self.patch_size != 0:
            raise InvalidSpec(
                f"image_size {self.image_size} not divisible by patch_size {self.patch_size}"
            )
        if self.d_model % self.n_heads != 0:
            raise InvalidSpec(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if min(self.depth, self.num_classes, self.in_channels) < 1:
            raise InvalidSpec("depth, num_classes and in_channels must be >= 1")
        if self.mlp_ratio <= 0:
            raise InvalidSpec("mlp_ratio must be positive")

    @property
    def grid(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_patches(self) -> int:
        return self.grid * self.grid

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * self.in_channels

    @property
    def mlp_hidden(self) -> int:
        return int(self.d_model * self.mlp_ratio)


def desk_config(**overrides) -> ModelConfig:
    return ModelConfig(**overrides)


def vit_base_config(num_classes: int = 6) -> ModelConfig:
    return ModelConfig(
        image_size=224,
        patch_size=16,
        d_model=768,
        depth=12,
        n_heads=12,
        mlp_ratio=4.0,
        num_classes=num_classes,
    )


def count_parameters(config: ModelConfig) -> dict[str, int]:
    """Closed-form parameter ledger; must agree with the built module exactly."""
    config.validate()
    d = config.d_model
    h = config.mlp_hidden
    per_block = (
        2 * d            # first layer norm
        + 3 * (d * d + d)  # fused qkv projection with bias
        + d * d + d        # attention output projection
        + 2 * d            # second layer norm
        + d * h + h        # mlp expand
        + h * d + d        # mlp contract
    )
    ledger = {
        "patch_embed": config.patch_dim * d + d,
        "class_token": d,
        "pos_embed": (1 + config.num_patches) * d,
        "blocks": config.depth * per_block,
        "final_norm": 2 * d,
        "head": d * config.num_classes + config.num_classes,
    }
    ledger["total"] = sum(ledger.values())
    return ledger


class Attention(nn.Module):
    """Multi-head self-attention over arbitrary-length token sequences."""

    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.n_heads = n_heads
        self.head_dim = d_model // n_heads
        self.scale = self.head_dim ** -0.5
        self.qkv = nn.Linear(d_model, 3 * d_model)
        self.proj = nn.Linear(d_model, d_model)

    def forward(self, x: torch.Tensor, return_weights: bool = False):
        b, n, d = x.shape
        qkv = self.qkv(x).reshape(b, n, 3, self.n_heads, self.head_dim)
        q, k, v = (qkv[:, :, i].transpose(1, 2) for i in range(3))  # (b, heads, n, hd)
        attn = torch.softmax(q @ k.transpose(-2, -1) * self.scale, dim=-1)
        out = self.proj((attn @ v).transpose(1, 2).reshape(b, n, d))
        if return_weights:
            return out, attn
        return out


class Mlp(nn.Module):
    def __init__(self, d_model: int, hidden: int):
        super().__init__()
        self.fc1 = nn.Linear(d_model, hidden)
        self.fc2 = nn.Linear(hidden, d_model)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(nn.functional.gelu(self.fc1(x)))


class Block(nn.Module):
    """Pre-norm transformer block: residual attention then residual MLP."""

    def __init__(self, d_model: int, n_heads: int, hidden: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(d_model)
        self.attn = Attention(d_model, n_heads)
        self.norm2 = nn.LayerNorm(d_model)
        self.mlp = Mlp(d_model, hidden)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class VisionTransformer(nn.Module):
    def __init__(self, config: ModelConfig, generator: torch.Generator | None = None):
        super().__init__()
        config.validate()
        self.config = config
        d = config.d_model
        self.patch_embed = nn.Linear(config.patch_dim, d)
        self.cls_token = nn.Parameter(torch.zeros(1, 1, d))
        self.pos_embed = nn.Parameter(torch.zeros(1, 1 + config.num_patches, d))
        self.blocks = nn.ModuleList(
            Block(d, config.n_heads, config.mlp_hidden) for _ in range(config.depth)
        )
        self.norm = nn.LayerNorm(d)
        self.head = nn.Linear(d, config.num_classes)
        self.reset_parameters(generator)

    def reset_parameters(self, generator: torch.Generator | None = None) -> None:
        for module in self.modules():
            if isinstance(module, nn.Linear):
                nn.init.trunc_normal_(module.weight, std=INIT_STD, generator=generator)
                nn.init.zeros_(module.bias)
            elif isinstance(module, nn.LayerNorm):
                nn.init.ones_(module.weight)
                nn.init.zeros_(module.bias)
        nn.init.zeros_(self.cls_token)
        nn.init.trunc_normal_(self.pos_embed, std=INIT_STD, generator=generator)

    def embed(self, patches: torch.Tensor, patch_indices: torch.Tensor | None = None) -> torch.Tensor:
        """Project patches and prepend the class token, adding position embeddings.

        `patch_indices` selects which position slots the supplied patches occupy
        (used when only a visible subset is encoded); positions are never added
        to anything except the class token and patch tokens.
        """
        b = patches.shape[0]
        tokens = self.patch_embed(patches)
        if patch_indices is None:
            tokens = tokens + self.pos_embed[:, 1:]
        elif patch_indices.dim() == 1:
            tokens = tokens + self.pos_embed[:, 1:][:, patch_indices]
        else:  # (b, k): a different visible subset per image
            pos = self.pos_embed[:, 1:].expand(b, -1, -1)
            tokens = tokens + pos.gather(1, patch_indices[:, :, None].expand(-1, -1, tokens.shape[-1]))
        cls = (self.cls_token + self.pos_embed[:, :1]).expand(b, -1, -1)
        return torch.cat([cls, tokens], dim=1)

    def forward_tokens(self, x: torch.Tensor) -> torch.Tensor:
        for block in self.blocks:
            x = block(x)
        return self.norm(x)

    def features(self, patches: torch.Tensor) -> torch.Tensor:
        """Final-norm class-token representation, shape (b, d_model)."""
        return self.forward_tokens(self.embed(patches))[:, 0]

    def forward(self, patches: torch.Tensor) -> torch.Tensor:
        return self.head(self.features(patches))

    def num_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())


def build_model(config: ModelConfig, seed: int = 0) -> VisionTransformer:
    generator = torch.Generator().manual_seed(seed)
    model = VisionTransformer(config, generator=generator)
    expected = count_parameters(config)["total"]
    actual = model.num_parameters()
    if actual != expected:  # accounting drift is a bug, not a warning
        raise InvalidSpec(f"parameter ledger mismatch: built {actual}, expected {expected}")
    return model


def set_determinism() -> None:
    torch.manual_seed(0)
    torch.set_num_threads(1)
    torch.use_deterministic_algorithms(True)
