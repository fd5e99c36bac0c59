"""Visual prompt tuning over a frozen encoder.

Prompts sit between the class token and the patches at each inserted layer's
input and are dropped from that layer's output, so every block hands exactly
1 + m rows to its successor. `carry_prompt_outputs` restores the original
carry-through behavior for the shallow variant only; the two conventions
coincide at depth 1 with discard semantics.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .errors import ConfigMismatch, DepthOutOfRange, InvalidSpec, LabelOutOfRange
from .vit import ModelConfig, VisionTransformer, count_parameters

VARIANTS = ("shallow", "deep")
STRATEGIES = ("bottom_top", "top_bottom")
METHOD_KINDS = ("FullFineTune", "LinearProbe", "VPT")


@dataclass(frozen=True)
class PromptConfig:
    variant: str = "deep"
    p: int = 30
    strategy: str = "bottom_top"
    depth: int | None = None  # None = all layers for deep; shallow is always 1
    carry_prompt_outputs: bool = False

    def validate(self, n_layers: int) -> None:
        if self.variant not in VARIANTS:
            raise InvalidSpec(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.strategy not in STRATEGIES:
            raise InvalidSpec(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.p < 0:
            raise InvalidSpec(f"prompt count p must be >= 0, got {self.p}")
        if self.variant == "shallow":
            if self.depth not in (None, 1):
                raise ConfigMismatch("shallow prompts always live at layer 1; depth is fixed")
        elif self.carry_prompt_outputs:
            raise ConfigMismatch("carry_prompt_outputs is a shallow-only compatibility flag")
        depth = self.resolved_depth(n_layers)
        if not 1 <= depth <= n_layers:
            raise DepthOutOfRange(f"depth {depth} outside 1..{n_layers}")

    def resolved_depth(self, n_layers: int) -> int:
        if self.variant == "shallow":
            return 1
        return n_layers if self.depth is None else self.depth


def select_inserted_layers(cfg: PromptConfig, n_layers: int) -> tuple[int, ...]:
    """1-based layer indices receiving prompts."""
    cfg.validate(n_layers)
    depth = cfg.resolved_depth(n_layers)
    if cfg.variant == "shallow" or cfg.strategy == "bottom_top":
        return tuple(range(1, depth + 1))
    return tuple(range(n_layers - depth + 1, n_layers + 1))


class PromptBank(nn.Module):
    """One p x d prompt matrix per inserted layer, Xavier-uniform initialized."""

    def __init__(
        self,
        cfg: PromptConfig,
        d_model: int,
        n_layers: int,
        generator: torch.Generator | None = None,
    ):
        super().__init__()
        self.cfg = cfg
        self.d_model = d_model
        self.inserted_layers = select_inserted_layers(cfg, n_layers)
        self.prompts = nn.ParameterList(
            nn.Parameter(torch.empty(cfg.p, d_model)) for _ in self.inserted_layers
        )
        for param in self.prompts:
            nn.init.xavier_uniform_(param, generator=generator)
        self._slot = {layer: i for i, layer in enumerate(self.inserted_layers)}

    def layer_prompts(self, layer: int) -> torch.Tensor:
        return self.prompts[self._slot[layer]]

    def prompt_parameters(self) -> int:
        return sum(p.numel() for p in self.prompts)


def vpt_forward(
    encoder: VisionTransformer,
    bank: PromptBank | None,
    cfg: PromptConfig,
    patches: torch.Tensor,
) -> torch.Tensor:
    """Run the frozen encoder with prompts inserted per cfg; returns logits."""
    n_layers = len(encoder.blocks)
    inserted = select_inserted_layers(cfg, n_layers)
    if bank is None:
        raise ConfigMismatch("VPT forward requires a PromptBank")
    if bank.d_model != encoder.config.d_model:
        raise ConfigMismatch(
            f"prompt width {bank.d_model} != encoder width {encoder.config.d_model}"
        )
    if bank.inserted_layers != inserted:
        raise ConfigMismatch(
            f"bank built for layers {bank.inserted_layers}, config selects {inserted}"
        )
    p = cfg.p
    inserted_set = set(inserted)
    x = encoder.embed(patches)
    b = x.shape[0]
    for layer, block in enumerate(encoder.blocks, start=1):
        if layer in inserted_set:
            prompts = bank.layer_prompts(layer).unsqueeze(0).expand(b, -1, -1)
            x = torch.cat([x[:, :1], prompts, x[:, 1:]], dim=1)
            x = block(x)
            if not cfg.carry_prompt_outputs:
                x = torch.cat([x[:, :1], x[:, 1 + p :]], dim=1)
        else:
            x = block(x)
    x = encoder.norm(x)
    return encoder.head(x[:, 0])


@dataclass(frozen=True)
class FinetuneMethod:
    kind: str
    prompt_config: PromptConfig | None = None

    def validate(self) -> None:
        if self.kind not in METHOD_KINDS:
            raise InvalidSpec(f"method kind must be one of {METHOD_KINDS}, got {self.kind!r}")
        if self.kind == "VPT" and self.prompt_config is None:
            raise ConfigMismatch("VPT method needs a prompt configuration")
        if self.kind != "VPT" and self.prompt_config is not None:
            raise ConfigMismatch(f"{self.kind} does not take a prompt configuration")


def apply_freeze(model: VisionTransformer, bank: PromptBank | None, method: FinetuneMethod) -> None:
    """Set requires_grad so only method-designated parameters can change."""
    method.validate()
    train_all = method.kind == "FullFineTune"
    for param in model.parameters():
        param.requires_grad_(train_all)
    for param in model.head.parameters():
        param.requires_grad_(True)
    if bank is not None:
        for param in bank.parameters():
            param.requires_grad_(True)


@dataclass(frozen=True)
class TrainableCount:
    prompt_params: int
    head_params: int
    trainable_total: int  # everything the optimizer may touch
    count: int            # the method's headline number (prompts for VPT)
    model_total: int
    fraction: float       # count / model_total

    def percent(self) -> str:
        return f"{100.0 * self.fraction:.3f}%"


def count_trainable(method: FinetuneMethod, config: ModelConfig) -> TrainableCount:
    method.validate()
    config.validate()
    ledger = count_parameters(config)
    head = ledger["head"]
    total = ledger["total"]
    if method.kind == "FullFineTune":
        return TrainableCount(0, head, total, total, total, 1.0)
    if method.kind == "LinearProbe":
        return TrainableCount(0, head, head, head, total, head / total)
    cfg = method.prompt_config
    n_inserted = len(select_inserted_layers(cfg, config.depth))
    prompts = n_inserted * cfg.p * config.d_model
    return TrainableCount(
        prompts, head, prompts + head, prompts, total, prompts / total
    )


def cross_entropy(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean over the batch of -log softmax probability of the true class."""
    if logits.dim() != 2:
        raise InvalidSpec(f"logits must be (batch, classes), got {tuple(logits.shape)}")
    n_classes = logits.shape[1]
    if labels.numel() and (labels.min() < 0 or labels.max() >= n_classes):
        raise LabelOutOfRange(
            f"labels must lie in 0..{n_classes - 1}, got range "
            f"[{int(labels.min())}, {int(labels.max())}]"
        )
    log_probs = logits - logits.logsumexp(dim=-1, keepdim=True)
    return -log_probs.gather(1, labels[:, None]).mean()
