"""The full generator: shared encoder feeding global, local and weight-map branches."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import torch
from torch import nn

from .backbone import Encoder, encoder_input
from .classifier import ClassClassifier, semantic_avg_pool
from .config import ConfigError, ModelConfig
from .data import class_masks
from .fusion import WeightMapGenerator, fuse
from .global_gen import GlobalGenerator
from .local import LocalGenerator


@dataclass
class GeneratorOutputs:
    global_image: torch.Tensor
    fused: torch.Tensor
    weight_global: torch.Tensor
    weight_local: torch.Tensor
    encoded: torch.Tensor
    masks: torch.Tensor
    local_image: Optional[torch.Tensor] = None
    per_class: list[torch.Tensor] = field(default_factory=list)
    class_features: Optional[torch.Tensor] = None  # packed F_p [N, c, nf, H, W]
    logits: Optional[torch.Tensor] = None  # [N, c, c]


class LGGANGenerator(nn.Module):
    """Which branches exist is decided by the ablation setup in the config."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        nf = config.nf
        self.encoder = Encoder(config.in_channels, nf, config.n_res)
        self.global_gen = GlobalGenerator(nf, config.n_res)
        self.local_gen = (LocalGenerator(config.num_classes, nf, config.local_variant)
                          if config.use_local else None)
        self.classifier = ClassClassifier(nf, config.num_classes) if config.use_classifier else None
        self.weight_gen = WeightMapGenerator(4 * nf) if config.use_fusion else None

    def forward(self, onehot: torch.Tensor, conditioning: Optional[torch.Tensor] = None) -> GeneratorOutputs:
        if self.config.cross_view and conditioning is None:
            raise ConfigError("cross-view mode needs a conditioning image")
        if not self.config.cross_view and conditioning is not None:
            raise ConfigError("semantic-synthesis mode takes no conditioning image")
        encoded = self.encoder(encoder_input(onehot, conditioning))
        global_image = self.global_gen(encoded)
        masks = class_masks(onehot, *global_image.shape[-2:])
        n, _, h, w = global_image.shape

        if self.local_gen is None:
            ones = global_image.new_ones(n, 1, h, w)
            return GeneratorOutputs(global_image, global_image, ones, torch.zeros_like(ones), encoded, masks)

        packed, per_class, local_image = self.local_gen(encoded, masks)
        logits = None
        if self.classifier is not None:
            logits = self.classifier(semantic_avg_pool(packed, masks))
        if self.weight_gen is not None:
            weight_global, weight_local = self.weight_gen(encoded)
        else:
            weight_global = weight_local = global_image.new_full((n, 1, h, w), 0.5)
        fused = fuse(global_image, local_image, weight_global, weight_local)
        return GeneratorOutputs(global_image, fused, weight_global, weight_local, encoded, masks,
                                local_image, per_class, packed, logits)
