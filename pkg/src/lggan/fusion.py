"""Pixel-level weight maps and the convex fusion of global and local images."""
from __future__ import annotations

import torch
from torch import nn

from .layers import conv_block, deconv_block

WEIGHT_CHANNELS = (128, 64, 2)


def weight_maps_from_logits(logits: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Channel softmax over [N, 2, H, W]; returns (W_g, W_l), each [N, 1, H, W]."""
    weights = torch.softmax(logits, dim=1)
    return weights[:, 0:1], weights[:, 1:2]


class WeightMapGenerator(nn.Module):
    """Two transpose-conv blocks (128, 64) and a 1x1 conv block (2), each conv -> IN -> ReLU."""

    def __init__(self, in_channels: int):
        super().__init__()
        c1, c2, c3 = WEIGHT_CHANNELS
        self.net = nn.Sequential(
            deconv_block(in_channels, c1),
            deconv_block(c1, c2),
            conv_block(c2, c3, kernel=1),
        )

    def forward(self, encoded: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        return weight_maps_from_logits(self.net(encoded))


def fuse(global_image: torch.Tensor, local_image: torch.Tensor,
         weight_global: torch.Tensor, weight_local: torch.Tensor) -> torch.Tensor:
    if global_image.shape != local_image.shape:
        raise ValueError(f"global {tuple(global_image.shape)} and local {tuple(local_image.shape)} differ")
    expected = (global_image.shape[0], 1, *global_image.shape[2:])
    for name, w in (("W_g", weight_global), ("W_l", weight_local)):
        if tuple(w.shape) != expected:
            raise ValueError(f"{name} has shape {tuple(w.shape)}, expected {expected}")
    return global_image * weight_global + local_image * weight_local
