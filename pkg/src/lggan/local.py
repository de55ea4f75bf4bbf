"""Class-specific local generation: mask filtering, per-class sub-generators, combination."""
from __future__ import annotations

from typing import Sequence

import torch
from torch import nn

from .layers import deconv_block, norm, sn_conv


def filter_class_features(features: torch.Tensor, masks: torch.Tensor) -> torch.Tensor:
    """Multiply shared features [N, nf, H, W] by every class mask [N, c, H, W].

    Returns the packed view [N, c, nf, H, W]; slice i is F_i.
    """
    if features.shape[-2:] != masks.shape[-2:]:
        raise ValueError(
            f"mask resolution {tuple(masks.shape[-2:])} != feature resolution {tuple(features.shape[-2:])}")
    return masks.unsqueeze(2) * features.unsqueeze(1)


def combine_local_add(per_class: Sequence[torch.Tensor]) -> torch.Tensor:
    _check_same_shape(per_class)
    out = per_class[0]
    for image in per_class[1:]:
        out = out + image
    return out


def _check_same_shape(tensors: Sequence[torch.Tensor]) -> None:
    if not tensors:
        raise ValueError("need at least one class output")
    shape = tensors[0].shape
    for i, t in enumerate(tensors):
        if t.shape != shape:
            raise ValueError(f"class output {i} has shape {tuple(t.shape)}, expected {tuple(shape)}")


class ClassBranch(nn.Module):
    """conv3x3 -> IN -> ReLU -> conv3x3 -> tanh, owned by a single class."""

    def __init__(self, nf: int):
        super().__init__()
        self.net = nn.Sequential(
            sn_conv(nf, nf), norm(nf), nn.ReLU(inplace=True),
            sn_conv(nf, 3), nn.Tanh(),
        )

    def forward(self, x):
        return self.net(x)


class ConvCombiner(nn.Module):
    """Concatenate the c class images and map them back to RGB with one 3x3 conv."""

    def __init__(self, num_classes: int):
        super().__init__()
        self.conv = sn_conv(3 * num_classes, 3)
        self.num_classes = num_classes

    def forward(self, per_class: Sequence[torch.Tensor]) -> torch.Tensor:
        _check_same_shape(per_class)
        if len(per_class) != self.num_classes:
            raise ValueError(f"expected {self.num_classes} class outputs, got {len(per_class)}")
        return torch.tanh(self.conv(torch.cat(list(per_class), dim=1)))


class LocalGenerator(nn.Module):
    def __init__(self, num_classes: int, nf: int = 32, variant: str = "conv"):
        super().__init__()
        if variant not in ("add", "conv"):
            raise ValueError(f"unknown local combination {variant!r}")
        self.num_classes = num_classes
        self.variant = variant
        self.upsample = nn.Sequential(deconv_block(4 * nf, 2 * nf), deconv_block(2 * nf, nf))
        self.branches = nn.ModuleList(ClassBranch(nf) for _ in range(num_classes))
        self.combiner = ConvCombiner(num_classes) if variant == "conv" else None

    def upsample_features(self, encoded: torch.Tensor) -> torch.Tensor:
        return self.upsample(encoded)

    def generate_class_image(self, class_features: torch.Tensor, index: int) -> torch.Tensor:
        if not 0 <= index < self.num_classes:
            raise IndexError(f"class index {index} out of range for c={self.num_classes}")
        return self.branches[index](class_features)

    def combine(self, per_class: Sequence[torch.Tensor]) -> torch.Tensor:
        if self.combiner is None:
            return combine_local_add(per_class)
        return self.combiner(per_class)

    def forward(self, encoded: torch.Tensor, masks: torch.Tensor):
        """Returns (packed features F_p, list of class images, combined local image)."""
        features = self.upsample_features(encoded)
        packed = filter_class_features(features, masks)
        per_class = [self.generate_class_image(packed[:, i], i) for i in range(self.num_classes)]
        return packed, per_class, self.combine(per_class)


def masked_l1_loss(per_class: Sequence[torch.Tensor], target: torch.Tensor, masks: torch.Tensor,
                   valid: torch.Tensor) -> torch.Tensor:
    """Sum over present classes of mean |target * M_i - I_i|, averaged over the batch.

    per_class: c tensors [N, C, H, W]; masks [N, c, H, W]; valid [N, c].
    Absent classes contribute neither loss nor gradient.
    """
    n = target.shape[0]
    total = target.new_zeros(())
    for i, image in enumerate(per_class):
        keep = valid[:, i] > 0
        if not bool(keep.any()):
            continue
        diff = (target[keep] * masks[keep, i:i + 1] - image[keep]).abs()
        total = total + diff.flatten(1).mean(dim=1).sum()
    return total / n
