"""Semantic-guided and image-guided patch discriminators and the adversarial losses."""
from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .config import ConfigError
from .layers import sn_conv


class PatchDiscriminator(nn.Module):
    """Four stride-2 stages (nf_d .. 8nf_d) with leaky ReLU, then a 1-channel conv.

    Instance norm on every stage except the first. Output is [N, 1, H/16, W/16].
    """

    def __init__(self, in_channels: int, nf_d: int = 32):
        super().__init__()
        layers: list[nn.Module] = [sn_conv(in_channels, nf_d, 4, 2, 1), nn.LeakyReLU(0.2, inplace=True)]
        ch = nf_d
        for _ in range(3):
            layers += [sn_conv(ch, 2 * ch, 4, 2, 1), nn.InstanceNorm2d(2 * ch, affine=True),
                       nn.LeakyReLU(0.2, inplace=True)]
            ch *= 2
        layers.append(sn_conv(ch, 1, 3, 1, 1))
        self.net = nn.Sequential(*layers)

    def forward(self, condition: torch.Tensor, image: torch.Tensor) -> torch.Tensor:
        if condition.shape[-2:] != image.shape[-2:]:
            raise ValueError(
                f"condition {tuple(condition.shape[-2:])} and image {tuple(image.shape[-2:])} resolutions differ")
        return self.net(torch.cat([condition, image], dim=1))


class DualDiscriminator(nn.Module):
    """D_s on (one-hot map, image) always; D_i on (conditioning image, image) in cross-view mode."""

    def __init__(self, num_classes: int, nf_d: int = 32, cross_view: bool = False):
        super().__init__()
        self.semantic = PatchDiscriminator(num_classes + 3, nf_d)
        self.image = PatchDiscriminator(6, nf_d) if cross_view else None

    def d_semantic(self, onehot: torch.Tensor, image: torch.Tensor) -> torch.Tensor:
        return self.semantic(onehot, image)

    def d_image(self, conditioning: torch.Tensor, image: torch.Tensor) -> torch.Tensor:
        if self.image is None:
            raise ConfigError("the image-guided discriminator only exists in cross-view mode")
        return self.image(conditioning, image)

    def forward(self, onehot, image, conditioning=None) -> dict[str, torch.Tensor]:
        logits = {"semantic": self.d_semantic(onehot, image)}
        if self.image is not None:
            logits["image"] = self.d_image(conditioning, image)
        return logits


def gan_losses(real_logits: torch.Tensor, fake_logits: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """(d_loss, g_loss) for one discriminator.

    d_loss is the mean BCE over all real (target 1) and fake (target 0) patches;
    g_loss is the non-saturating mean BCE of the fake patches against 1.
    """
    real = F.binary_cross_entropy_with_logits(real_logits, torch.ones_like(real_logits), reduction="sum")
    fake = F.binary_cross_entropy_with_logits(fake_logits, torch.zeros_like(fake_logits), reduction="sum")
    d_loss = (real + fake) / (real_logits.numel() + fake_logits.numel())
    g_loss = F.binary_cross_entropy_with_logits(fake_logits, torch.ones_like(fake_logits))
    return d_loss, g_loss


def generator_adv_loss(fake_logits: torch.Tensor) -> torch.Tensor:
    return F.binary_cross_entropy_with_logits(fake_logits, torch.ones_like(fake_logits))
