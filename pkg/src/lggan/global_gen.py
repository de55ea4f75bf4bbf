"""Image-level global generator."""
import torch
from torch import nn

from .layers import ResidualBlock, deconv_block, sn_conv


class GlobalGenerator(nn.Module):
    """Residual blocks at 4nf, two stride-2 transposed convs, 3x3 conv to RGB with tanh."""

    def __init__(self, nf: int = 32, n_res: int = 3):
        super().__init__()
        self.net = nn.Sequential(
            *[ResidualBlock(4 * nf) for _ in range(n_res)],
            deconv_block(4 * nf, 2 * nf),
            deconv_block(2 * nf, nf),
            sn_conv(nf, 3),
            nn.Tanh(),
        )

    def forward(self, encoded: torch.Tensor) -> torch.Tensor:
        return self.net(encoded)
