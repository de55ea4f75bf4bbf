"""Parameter-sharing encoder read by the global, local and weight-map branches."""
import torch
from torch import nn

from .config import ConfigError
from .layers import ResidualBlock, conv_block

DOWNSAMPLE = 4


class Encoder(nn.Module):
    """Stem conv (nf), two stride-2 convs (2nf, 4nf), then `n_res` residual blocks.

    Output is [N, 4nf, H/4, W/4].
    """

    def __init__(self, in_channels: int, nf: int = 32, n_res: int = 3):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = 4 * nf
        self.net = nn.Sequential(
            conv_block(in_channels, nf),
            conv_block(nf, 2 * nf, stride=2),
            conv_block(2 * nf, 4 * nf, stride=2),
            *[ResidualBlock(4 * nf) for _ in range(n_res)],
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h, w = x.shape[-2:]
        if h % DOWNSAMPLE or w % DOWNSAMPLE:
            raise ConfigError(f"input size {h}x{w} is not divisible by {DOWNSAMPLE}")
        if x.shape[1] != self.in_channels:
            raise ConfigError(f"encoder expects {self.in_channels} input channels, got {x.shape[1]}")
        return self.net(x)


def encoder_input(onehot: torch.Tensor, conditioning: torch.Tensor | None = None) -> torch.Tensor:
    """One-hot map alone, or the conditioning image concatenated in front of it."""
    if conditioning is None:
        return onehot
    return torch.cat([conditioning, onehot], dim=1)
