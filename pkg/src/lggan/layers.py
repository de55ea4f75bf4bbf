"""Spectrally-normalised building blocks shared by every network."""
from torch import nn
from torch.nn.utils.parametrizations import spectral_norm


def sn_conv(in_ch: int, out_ch: int, kernel: int = 3, stride: int = 1, padding: int | None = None) -> nn.Module:
    if padding is None:
        padding = kernel // 2
    return spectral_norm(nn.Conv2d(in_ch, out_ch, kernel, stride, padding))


def sn_deconv(in_ch: int, out_ch: int) -> nn.Module:
    # 3x3, stride 2: exactly doubles H and W
    return spectral_norm(nn.ConvTranspose2d(in_ch, out_ch, 3, stride=2, padding=1, output_padding=1))


def norm(ch: int) -> nn.Module:
    return nn.InstanceNorm2d(ch, affine=True)


def conv_block(in_ch: int, out_ch: int, kernel: int = 3, stride: int = 1) -> nn.Sequential:
    return nn.Sequential(sn_conv(in_ch, out_ch, kernel, stride), norm(out_ch), nn.ReLU(inplace=True))


def deconv_block(in_ch: int, out_ch: int) -> nn.Sequential:
    return nn.Sequential(sn_deconv(in_ch, out_ch), norm(out_ch), nn.ReLU(inplace=True))


class ResidualBlock(nn.Module):
    def __init__(self, ch: int):
        super().__init__()
        self.body = nn.Sequential(
            sn_conv(ch, ch), norm(ch), nn.ReLU(inplace=True),
            sn_conv(ch, ch), norm(ch),
        )

    def forward(self, x):
        return x + self.body(x)
