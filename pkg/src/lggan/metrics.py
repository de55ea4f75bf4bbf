"""PSNR, SSIM and masked L1 on images in [-1, 1], plus the evaluation report."""
from __future__ import annotations

import math
from typing import Optional, Sequence

import torch
import torch.nn.functional as F

DATA_RANGE = 2.0
WINDOW = 11
SIGMA = 1.5
UNAVAILABLE = ("IS", "FID", "KL", "mIoU", "Acc", "SD")


def psnr(a: torch.Tensor, b: torch.Tensor) -> float:
    """Peak signal-to-noise ratio in dB with peak 2.0. Identical inputs give math.inf."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    mse = float(((a.double() - b.double()) ** 2).mean())
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(DATA_RANGE ** 2 / mse)


def gaussian_window(size: int = WINDOW, sigma: float = SIGMA) -> torch.Tensor:
    coords = torch.arange(size, dtype=torch.float64) - (size - 1) / 2
    g = torch.exp(-coords ** 2 / (2 * sigma ** 2))
    g /= g.sum()
    return torch.outer(g, g)


def _grayscale(x: torch.Tensor) -> torch.Tensor:
    if x.ndim == 2:
        return x
    if x.ndim == 3:
        return x.mean(dim=0)
    raise ValueError(f"expected [H, W] or [C, H, W], got shape {tuple(x.shape)}")


def ssim(a: torch.Tensor, b: torch.Tensor) -> float:
    """Mean SSIM over all valid 11x11 Gaussian windows (sigma 1.5) of the channel-mean images."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    x, y = _grayscale(a.double()), _grayscale(b.double())
    if min(x.shape) < WINDOW:
        raise ValueError(f"image {tuple(x.shape)} is smaller than the {WINDOW}x{WINDOW} window")
    c1 = (0.01 * DATA_RANGE) ** 2
    c2 = (0.03 * DATA_RANGE) ** 2
    window = gaussian_window().view(1, 1, WINDOW, WINDOW)

    def blur(t):
        return F.conv2d(t.view(1, 1, *t.shape), window)[0, 0]

    mu_x, mu_y = blur(x), blur(y)
    var_x = blur(x * x) - mu_x ** 2
    var_y = blur(y * y) - mu_y ** 2
    cov = blur(x * y) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)
    return float((num / den).mean())


def masked_l1(pred: torch.Tensor, target: torch.Tensor, labelled: Optional[torch.Tensor] = None) -> float:
    """Mean absolute error over labelled (non-VOID) pixels; all pixels when no mask is given."""
    diff = (pred - target).abs()
    if labelled is None:
        return float(diff.mean())
    count = float(labelled.sum()) * pred.shape[0]
    if count == 0:
        return math.nan
    return float((diff * labelled).sum()) / count


def _fmt(value: float) -> str:
    if math.isinf(value):
        return "inf"
    if math.isnan(value):
        return "nan"
    return f"{value:.6f}"


def _mean(values: Sequence[float]) -> float:
    finite = [v for v in values if not math.isnan(v)]
    return sum(finite) / len(finite) if finite else math.nan


def format_report(rows: Sequence[dict]) -> str:
    """Tab-separated table: one row per image, a `mean` row, then the unavailable metrics."""
    if not rows:
        raise ValueError("no rows to report")
    lines = ["name\tpsnr\tssim\tmasked_l1"]
    for row in rows:
        lines.append(f"{row['name']}\t{_fmt(row['psnr'])}\t{_fmt(row['ssim'])}\t{_fmt(row['masked_l1'])}")
    aggregate = {key: _mean([r[key] for r in rows]) for key in ("psnr", "ssim", "masked_l1")}
    lines.append(f"mean\t{_fmt(aggregate['psnr'])}\t{_fmt(aggregate['ssim'])}\t{_fmt(aggregate['masked_l1'])}")
    lines.append("")
    lines.extend(f"# {name}\tunavailable" for name in UNAVAILABLE)
    return "\n".join(lines) + "\n"


def score_pair(name: str, pred: torch.Tensor, target: torch.Tensor,
               labelled: Optional[torch.Tensor] = None) -> dict:
    return {"name": name, "psnr": psnr(pred, target), "ssim": ssim(pred, target),
            "masked_l1": masked_l1(pred, target, labelled)}
