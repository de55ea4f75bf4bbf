"""Semantic maps, paired samples, the on-disk reader and the synthetic scene generator."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from .config import CROSS_VIEW, SEMANTIC

VOID = -1
MODES = (SEMANTIC, CROSS_VIEW)


class DecodeError(ValueError):
    pass


class DatasetError(ValueError):
    pass


@dataclass
class SemanticMap:
    labels: torch.Tensor  # long [H, W], VOID = -1
    num_classes: int

    def __post_init__(self):
        if self.labels.ndim != 2 or self.labels.shape[0] == 0 or self.labels.shape[1] == 0:
            raise DecodeError(f"semantic map must be a non-empty 2-D grid, got shape {tuple(self.labels.shape)}")
        bad = (self.labels >= self.num_classes) | (self.labels < VOID)
        if bool(bad.any()):
            y, x = (int(v) for v in bad.nonzero()[0])
            raise DecodeError(f"label {int(self.labels[y, x])} >= c={self.num_classes} at pixel (y={y}, x={x})")

    @property
    def shape(self) -> tuple[int, int]:
        return tuple(self.labels.shape)


@dataclass
class PairedSample:
    semantic: SemanticMap
    target: torch.Tensor  # [3, H, W] in [-1, 1]
    conditioning: Optional[torch.Tensor] = None  # [3, H, W], cross-view only
    name: str = ""

    def __post_init__(self):
        if tuple(self.target.shape[1:]) != self.semantic.shape:
            raise DatasetError(
                f"sample {self.name!r}: target size {tuple(self.target.shape[1:])} "
                f"!= semantic size {self.semantic.shape}")
        if self.conditioning is not None and self.conditioning.shape != self.target.shape:
            raise DatasetError(
                f"sample {self.name!r}: conditioning size {tuple(self.conditioning.shape)} "
                f"!= target size {tuple(self.target.shape)}")


def decode_semantic_map(id_image, num_classes: int, void_id: int = 255) -> SemanticMap:
    """Turn an 8-bit ID raster (array or PIL image) into a SemanticMap."""
    raster = np.asarray(id_image)
    if raster.ndim != 2:
        raise DecodeError(f"expected a single-channel raster, got shape {raster.shape}")
    raster = raster.astype(np.int64)
    invalid = (raster != void_id) & ((raster < 0) | (raster >= num_classes))
    if invalid.any():
        y, x = np.argwhere(invalid)[0]
        raise DecodeError(f"label {raster[y, x]} >= c={num_classes} at pixel (y={y}, x={x})")
    labels = np.where(raster == void_id, VOID, raster)
    return SemanticMap(torch.from_numpy(labels), num_classes)


def encode_semantic_map(semantic: SemanticMap, void_id: int = 255) -> np.ndarray:
    labels = semantic.labels.numpy()
    return np.where(labels == VOID, void_id, labels).astype(np.uint8)


def one_hot(semantic: SemanticMap) -> torch.Tensor:
    """[c, H, W] float tensor; VOID pixels get an all-zero column."""
    labels = semantic.labels
    classes = torch.arange(semantic.num_classes).view(-1, 1, 1)
    return (labels.unsqueeze(0) == classes).float()


def _scale_factor(src: int, dst: int) -> None:
    if not (dst % src == 0 or src % dst == 0):
        raise ValueError(f"cannot resample {src} -> {dst}: scale factor is not an integer")


def class_masks(onehot: torch.Tensor, height: int, width: int) -> torch.Tensor:
    """Resample one-hot channels to (height, width) with nearest-neighbour.

    Accepts [c, H, W] or [N, c, H, W]. Mask M_i is channel i of the result.
    """
    src_h, src_w = onehot.shape[-2:]
    _scale_factor(src_h, height)
    _scale_factor(src_w, width)
    if (src_h, src_w) == (height, width):
        return onehot
    batched = onehot.ndim == 4
    x = onehot if batched else onehot.unsqueeze(0)
    out = F.interpolate(x, size=(height, width), mode="nearest")
    return out if batched else out[0]


def valid_class_indicator(semantic: SemanticMap) -> torch.Tensor:
    """h_i = 1 iff class i covers at least one pixel."""
    present = torch.zeros(semantic.num_classes)
    labels = semantic.labels[semantic.labels != VOID]
    present[labels.unique()] = 1.0
    return present


# ---------------------------------------------------------------------------
# synthetic scenes

def class_palette(num_classes: int) -> torch.Tensor:
    """Fixed base colour per class, [c, 3] in [-0.75, 0.75]."""
    rng = np.random.default_rng(12345)
    colors = rng.uniform(-0.75, 0.75, size=(max(num_classes, 1), 3))
    colors[0] = (-0.5, 0.1, 0.6)  # background reads as sky blue
    return torch.from_numpy(colors[:num_classes]).float()


RAMP_AMPLITUDE = 0.2


def luminance_ramp(width: int) -> torch.Tensor:
    """Horizontal offset added to every channel, [W] spanning +-RAMP_AMPLITUDE/2."""
    return RAMP_AMPLITUDE * (torch.linspace(0.0, 1.0, width) - 0.5)


def render_target(semantic: SemanticMap) -> torch.Tensor:
    palette = class_palette(semantic.num_classes)
    labels = semantic.labels.clamp(min=0)
    image = palette[labels].permute(2, 0, 1).clone()
    image += luminance_ramp(labels.shape[1]).view(1, 1, -1)
    image[:, semantic.labels == VOID] = -1.0
    return image


def _random_layout(rng: np.random.Generator, num_classes: int, h: int, w: int) -> np.ndarray:
    labels = np.zeros((h, w), dtype=np.int64)
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(int(rng.integers(2, 6))):
        cls = int(rng.integers(1, num_classes))
        ch = int(rng.integers(h // 6, h // 2))
        cw = int(rng.integers(w // 6, w // 2))
        cy = int(rng.integers(0, h))
        cx = int(rng.integers(0, w))
        if rng.random() < 0.5:
            region = (abs(yy - cy) <= ch // 2) & (abs(xx - cx) <= cw // 2)
        else:
            region = ((yy - cy) / (ch / 2)) ** 2 + ((xx - cx) / (cw / 2)) ** 2 <= 1.0
        labels[region] = cls
    return labels


def synth_dataset(seed: int, n_samples: int, num_classes: int, height: int, width: int,
                  mode: str = SEMANTIC) -> list[PairedSample]:
    """Deterministic toy scenes: rectangles and ellipses over a class-0 background.

    The target paints each class with its palette colour plus a horizontal ramp.
    In cross-view mode the conditioning image is the target rotated by 180 degrees.
    """
    if num_classes < 2:
        raise ValueError("synthetic scenes need at least 2 classes")
    if height < 32 or width < 32:
        raise ValueError("synthetic scenes need height, width >= 32")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    rng = np.random.default_rng(seed)
    samples = []
    for k in range(n_samples):
        semantic = SemanticMap(torch.from_numpy(_random_layout(rng, num_classes, height, width)), num_classes)
        target = render_target(semantic)
        cond = torch.flip(target, dims=(1, 2)).contiguous() if mode == CROSS_VIEW else None
        samples.append(PairedSample(semantic, target, cond, name=f"synth_{k:05d}"))
    return samples


# ---------------------------------------------------------------------------
# on-disk datasets

def image_to_tensor(image: Image.Image) -> torch.Tensor:
    array = np.asarray(image.convert("RGB"), dtype=np.float32)
    return torch.from_numpy(array).permute(2, 0, 1) / 127.5 - 1.0


def tensor_to_image(tensor: torch.Tensor) -> Image.Image:
    """[3, H, W] in [-1, 1] -> 8-bit RGB."""
    array = ((tensor.detach().clamp(-1, 1) + 1.0) * 127.5).round().byte()
    return Image.fromarray(array.permute(1, 2, 0).cpu().numpy(), mode="RGB")


def _stems(folder: Path) -> dict[str, Path]:
    return {p.stem: p for p in sorted(folder.iterdir()) if p.is_file()}


def load_label_dir(folder: Path, num_classes: int, void_id: int = 255) -> dict[str, SemanticMap]:
    maps = {}
    for stem, path in _stems(folder).items():
        try:
            maps[stem] = decode_semantic_map(Image.open(path), num_classes, void_id)
        except DecodeError as exc:
            raise DecodeError(f"{path}: {exc}") from None
    return maps


def load_dataset(root_dir, mode: str, num_classes: int, void_id: int = 255) -> list[PairedSample]:
    """Read `labels/`, `images/` (and `cond/` in cross-view mode) paired by file stem."""
    root = Path(root_dir)
    folders = ["labels", "images"] + (["cond"] if mode == CROSS_VIEW else [])
    for name in folders:
        if not (root / name).is_dir():
            raise DatasetError(f"missing directory {root / name}")
    listings = {name: _stems(root / name) for name in folders}
    all_stems = set().union(*listings.values())
    unmatched = sorted(s for s in all_stems if any(s not in listing for listing in listings.values()))
    if unmatched:
        raise DatasetError(f"unpaired file stems: {', '.join(unmatched)}")

    samples = []
    for stem in sorted(all_stems):
        label_path = listings["labels"][stem]
        try:
            semantic = decode_semantic_map(Image.open(label_path), num_classes, void_id)
        except DecodeError as exc:
            raise DecodeError(f"{label_path}: {exc}") from None
        target = image_to_tensor(Image.open(listings["images"][stem]))
        cond = image_to_tensor(Image.open(listings["cond"][stem])) if mode == CROSS_VIEW else None
        samples.append(PairedSample(semantic, target, cond, name=stem))
    return samples


def save_dataset(samples: Sequence[PairedSample], root_dir, void_id: int = 255) -> None:
    """Write samples in the layout `load_dataset` reads."""
    root = Path(root_dir)
    for name in ("labels", "images", "cond"):
        if name != "cond" or any(s.conditioning is not None for s in samples):
            (root / name).mkdir(parents=True, exist_ok=True)
    for k, sample in enumerate(samples):
        stem = sample.name or f"{k:05d}"
        Image.fromarray(encode_semantic_map(sample.semantic, void_id), mode="L").save(root / "labels" / f"{stem}.png")
        tensor_to_image(sample.target).save(root / "images" / f"{stem}.png")
        if sample.conditioning is not None:
            tensor_to_image(sample.conditioning).save(root / "cond" / f"{stem}.png")


@dataclass
class Batch:
    onehot: torch.Tensor  # [N, c, H, W]
    target: torch.Tensor  # [N, 3, H, W]
    valid: torch.Tensor  # [N, c]
    conditioning: Optional[torch.Tensor] = None

    def to(self, device) -> "Batch":
        cond = None if self.conditioning is None else self.conditioning.to(device)
        return Batch(self.onehot.to(device), self.target.to(device), self.valid.to(device), cond)

    def __len__(self):
        return self.onehot.shape[0]


def collate(samples: Sequence[PairedSample]) -> Batch:
    onehot = torch.stack([one_hot(s.semantic) for s in samples])
    target = torch.stack([s.target for s in samples])
    valid = torch.stack([valid_class_indicator(s.semantic) for s in samples])
    conds = [s.conditioning for s in samples]
    if all(c is None for c in conds):
        cond = None
    elif any(c is None for c in conds):
        raise DatasetError("batch mixes samples with and without conditioning images")
    else:
        cond = torch.stack(conds)
    return Batch(onehot, target, valid, cond)


def iterate_batches(samples: Sequence[PairedSample], batch_size: int, seed: int, epoch: int):
    """Shuffled batches for one epoch; the order depends only on (seed, epoch)."""
    gen = torch.Generator().manual_seed(seed * 100003 + epoch)
    order = torch.randperm(len(samples), generator=gen).tolist()
    for start in range(0, len(order), batch_size):
        yield collate([samples[i] for i in order[start:start + batch_size]])


def steps_per_epoch(n_samples: int, batch_size: int) -> int:
    return math.ceil(n_samples / batch_size)
