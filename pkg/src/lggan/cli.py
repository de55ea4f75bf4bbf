"""Command line: train, generate, inspect, evaluate.

Exit codes: 0 success, 1 usage/config/data error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
import yaml
from PIL import Image

from .checkpoint import CheckpointError
from .config import ConfigError, ModelConfig, dump_run_config, load_run_config
from .data import (
    VOID, DatasetError, DecodeError, PairedSample, image_to_tensor, load_dataset, load_label_dir, one_hot,
    synth_dataset, tensor_to_image,
)
from .metrics import format_report, score_pair
from .model import GeneratorOutputs, LGGANGenerator
from .trainer import load_generator, train

log = logging.getLogger("lggan")

OUTPUT_ROOT_ENV = "LGGAN_OUTPUT_ROOT"
EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
USER_ERRORS = (ConfigError, DatasetError, DecodeError, CheckpointError, FileNotFoundError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))


def _write_snapshot(path: Path, command: str, args: dict, config: Optional[ModelConfig] = None) -> None:
    recorded = {k: str(v) if isinstance(v, Path) else v for k, v in args.items() if k != "func"}
    payload = {"command": command, "args": recorded}
    if config is not None:
        payload["model"] = config.to_dict()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(payload, sort_keys=False))


@torch.no_grad()
def run_generator(generator: LGGANGenerator, sample: PairedSample) -> GeneratorOutputs:
    onehot = one_hot(sample.semantic).unsqueeze(0)
    cond = None if sample.conditioning is None else sample.conditioning.unsqueeze(0)
    return generator(onehot, cond)


def _check_mode(config: ModelConfig, sample: PairedSample) -> None:
    if config.cross_view and sample.conditioning is None:
        raise ConfigError(f"cross-view checkpoint needs a conditioning image for {sample.name!r}")
    if sample.semantic.num_classes != config.num_classes:
        raise ConfigError(f"checkpoint expects {config.num_classes} classes")


# ---------------------------------------------------------------------------
# train

def cmd_train(args) -> int:
    run = load_run_config(args.config)
    model = run.model
    out_dir = Path(run.out_dir) if run.out_dir else output_root() / Path(args.config).stem
    if run.synthetic:
        dataset = synth_dataset(model.seed, run.synthetic_samples, model.num_classes,
                                run.image_height, run.image_width, mode=model.mode)
    else:
        root = Path(run.data_root)
        if not root.is_dir():
            raise DatasetError(f"data_root: directory {root} does not exist")
        dataset = load_dataset(root, model.mode, model.num_classes, model.void_id)
    if not dataset:
        raise DatasetError("dataset is empty")
    out_dir.mkdir(parents=True, exist_ok=True)
    run.out_dir = str(out_dir)
    dump_run_config(run, out_dir / "config.resolved.yaml")
    trainer = train(model, dataset, out_dir, checkpoint_every=run.checkpoint_every,
                    max_steps=run.max_steps, resume=args.resume)
    print(f"trained {trainer.step} steps; checkpoints in {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# generate

def _input_samples(config: ModelConfig, input_dir: Path) -> list[PairedSample]:
    labels_dir = input_dir / "labels"
    if not labels_dir.is_dir():
        raise DatasetError(f"missing directory {labels_dir}")
    maps = load_label_dir(labels_dir, config.num_classes, config.void_id)
    conds = {}
    if config.cross_view:
        cond_dir = input_dir / "cond"
        if not cond_dir.is_dir():
            raise DatasetError(f"cross-view checkpoint needs conditioning images in {cond_dir}")
        conds = {p.stem: p for p in cond_dir.iterdir() if p.is_file()}
        missing = sorted(set(maps) - set(conds))
        if missing:
            raise DatasetError(f"no conditioning image for: {', '.join(missing)}")
    samples = []
    for stem, semantic in maps.items():
        h, w = semantic.shape
        cond = image_to_tensor(Image.open(conds[stem])) if stem in conds else None
        samples.append(PairedSample(semantic, torch.zeros(3, h, w), cond, name=stem))
    return samples


def cmd_generate(args) -> int:
    generator = load_generator(args.ckpt)
    samples = _input_samples(generator.config, Path(args.input))
    out_dir = Path(args.out) if args.out else output_root() / "generated"
    out_dir.mkdir(parents=True, exist_ok=True)
    for sample in samples:
        _check_mode(generator.config, sample)
        outputs = run_generator(generator, sample)
        tensor_to_image(outputs.fused[0]).save(out_dir / f"{sample.name}.png")
    _write_snapshot(out_dir / "generate.yaml", "generate", vars(args), generator.config)
    print(f"wrote {len(samples)} images to {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# inspect

def weight_to_image(weight: torch.Tensor) -> Image.Image:
    """[H, W] in [0, 1] -> 8-bit grayscale, linear quantisation."""
    return Image.fromarray((weight.clamp(0, 1) * 255).round().byte().numpy(), mode="L")


def class_image(image: torch.Tensor, mask: torch.Tensor) -> Image.Image:
    """Class output inside its mask, black outside."""
    array = np.asarray(tensor_to_image(image)).copy()
    array[mask.numpy() == 0] = 0
    return Image.fromarray(array, mode="RGB")


def feature_grid(features: torch.Tensor, channels: Sequence[int], scale: float) -> Image.Image:
    """Selected channels of one F_i side by side, |F| / scale mapped to [0, 255]."""
    tiles = [(features[c].abs() / scale).clamp(0, 1) for c in channels]
    grid = torch.cat(tiles, dim=1)
    return Image.fromarray((grid * 255).round().byte().numpy(), mode="L")


def _inspect_sample(args, config: ModelConfig) -> PairedSample:
    if args.data:
        samples = load_dataset(args.data, config.mode, config.num_classes, config.void_id)
    else:
        samples = synth_dataset(config.seed, args.index + 1, config.num_classes, args.height, args.width,
                                mode=config.mode)
    if not 0 <= args.index < len(samples):
        raise DatasetError(f"sample index {args.index} out of range (dataset has {len(samples)})")
    return samples[args.index]


def inspect(generator: LGGANGenerator, sample: PairedSample, out_dir: Path,
            channels: Optional[Sequence[int]] = None) -> list[Path]:
    """Write branch outputs, weight maps, per-class images and class feature grids."""
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = run_generator(generator, sample)
    written = []

    def save(image: Image.Image, name: str):
        path = out_dir / name
        image.save(path)
        written.append(path)

    save(tensor_to_image(outputs.global_image[0]), "global.png")
    if outputs.local_image is not None:
        save(tensor_to_image(outputs.local_image[0]), "local.png")
    save(tensor_to_image(outputs.fused[0]), "fused.png")
    save(weight_to_image(outputs.weight_global[0, 0]), "weight_global.png")
    save(weight_to_image(outputs.weight_local[0, 0]), "weight_local.png")
    for i, image in enumerate(outputs.per_class):
        save(class_image(image[0], outputs.masks[0, i]), f"class_{i:02d}.png")
    if outputs.class_features is not None:
        packed = outputs.class_features[0]
        nf = packed.shape[1]
        chosen = list(channels) if channels else list(range(min(4, nf)))
        bad = [c for c in chosen if not 0 <= c < nf]
        if bad:
            raise ConfigError(f"feature channels {bad} out of range for nf={nf}")
        scale = float(packed[:, chosen].abs().max()) or 1.0
        for i in range(packed.shape[0]):
            save(feature_grid(packed[i], chosen, scale), f"features_class_{i:02d}.png")
    return written


def cmd_inspect(args) -> int:
    generator = load_generator(args.ckpt)
    sample = _inspect_sample(args, generator.config)
    _check_mode(generator.config, sample)
    out_dir = Path(args.out) if args.out else output_root() / "inspect"
    channels = [int(c) for c in args.channels.split(",")] if args.channels else None
    written = inspect(generator, sample, out_dir, channels)
    _write_snapshot(out_dir / "inspect.yaml", "inspect", vars(args), generator.config)
    print(f"wrote {len(written)} images to {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate

def evaluate(generator: LGGANGenerator, samples: Sequence[PairedSample]) -> list[dict]:
    if not samples:
        raise DatasetError("cannot evaluate an empty dataset")
    rows = []
    for sample in samples:
        _check_mode(generator.config, sample)
        fused = run_generator(generator, sample).fused[0]
        labelled = (sample.semantic.labels != VOID).float()
        rows.append(score_pair(sample.name, fused, sample.target, labelled))
    return rows


def cmd_evaluate(args) -> int:
    generator = load_generator(args.ckpt)
    config = generator.config
    samples = load_dataset(args.data, config.mode, config.num_classes, config.void_id)
    report = format_report(evaluate(generator, samples))
    out = Path(args.out) if args.out else output_root() / "evaluation.tsv"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report)
    _write_snapshot(out.with_suffix(".yaml"), "evaluate", vars(args), config)
    sys.stdout.write(report)
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lggan", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train from a YAML run config")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="write fused images for a directory of semantic maps")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="input", required=True, help="directory with labels/ (and cond/)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("inspect", help="dump branch outputs, weight maps and class features of one sample")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--data", help="dataset directory; synthetic scenes when omitted")
    p.add_argument("--channels", help="comma-separated feature channels for the F_i grids")
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=64)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("evaluate", help="PSNR / SSIM / masked L1 report on a paired dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
