"""Objective assembly, alternating G/D optimisation, checkpoints and the training loop."""
from __future__ import annotations

import json
import logging
import math
from pathlib import Path
from typing import Optional, Sequence

import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .classifier import filtered_ce_loss
from .config import ModelConfig
from .data import Batch, PairedSample, iterate_batches, steps_per_epoch
from .discriminators import DualDiscriminator, gan_losses, generator_adv_loss
from .local import masked_l1_loss
from .model import GeneratorOutputs, LGGANGenerator

log = logging.getLogger(__name__)

LOSS_TERMS = ("g_adv", "l1_local", "ce", "l1_fused")


class TrainingError(RuntimeError):
    pass


def total_generator_loss(config: ModelConfig, outputs: GeneratorOutputs, batch: Batch,
                         g_adv: Optional[torch.Tensor] = None) -> tuple[torch.Tensor, dict[str, torch.Tensor]]:
    """Weighted generator objective and its per-term breakdown.

    Terms disabled by the ablation setup (or missing g_adv) are exactly zero.
    """
    zero = outputs.fused.new_zeros(())
    terms = {
        "g_adv": g_adv if g_adv is not None else zero,
        "l1_local": zero,
        "ce": zero,
        "l1_fused": (outputs.fused - batch.target).abs().mean(),
    }
    if config.use_local:
        terms["l1_local"] = masked_l1_loss(outputs.per_class, batch.target, outputs.masks, batch.valid)
    if config.use_classifier:
        terms["ce"] = filtered_ce_loss(outputs.logits, batch.valid)
    weights = {
        "g_adv": config.lambda_gan,
        "l1_local": config.lambda_l1_local,
        "ce": config.lambda_ce,
        "l1_fused": config.lambda_l1_fused,
    }
    total = zero
    for name, value in terms.items():
        if weights[name]:
            total = total + weights[name] * value
    return total, terms


def discriminator_loss(real: dict[str, torch.Tensor], fake: dict[str, torch.Tensor]
                       ) -> tuple[torch.Tensor, dict[str, torch.Tensor]]:
    """Sum of the per-discriminator losses (one term per active discriminator)."""
    terms = {name: gan_losses(real[name], fake[name])[0] for name in real}
    return sum(terms.values()), terms


def discriminator_logits(disc: DualDiscriminator, batch: Batch, image: torch.Tensor) -> dict[str, torch.Tensor]:
    return disc(batch.onehot, image, batch.conditioning)


class Trainer:
    def __init__(self, config: ModelConfig, device: str = "cpu"):
        self.config = config
        self.device = torch.device(device)
        torch.manual_seed(config.seed)
        self.generator = LGGANGenerator(config).to(self.device)
        self.discriminator = DualDiscriminator(config.num_classes, config.nf_d, config.cross_view).to(self.device)
        betas = (config.beta1, config.beta2)
        self.opt_g = torch.optim.Adam(self.generator.parameters(), lr=config.lr, betas=betas)
        self.opt_d = torch.optim.Adam(self.discriminator.parameters(), lr=config.lr, betas=betas)
        self.step = 0

    def train_step(self, batch: Batch) -> dict[str, float]:
        """One discriminator update on detached fakes, then one generator update."""
        batch = batch.to(self.device)
        self.generator.train()
        self.discriminator.train()
        outputs = self.generator(batch.onehot, batch.conditioning)

        real = discriminator_logits(self.discriminator, batch, batch.target)
        fake = discriminator_logits(self.discriminator, batch, outputs.fused.detach())
        d_loss, d_terms = discriminator_loss(real, fake)
        _check_finite({"d_loss": d_loss, **{f"d_{k}": v for k, v in d_terms.items()}})
        self.opt_d.zero_grad(set_to_none=True)
        d_loss.backward()
        self.opt_d.step()

        fake = discriminator_logits(self.discriminator, batch, outputs.fused)
        g_adv = sum(generator_adv_loss(logits) for logits in fake.values())
        g_total, terms = total_generator_loss(self.config, outputs, batch, g_adv)
        _check_finite({"g_total": g_total, **terms})
        self.opt_g.zero_grad(set_to_none=True)
        g_total.backward()
        self.opt_g.step()

        self.step += 1
        record = {"step": self.step, "d_loss": d_loss.item()}
        record.update({f"d_{name}": v.item() for name, v in d_terms.items()})
        record.update({name: v.item() for name, v in terms.items()})
        record["g_total"] = g_total.item()
        return record

    def state_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "step": self.step,
            "models": {
                "generator": self.generator.state_dict(),
                "discriminator": self.discriminator.state_dict(),
            },
            "optimizers": {
                "generator": self.opt_g.state_dict(),
                "discriminator": self.opt_d.state_dict(),
            },
        }

    def load_state_dict(self, state: dict) -> None:
        self.generator.load_state_dict(state["models"]["generator"])
        self.discriminator.load_state_dict(state["models"]["discriminator"])
        self.opt_g.load_state_dict(state["optimizers"]["generator"])
        self.opt_d.load_state_dict(state["optimizers"]["discriminator"])
        self.step = int(state["step"])

    def save(self, path) -> Path:
        return save_checkpoint(self.state_dict(), path)

    @classmethod
    def from_checkpoint(cls, path, device: str = "cpu") -> "Trainer":
        state = load_checkpoint(path)
        trainer = cls(ModelConfig.from_dict(state["config"]), device)
        trainer.load_state_dict(state)
        return trainer


def load_generator(path, device: str = "cpu") -> LGGANGenerator:
    """Generator only, in eval mode, for inference."""
    state = load_checkpoint(path)
    generator = LGGANGenerator(ModelConfig.from_dict(state["config"]))
    generator.load_state_dict(state["models"]["generator"])
    return generator.to(device).eval()


def _check_finite(values: dict[str, torch.Tensor]) -> None:
    for name, value in values.items():
        value = float(value.detach())
        if not math.isfinite(value):
            raise TrainingError(f"non-finite loss term {name!r}: {value}")


def checkpoint_name(step: int) -> str:
    return f"ckpt_{step:07d}.ckpt"


def train(config: ModelConfig, dataset: Sequence[PairedSample], out_dir, *, checkpoint_every: int = 500,
          max_steps: Optional[int] = None, resume: Optional[str] = None, device: str = "cpu") -> Trainer:
    """Run epochs x ceil(n / batch_size) steps (or stop at max_steps).

    Writes `losses.jsonl` (one record per step, appended) and checkpoints every
    `checkpoint_every` steps plus one at the end, alongside `latest.ckpt`.
    """
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trainer = Trainer.from_checkpoint(resume, device) if resume else Trainer(config, device)
    config = trainer.config
    per_epoch = steps_per_epoch(len(dataset), config.batch_size)
    total = config.epochs * per_epoch
    if max_steps is not None:
        total = min(total, max_steps)

    with open(out / "losses.jsonl", "a") as log_file:
        while trainer.step < total:
            epoch, offset = divmod(trainer.step, per_epoch)
            for k, batch in enumerate(iterate_batches(dataset, config.batch_size, config.seed, epoch)):
                if k < offset:
                    continue
                record = trainer.train_step(batch)
                log_file.write(json.dumps(record) + "\n")
                log_file.flush()
                if trainer.step % checkpoint_every == 0:
                    trainer.save(out / checkpoint_name(trainer.step))
                if trainer.step % 100 == 0:
                    log.info("step %d: %s", trainer.step, record)
                if trainer.step >= total:
                    break
    final = trainer.save(out / checkpoint_name(trainer.step))
    trainer.save(out / "latest.ckpt")
    log.info("finished at step %d, checkpoint %s", trainer.step, final)
    return trainer
