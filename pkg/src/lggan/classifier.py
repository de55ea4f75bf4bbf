"""Classification-based discriminative learning on the filtered class features."""
import torch
import torch.nn.functional as F
from torch import nn


def semantic_avg_pool(packed: torch.Tensor, masks: torch.Tensor) -> torch.Tensor:
    """Masked spatial mean of each F_i over its own mask.

    packed [N, c, nf, H, W], masks [N, c, H, W] -> [N, c, nf]; empty masks give zero rows.
    """
    if packed.shape[-2:] != masks.shape[-2:]:
        raise ValueError("masks must be at the feature resolution")
    weighted = (packed * masks.unsqueeze(2)).sum(dim=(-2, -1))
    counts = masks.sum(dim=(-2, -1)).clamp(min=1.0)
    return weighted / counts.unsqueeze(-1)


class ClassClassifier(nn.Module):
    """One linear layer nf -> c shared by every class row."""

    def __init__(self, nf: int, num_classes: int):
        super().__init__()
        self.fc = nn.Linear(nf, num_classes)

    def forward(self, pooled: torch.Tensor) -> torch.Tensor:
        return self.fc(pooled)


def filtered_ce_loss(logits: torch.Tensor, valid: torch.Tensor) -> torch.Tensor:
    """Cross-entropy of row i against label i, kept only where class i is present.

    logits [N, c, c], valid [N, c]. Summed over rows, averaged over the batch.
    """
    n, c, _ = logits.shape
    targets = torch.arange(c, device=logits.device).expand(n, c)
    keep = valid > 0
    if not bool(keep.any()):
        return logits.sum() * 0.0
    ce = F.cross_entropy(logits[keep], targets[keep], reduction="sum")
    return ce / n
