"""Loss terms and their weighted composition."""

from __future__ import annotations

from dataclasses import dataclass

from . import autodiff as ad
from .autodiff import DimensionError, Tensor


@dataclass
class LossWeights:
    lat: float = 1.0
    id: float = 0.5  # identity term is not computed; slot kept for config parity
    pips: float = 0.8  # weight of the multi-scale L1 perceptual surrogate
    l2: float = 1.0
    energy: float = 3.0

    def __post_init__(self) -> None:
        for k, v in vars(self).items():
            if v < 0:
                raise ValueError(f"loss weight {k} must be non-negative, got {v}")


def _same_shape(a: Tensor, b: Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{what}: shapes {a.shape} and {b.shape} differ")


def latent_loss(z_pred, z_gt) -> Tensor:
    """Mean absolute difference over every latent entry."""
    z_pred, z_gt = ad.as_tensor(z_pred), ad.as_tensor(z_gt)
    _same_shape(z_pred, z_gt, "latent_loss")
    return ad.mean(ad.tabs(z_pred - z_gt))


def mse(a, b) -> Tensor:
    a, b = ad.as_tensor(a), ad.as_tensor(b)
    _same_shape(a, b, "mse")
    return ad.mean(ad.square(a - b))


def multiscale_l1(a, b, scales: int = 3) -> Tensor:
    """Mean of the L1 error at full, 1/2 and 1/4 resolution (2x2 average pooling)."""
    a, b = ad.as_tensor(a), ad.as_tensor(b)
    _same_shape(a, b, "multiscale_l1")
    terms = []
    for s in range(scales):
        if s:
            a, b = ad.avg_pool2x(a), ad.avg_pool2x(b)
        terms.append(ad.mean(ad.tabs(a - b)))
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total * (1.0 / scales)


def pixel_losses(recon, target) -> tuple[Tensor, Tensor]:
    """(mean squared error, multi-scale L1 surrogate)."""
    return mse(recon, target), multiscale_l1(recon, target)


def total_loss(weights: LossWeights, terms: dict[str, Tensor]) -> Tensor:
    """Weighted sum over the terms present; zero-weight terms are left out of the graph."""
    total = None
    for name, value in terms.items():
        w = getattr(weights, name)
        if w == 0.0:
            continue
        part = value * w
        total = part if total is None else total + part
    return total if total is not None else ad.Tensor(0.0)
