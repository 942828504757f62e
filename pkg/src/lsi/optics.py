"""The optical encoder: a bank of binary DMD masks, one row per measurement."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import DimensionError, Tensor

RAMP_PERCENTAGES = np.round(np.arange(10, 91) / 100.0, 2)


class ConfigurationError(ValueError):
    """Inconsistent configuration values."""


@dataclass
class OpticalEncoder:
    logits: Tensor  # [d, m*n], kept inside [0, 1]
    d: int
    m: int
    n: int
    threshold: float = 0.5

    @property
    def mn(self) -> int:
        return self.m * self.n

    def binary(self) -> np.ndarray:
        """The deployed {0,1} mask matrix (no graph)."""
        return (np.clip(self.logits.data, 0.0, 1.0) >= self.threshold).astype(np.float64)

    def masks(self) -> np.ndarray:
        return self.binary().reshape(self.d, self.m, self.n)

    def project(self) -> None:
        np.clip(self.logits.data, 0.0, 1.0, out=self.logits.data)


@dataclass
class EnergyTargets:
    percentages: np.ndarray  # [d]
    eps: np.ndarray  # [d] target one-counts


def init_balanced(d: int, m: int, n: int, seed: int, threshold: float = 0.5) -> OpticalEncoder:
    """Uniform logits, rank-shifted per row so exactly floor(mn/2) binarize to one.

    Within a row, the ``mn - mn//2`` lowest-ranked draws are spread uniformly
    over [0, threshold) and the rest over [threshold, 1), preserving each
    draw's rank and its within-stratum jitter.
    """
    mn = m * n
    if d < 1 or mn < 2:
        raise ConfigurationError(f"need d >= 1 and mn >= 2, got d={d}, mn={mn}")
    if d > mn:
        raise ConfigurationError(f"d={d} exceeds pixel count mn={mn}")
    rng = np.random.default_rng(seed)
    u = rng.random((d, mn))
    jitter = rng.random((d, mn))
    ranks = np.argsort(np.argsort(u, axis=1, kind="stable"), axis=1, kind="stable")
    n_ones = mn // 2
    n_zeros = mn - n_ones
    logits = np.where(
        ranks < n_zeros,
        threshold * (ranks + jitter) / n_zeros,
        threshold + (1.0 - threshold) * (ranks - n_zeros + jitter) / max(n_ones, 1),
    )
    logits = np.minimum(logits, np.nextafter(1.0, 0.0))
    return OpticalEncoder(Tensor(logits, requires_grad=True, name="optics.logits"), d, m, n, threshold)


def quantize_ste(logits: Tensor, threshold: float = 0.5) -> Tensor:
    """Binarize on the forward pass; identity gradient on the unsaturated interior.

    Entries sitting at (or beyond) the clamp bounds 0 and 1 receive zero
    gradient, mirroring a clamp in front of the straight-through estimator.
    """
    x = logits.data
    clipped = np.clip(x, 0.0, 1.0)
    forward = (clipped >= threshold).astype(np.float64)
    interior = (x > 0.0) & (x < 1.0)
    return ad.straight_through(logits, forward, interior)


def binarized(enc: OpticalEncoder) -> Tensor:
    return quantize_ste(enc.logits, enc.threshold)


def measure(enc: OpticalEncoder, image, B: Tensor | None = None) -> Tensor:
    """c = B . vec(sum over channels of image).

    ``image`` may be [C, m, n] (returns [d]) or a batch [N, C, m, n]
    (returns [N, d]).  Pass a precomputed STE matrix ``B`` to share one
    graph node between several calls in a step.
    """
    image = ad.as_tensor(image)
    if image.ndim not in (3, 4) or image.shape[-2:] != (enc.m, enc.n):
        raise DimensionError(f"image shape {image.shape} does not match masks {enc.m}x{enc.n}")
    if B is None:
        B = binarized(enc)
    flat = ad.tsum(image, axis=-3)
    if image.ndim == 3:
        vec = ad.reshape(flat, (enc.mn, 1))
        return ad.reshape(ad.matmul(B, vec), (enc.d,))
    vec = ad.reshape(flat, (image.shape[0], enc.mn))
    return ad.matmul(vec, ad.transpose(B, (1, 0)))


def measure_array(enc: OpticalEncoder, images: np.ndarray) -> np.ndarray:
    """Graph-free measurement for a batch [N, C, m, n] -> [N, d]."""
    flat = images.sum(axis=-3).reshape(images.shape[0], enc.mn)
    return flat @ enc.binary().T


def energy_targets(d: int, mn: int, seed: int | None) -> EnergyTargets:
    """Cycle the 10%..90% ramp to length d and shuffle it (``seed=None`` keeps order)."""
    if d < 1:
        raise ConfigurationError("d must be >= 1")
    reps = -(-d // RAMP_PERCENTAGES.size)
    p = np.tile(RAMP_PERCENTAGES, reps)[:d]
    if seed is not None:
        p = p[np.random.default_rng(seed).permutation(d)]
    return EnergyTargets(p, np.round(p * mn))


def energy_loss(enc: OpticalEncoder, targets: EnergyTargets, normalized: bool = False,
                B: Tensor | None = None) -> Tensor:
    """(1/d) * sum_j | rowsum_j(B) - eps_j |, evaluated on the STE-binarized masks."""
    if targets.eps.shape != (enc.d,):
        raise DimensionError(f"{targets.eps.shape[0]} targets for {enc.d} masks")
    if B is None:
        B = binarized(enc)
    dev = ad.tabs(ad.sub(ad.tsum(B, axis=1), targets.eps))
    loss = ad.mean(dev)
    return loss * (1.0 / enc.mn) if normalized else loss


def occupancy_histogram(enc: OpticalEncoder) -> np.ndarray:
    return enc.binary().sum(axis=1).astype(np.int64)
