"""Reconstruction metrics and the latent-neighborhood retrieval proxy."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Metrics:
    psnr: float  # dB; +inf when the images are identical
    latent_l1: float
    pixel_l1: float


def psnr(recon, image) -> float:
    err = float(np.mean((np.asarray(recon, dtype=np.float64) - np.asarray(image, dtype=np.float64)) ** 2))
    return math.inf if err == 0.0 else 10.0 * math.log10(1.0 / err)


def metrics(recon, image, z_pred, z_gt) -> Metrics:
    recon, image = np.asarray(recon, dtype=np.float64), np.asarray(image, dtype=np.float64)
    z_pred, z_gt = np.asarray(z_pred, dtype=np.float64), np.asarray(z_gt, dtype=np.float64)
    if recon.shape != image.shape or z_pred.shape != z_gt.shape:
        raise ValueError("metric inputs must have matching shapes")
    return Metrics(psnr(recon, image), float(np.mean(np.abs(z_pred - z_gt))), float(np.mean(np.abs(recon - image))))


def format_value(x: float) -> str:
    """CSV rendering; infinities become the sentinel strings 'inf' / '-inf'."""
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def retrieval_accuracy(features, labels) -> float:
    """Leave-one-out 1-nearest-neighbor accuracy under L1 distance.

    Ties go to the lowest index.  Every label needs at least two members
    and there must be at least two labels.
    """
    X = np.asarray(features, dtype=np.float64).reshape(len(labels), -1)
    labels = np.asarray(labels)
    values, counts = np.unique(labels, return_counts=True)
    if len(values) < 2 or counts.min() < 2:
        raise ValueError("retrieval proxy needs >= 2 labels with >= 2 items each")
    correct = 0
    for i in range(len(X)):
        dist = np.abs(X - X[i]).sum(axis=1)
        dist[i] = np.inf
        correct += labels[int(np.argmin(dist))] == labels[i]
    return correct / len(X)


def retrieval_proxy(latents, pixels, labels) -> dict[str, float]:
    """1-NN accuracy in latent space and in raw pixel space."""
    return {"latent": retrieval_accuracy(latents, labels), "pixel": retrieval_accuracy(pixels, labels)}
