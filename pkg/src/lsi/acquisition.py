"""Simulated photodiode + ADC, white-image calibration, and fine-tuning on sensed data."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .decoder import Generator, InversionEncoder, batched, psnr
from .encoder import DigitalEncoder
from .optics import ConfigurationError, OpticalEncoder, measure_array

log = logging.getLogger(__name__)

MIN_FINETUNE_PAIRS = 10
WHITE_INDEX = 2 ** 32 - 1  # noise stream reserved for the white calibration frame


class DomainError(ValueError):
    pass


class CalibrationError(RuntimeError):
    pass


@dataclass
class SensorModel:
    """v = gain*c + bias (+ shot + read noise), clipped to the ADC range and quantized.

    ``c`` is the ideal dot product in pixel-count units.  ``saturation`` > 0
    enables a speculative soft-saturation stage ``sat * tanh(v / sat)``
    before the ADC; it is off by default.
    """

    gain: float = 1.0
    bias: float = 0.0
    read_sigma: float = 0.0
    shot_scale: float = 0.0
    adc_bits: int = 16
    adc_lo: float = 0.0
    adc_hi: float = 2048.0
    saturation: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not 8 <= int(self.adc_bits) <= 16:
            raise ConfigurationError(f"adc_bits must lie in [8, 16], got {self.adc_bits}")
        if self.adc_hi <= self.adc_lo:
            raise ConfigurationError("ADC range must satisfy hi > lo")
        if self.read_sigma < 0 or self.shot_scale < 0:
            raise ConfigurationError("noise parameters must be non-negative")

    @property
    def step(self) -> float:
        return (self.adc_hi - self.adc_lo) / (2 ** int(self.adc_bits) - 1)

    @property
    def full_scale(self) -> float:
        return self.adc_hi - self.adc_lo

    def quantize(self, v: np.ndarray) -> np.ndarray:
        v = np.clip(v, self.adc_lo, self.adc_hi)
        return self.adc_lo + np.round((v - self.adc_lo) / self.step) * self.step


def sense(model: SensorModel, c_ideal, index: int = 0) -> np.ndarray:
    """Simulated ADC readings for one exposure sequence.

    Noise for image ``index`` comes from its own stream seeded by
    ``(model.seed, index)``, so sensing is reproducible and order-free.
    """
    c = np.asarray(c_ideal, dtype=np.float64)
    if np.any(c < 0):
        raise DomainError("ideal measurements must be non-negative")
    rng = np.random.default_rng([int(model.seed), int(index)])
    if model.shot_scale > 0:
        c = model.shot_scale * rng.poisson(c / model.shot_scale)
    v = model.gain * c + model.bias
    if model.read_sigma > 0:
        v = v + rng.normal(0.0, model.read_sigma, size=v.shape)
    if model.saturation > 0:
        v = model.saturation * np.tanh(v / model.saturation)
    return model.quantize(v)


def sense_batch(model: SensorModel, c_ideal: np.ndarray, offset: int = 0) -> np.ndarray:
    return np.stack([sense(model, row, index=offset + i) for i, row in enumerate(c_ideal)])


def expected_white(enc: OpticalEncoder, channels: int = 1) -> np.ndarray:
    return enc.binary().sum(axis=1) * channels


def calibrate_white(v_white: np.ndarray, expected) -> float:
    """Global scale s = sum(expected counts) / sum(measured readings).

    ``expected`` is either the mask bank (one-counts are derived from it)
    or the expected counts themselves.
    """
    if isinstance(expected, OpticalEncoder):
        expected = expected_white(expected)
    total = float(np.sum(v_white))
    if total == 0.0:
        raise CalibrationError("white-image readings sum to zero; cannot calibrate")
    return float(np.sum(expected)) / total


def white_scale(model: SensorModel, enc: OpticalEncoder, channels: int = 1) -> float:
    white = np.ones((1, channels, enc.m, enc.n))
    v = sense(model, measure_array(enc, white)[0], index=WHITE_INDEX)
    return calibrate_white(v, expected_white(enc, channels))


def sensed_measurements(model: SensorModel, enc: OpticalEncoder, images: np.ndarray, scale: float,
                        offset: int = 0) -> np.ndarray:
    return scale * sense_batch(model, measure_array(enc, images), offset)


def write_sensed_csv(path, measurements: np.ndarray, image_paths) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"m{j}" for j in range(measurements.shape[1])] + ["path"])
        for row, p in zip(measurements, image_paths):
            w.writerow([repr(float(x)) for x in row] + [p])


def read_sensed_csv(path) -> tuple[np.ndarray, list[str]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    body = rows[1:]
    return np.array([[float(x) for x in r[:-1]] for r in body]), [r[-1] for r in body]


@dataclass
class FinetuneConfig:
    lr: float = 1e-5
    epochs: int = 30
    batch_size: int = 32
    n_pairs: int = 200
    seed: int = 0


@dataclass
class FinetuneReport:
    pre_psnr: float
    post_psnr: float
    losses: list[float] = field(default_factory=list)

    @property
    def gain_db(self) -> float:
        return self.post_psnr - self.pre_psnr


def lsi_psnr(E: DigitalEncoder, G: Generator, measurements: np.ndarray, images: np.ndarray) -> float:
    """Mean per-image PSNR of G(E(c)) against the ground truth."""
    recon = batched(lambda t: G(E(t)), measurements)
    return float(np.mean([psnr(r, x) for r, x in zip(recon, images)]))


def finetune(E: DigitalEncoder, train_meas: np.ndarray, train_images: np.ndarray,
             val_meas: np.ndarray, val_images: np.ndarray, G: Generator, N: InversionEncoder,
             weights, cfg: FinetuneConfig) -> FinetuneReport:
    """Adapt only the digital encoder to sensed measurements (masks, G and N stay frozen)."""
    from .losses import latent_loss, pixel_losses, total_loss
    from .optim import ranger
    from .autodiff import Tensor

    if len(train_meas) < MIN_FINETUNE_PAIRS:
        raise ConfigurationError(f"fine-tuning needs at least {MIN_FINETUNE_PAIRS} pairs, got {len(train_meas)}")
    frozen = (G.checksum(), N.checksum())
    pre = lsi_psnr(E, G, val_meas, val_images)
    z_gt = batched(N, train_images)
    opt = ranger(E.parameters(), lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    report = FinetuneReport(pre, pre)
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train_meas))
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            opt.zero_grad()
            z = E(Tensor(train_meas[idx]))
            l2, pips = pixel_losses(G(z), Tensor(train_images[idx]))
            loss = total_loss(weights, {"lat": latent_loss(z, Tensor(z_gt[idx])), "pips": pips, "l2": l2})
            loss.backward()
            opt.step()
            report.losses.append(loss.item())
    if (G.checksum(), N.checksum()) != frozen:
        raise AssertionError("frozen decoder weights changed during fine-tuning")
    report.post_psnr = lsi_psnr(E, G, val_meas, val_images)
    log.info("fine-tune PSNR %.3f -> %.3f dB", report.pre_psnr, report.post_psnr)
    return report
