"""Two-phase joint training of the mask bank and the digital encoder.

Phase 1 minimizes the weighted latent + pixel objective until validation
latent error stalls (or an epoch cap).  Phase 2 continues with the
occupancy (energy) term added.  Lion updates the mask logits, Ranger the
digital encoder; the decoder and inversion network stay frozen.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .decoder import Generator, InversionEncoder, batched, psnr
from .encoder import DigitalEncoder, EncoderConfig
from .losses import LossWeights, latent_loss, pixel_losses, total_loss
from .nn import NumericError
from .optics import (
    EnergyTargets,
    OpticalEncoder,
    binarized,
    energy_loss,
    energy_targets,
    init_balanced,
    measure,
    measure_array,
    occupancy_histogram,
)
from .optim import Lion, ranger

log = logging.getLogger(__name__)

LOG_COLUMNS = ["epoch", "phase", "lat", "pips", "l2", "energy", "total", "val_lat", "val_psnr",
               "occupancy_mean", "occupancy_std"]


@dataclass
class TrainConfig:
    d: int = 16
    seed: int = 0
    batch_size: int = 32
    lr_mask: float = 1e-4
    lr_enc: float = 1e-4
    lion_betas: tuple[float, float] = (0.9, 0.99)
    lion_weight_decay: float = 0.0
    radam_betas: tuple[float, float] = (0.9, 0.999)
    lookahead_k: int = 5
    lookahead_alpha: float = 0.5
    phase1_epochs: int = 40
    phase2_epochs: int = 20
    patience: int = 5
    min_improvement: float = 0.01
    energy_normalized: bool = False
    threshold: float = 0.5


@dataclass
class TrainedSystem:
    optics: OpticalEncoder
    encoder: DigitalEncoder
    targets: EnergyTargets
    log: list[dict] = field(default_factory=list)
    phase1_occupancy: np.ndarray | None = None
    phase1_epochs: int = 0


def converged(history: list[float], patience: int, min_improvement: float) -> bool:
    """True when the best value improved by < ``min_improvement`` (relative) over ``patience`` epochs."""
    if len(history) <= patience:
        return False
    before = min(history[:-patience])
    recent = min(history[-patience:])
    return recent > before * (1.0 - min_improvement)


class LSITrainer:
    """Owns all trainable state of one run; G and N must already be frozen."""

    def __init__(self, G: Generator, N: InversionEncoder, ecfg: EncoderConfig, tcfg: TrainConfig,
                 weights: LossWeights, image_shape: tuple[int, int, int]):
        if any(p.requires_grad for p in G.parameters() + N.parameters()):
            raise ValueError("decoder and inversion network must be frozen before LSI training")
        self.G, self.N = G, N
        self.tcfg, self.weights = tcfg, weights
        C, m, n = image_shape
        self.channels = C
        self.optics = init_balanced(tcfg.d, m, n, seed=tcfg.seed, threshold=tcfg.threshold)
        self.encoder = DigitalEncoder(ecfg, seed=tcfg.seed)
        self.targets = energy_targets(tcfg.d, m * n, seed=tcfg.seed)
        self.lion = Lion([self.optics.logits], lr=tcfg.lr_mask, betas=tcfg.lion_betas,
                         weight_decay=tcfg.lion_weight_decay, bounds=(0.0, 1.0))
        self.ranger = ranger(self.encoder.parameters(), lr=tcfg.lr_enc, betas=tcfg.radam_betas,
                             k=tcfg.lookahead_k, alpha=tcfg.lookahead_alpha)
        self.rng = np.random.default_rng(tcfg.seed)
        self._frozen = (G.checksum(), N.checksum())
        self.last_terms: dict[str, float] = {}

    def loss_terms(self, images: np.ndarray, z_gt: np.ndarray, with_energy: bool) -> dict[str, Tensor]:
        B = binarized(self.optics)
        z = self.encoder(measure(self.optics, Tensor(images), B))
        terms = {"lat": latent_loss(z, Tensor(z_gt))}
        if self.weights.l2 or self.weights.pips:
            l2, pips = pixel_losses(self.G(z), Tensor(images))
            terms["pips"], terms["l2"] = pips, l2
        if with_energy:
            terms["energy"] = energy_loss(self.optics, self.targets, self.tcfg.energy_normalized, B)
        return terms

    def step(self, images: np.ndarray, z_gt: np.ndarray, with_energy: bool) -> float:
        self.lion.zero_grad()
        self.ranger.zero_grad()
        terms = self.loss_terms(images, z_gt, with_energy)
        loss = total_loss(self.weights, terms)
        value = loss.item()
        if not np.isfinite(value):
            raise NumericError(f"training loss became {value}")
        loss.backward()
        self.lion.step()
        self.ranger.step()
        self.last_terms = {k: v.item() for k, v in terms.items()}
        self.last_terms["total"] = value
        return value

    def refit_normalization(self, train: np.ndarray) -> None:
        """Re-estimate the encoder's input standardization under the current masks."""
        self.encoder.fit_normalization(measure_array(self.optics, train))

    def epoch(self, train: np.ndarray, z_train: np.ndarray, with_energy: bool) -> dict[str, float]:
        self.refit_normalization(train)
        order = self.rng.permutation(len(train))
        sums: dict[str, float] = {}
        batches = 0
        for start in range(0, len(order), self.tcfg.batch_size):
            idx = order[start:start + self.tcfg.batch_size]
            self.step(train[idx], z_train[idx], with_energy)
            for k, v in self.last_terms.items():
                sums[k] = sums.get(k, 0.0) + v
            batches += 1
        if (self.G.checksum(), self.N.checksum()) != self._frozen:
            raise AssertionError("frozen decoder/inversion weights were mutated during training")
        return {k: v / batches for k, v in sums.items()}

    def evaluate(self, images: np.ndarray, z_gt: np.ndarray) -> tuple[float, float]:
        """(mean latent L1, mean per-image PSNR) on a held-out set."""
        z = batched(self.encoder, measure_array(self.optics, images))
        recon = batched(self.G, z)
        lat = float(np.mean(np.abs(z - z_gt)))
        return lat, float(np.mean([psnr(r, x) for r, x in zip(recon, images)]))

    def energy_value(self) -> float:
        occ = occupancy_histogram(self.optics)
        val = float(np.mean(np.abs(occ - self.targets.eps)))
        return val / self.optics.mn if self.tcfg.energy_normalized else val


def train_lsi(train: np.ndarray, val: np.ndarray, G: Generator, N: InversionEncoder,
              ecfg: EncoderConfig, tcfg: TrainConfig, weights: LossWeights,
              log_path: Path | None = None, progress=None) -> TrainedSystem:
    trainer = LSITrainer(G, N, ecfg, tcfg, weights, train.shape[1:])
    z_train = batched(N, train)
    z_val = batched(N, val)
    rows: list[dict] = []
    val_hist: list[float] = []
    writer = None
    fh = None
    if log_path is not None:
        fh = open(log_path, "w", newline="")
        writer = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
        writer.writeheader()

    def record(epoch: int, phase: int, means: dict[str, float]) -> None:
        val_lat, val_psnr = trainer.evaluate(val, z_val)
        occ = occupancy_histogram(trainer.optics)
        row = {"epoch": epoch, "phase": phase,
               "lat": means.get("lat", 0.0), "pips": means.get("pips", 0.0), "l2": means.get("l2", 0.0),
               "energy": means.get("energy", trainer.energy_value()), "total": means["total"],
               "val_lat": val_lat, "val_psnr": val_psnr,
               "occupancy_mean": float(occ.mean()), "occupancy_std": float(occ.std())}
        rows.append(row)
        val_hist.append(val_lat)
        if writer is not None:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
            fh.flush()
        log.info("epoch %d phase %d total %.5f val_lat %.5f val_psnr %.2f", epoch, phase,
                 row["total"], val_lat, val_psnr)
        if progress is not None:
            progress(row)

    try:
        epoch = 0
        for _ in range(tcfg.phase1_epochs):
            epoch += 1
            record(epoch, 1, trainer.epoch(train, z_train, with_energy=False))
            if converged(val_hist, tcfg.patience, tcfg.min_improvement):
                break
        phase1_occ = occupancy_histogram(trainer.optics)
        phase1_epochs = epoch
        use_energy = weights.energy > 0
        for _ in range(tcfg.phase2_epochs):
            epoch += 1
            record(epoch, 2, trainer.epoch(train, z_train, with_energy=use_energy))
    finally:
        if fh is not None:
            fh.close()
    return TrainedSystem(trainer.optics, trainer.encoder, trainer.targets, rows, phase1_occ, phase1_epochs)


def config_dict(tcfg: TrainConfig) -> dict:
    return asdict(tcfg)
