"""End-to-end desk pipeline shared by the CLI and the acceptance suite.

Model bundles are stored in the binary checkpoint format: the frozen
autoencoder (``gen.*``, ``inv.*``) and a full system (those plus
``optics.logits`` and ``enc.*``).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint
from .acquisition import (
    FinetuneConfig,
    SensorModel,
    finetune,
    sensed_measurements,
    white_scale,
)
from .autodiff import Tensor
from .config import ConfigError, RunConfig
from .data import Dataset, load_dataset, make_desk_dataset
from .decoder import DecoderConfig, Generator, InversionEncoder, batched, pretrain_autoencoder
from .encoder import DigitalEncoder
from .fsi import fsi_image
from .metrics import Metrics, format_value, metrics, psnr, retrieval_proxy
from .optics import OpticalEncoder, measure_array
from .training import TrainedSystem, train_lsi

log = logging.getLogger(__name__)


class MissingDependency(RuntimeError):
    """A required artifact is absent; names the subcommand that produces it."""

    def __init__(self, what: str, producer: str):
        super().__init__(f"{what} is required; produce it with `lsi {producer}` "
                         f"and pass its path via --set checkpoint.{'autoencoder' if producer == 'pretrain' else 'system'}=PATH")
        self.producer = producer


@dataclass
class System:
    optics: OpticalEncoder
    encoder: DigitalEncoder
    G: Generator
    N: InversionEncoder

    @property
    def d(self) -> int:
        return self.optics.d

    def latents(self, images: np.ndarray) -> np.ndarray:
        return batched(self.encoder, measure_array(self.optics, images))

    def reconstruct(self, images: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        z = self.latents(images)
        return batched(self.G, z), z


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------

def dataset(cfg: RunConfig, manifest: Path | None = None) -> Dataset:
    data = cfg["data"]
    directory = Path(data["dir"])
    if not directory.is_dir():
        raise ConfigError(f"data.dir {directory} does not exist (create it with `lsi make-dataset`)")
    size = int(data["size"])
    if size != cfg.decoder().size:
        raise ConfigError(f"data.size {size} must equal the decoder output size {cfg.decoder().size}")
    if data["manifest"]:
        manifest = Path(data["manifest"])
    return load_dataset(directory, (size, size), int(data["channels"]), int(cfg["run"]["seed"]),
                        manifest, int(data["min_images"]))


def ensure_desk_dataset(directory, count: int = 1797, size: int = 32, seed: int = 0) -> Path:
    directory = Path(directory)
    if not (directory / "labels.tsv").exists():
        make_desk_dataset(directory, count=count, size=size, seed=seed)
    return directory


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def _require(path: str, what: str, producer: str) -> Path:
    if not path or not Path(path).is_file():
        raise MissingDependency(what, producer)
    return Path(path)


def save_autoencoder(path, G: Generator, N: InversionEncoder) -> None:
    checkpoint.save(path, {**G.state(), **N.state()})


def load_autoencoder(path, dcfg: DecoderConfig) -> tuple[Generator, InversionEncoder]:
    tensors = checkpoint.load(_require(str(path), "an autoencoder checkpoint", "pretrain"))
    G, N = Generator(dcfg), InversionEncoder(dcfg)
    try:
        G.load_state(tensors)
        N.load_state(tensors)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"autoencoder checkpoint does not match the decoder config: {exc}") from None
    G.freeze()
    N.freeze()
    return G, N


def save_system(path, system: System) -> None:
    checkpoint.save(path, {**system.G.state(), **system.N.state(), **system.encoder.state(),
                           "optics.logits": system.optics.logits.data})


def load_system(path, cfg: RunConfig) -> System:
    tensors = checkpoint.load(_require(str(path), "a trained system checkpoint", "train"))
    if "optics.logits" not in tensors:
        raise ConfigError(f"{path} is not a system checkpoint (no optics.logits)")
    logits = tensors["optics.logits"].astype(np.float64)
    d, mn = logits.shape
    size = int(cfg["data"]["size"])
    if mn != size * size:
        raise ConfigError(f"checkpoint masks cover {mn} pixels, data.size gives {size * size}")
    dcfg = cfg.decoder()
    G, N = Generator(dcfg), InversionEncoder(dcfg)
    E = DigitalEncoder(cfg.encoder(d=d))
    try:
        for module in (G, N, E):
            module.load_state(tensors)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"system checkpoint does not match the config: {exc}") from None
    for module in (G, N, E):
        module.freeze()
    optics = OpticalEncoder(Tensor(logits), d, size, size, float(cfg["train"]["threshold"]))
    return System(optics, E, G, N)


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def pretrain(cfg: RunConfig, ds: Dataset, progress=None):
    G, N, report = pretrain_autoencoder(ds.subset("train"), ds.subset("val"), cfg.decoder(), cfg.pretrain(),
                                        progress)
    test = ds.subset("test")
    report.heldout_psnr = psnr(batched(lambda t: G(N(t)), test), test)
    return G, N, report


def train(cfg: RunConfig, ds: Dataset, G: Generator, N: InversionEncoder, d: int | None = None,
          log_path: Path | None = None) -> tuple[System, TrainedSystem]:
    tcfg = cfg.train(d)
    trained = train_lsi(ds.subset("train"), ds.subset("val"), G, N, cfg.encoder(tcfg.d), tcfg, cfg.losses(),
                        log_path)
    trained.encoder.freeze()
    return System(trained.optics, trained.encoder, G, N), trained


def evaluate(system: System, images: np.ndarray) -> list[Metrics]:
    recon, z = system.reconstruct(images)
    z_gt = batched(system.N, images)
    return [metrics(r, x, zp, zg) for r, x, zp, zg in zip(recon, images, z, z_gt)]


def summarize(rows: list[Metrics]) -> dict[str, float]:
    return {
        "psnr": float(np.mean([m.psnr for m in rows])),
        "latent_l1": float(np.mean([m.latent_l1 for m in rows])),
        "pixel_l1": float(np.mean([m.pixel_l1 for m in rows])),
    }


def fsi_psnr(images: np.ndarray, budget: int, sensor: SensorModel | None = None, scale: float = 1.0) -> float:
    """Mean per-image PSNR of the inverse-DFT baseline at ``budget`` total readings."""
    vals = []
    for img in images:
        rec = fsi_image(img[0], budget, sensor, scale)
        vals.append(psnr(rec, img[0]))
    return float(np.mean(vals))


def retrieval(system: System, images: np.ndarray, labels) -> dict[str, float]:
    """Latent vs pixel 1-NN accuracy; labels with a single member are left out."""
    labels = np.asarray(labels)
    values, counts = np.unique(labels, return_counts=True)
    keep = np.isin(labels, values[counts >= 2])
    return retrieval_proxy(system.latents(images[keep]), images[keep], labels[keep])


@dataclass
class FinetuneResult:
    scale: float
    true_gain: float
    pre_psnr: float
    post_psnr: float

    @property
    def scale_error(self) -> float:
        return abs(1.0 / self.scale - self.true_gain) / self.true_gain


def calibrate_and_finetune(system: System, ds: Dataset, sensor: SensorModel, fcfg: FinetuneConfig,
                           weights) -> tuple[FinetuneResult, DigitalEncoder]:
    """White-image calibration, then fine-tune a copy of E on sensed training pairs.

    Validation uses the held-out test split, sensed with noise streams
    disjoint from the training pairs.
    """
    scale = white_scale(sensor, system.optics, ds.shape[0])
    train_imgs = ds.subset("train")[: fcfg.n_pairs]
    test_imgs = ds.subset("test")
    train_meas = sensed_measurements(sensor, system.optics, train_imgs, scale, offset=0)
    test_meas = sensed_measurements(sensor, system.optics, test_imgs, scale, offset=len(ds.ids))
    E = DigitalEncoder(system.encoder.cfg)
    E.load_state(system.encoder.state())
    report = finetune(E, train_meas, train_imgs, test_meas, test_imgs, system.G, system.N, weights, fcfg)
    E.freeze()
    return FinetuneResult(scale, sensor.gain, report.pre_psnr, report.post_psnr), E


# ---------------------------------------------------------------------------
# CSV helpers
# ---------------------------------------------------------------------------

def write_csv(path, rows: list[dict], columns: list[str] | None = None) -> Path:
    columns = columns or list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([format_value(r[c]) if isinstance(r[c], float) else r[c] for c in columns])
    return Path(path)


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))

