"""Desk-scale frozen generative decoder G and its inversion encoder N.

G grows a learned 4x4 seed map through one upsample+conv stage per latent
level; each level's latent drives a FiLM (scale, shift) modulation of that
stage.  N is a strided conv pyramid whose deepest features give level 1 and
shallower features the finer levels.  The pair is trained as an
autoencoder and then frozen.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import DimensionError, Tensor
from .encoder import LatentStack
from .losses import multiscale_l1, mse
from .metrics import psnr
from .nn import Module, NumericError, he_normal, linear
from .optim import ranger

log = logging.getLogger(__name__)


@dataclass
class DecoderConfig:
    levels: int = 4
    c_lat: int = 64
    channels: int = 1  # image channels
    gen_widths: tuple[int, ...] = (64, 48, 32, 16)
    inv_widths: tuple[int, ...] = (16, 24, 32, 48)

    def __post_init__(self) -> None:
        self.gen_widths = tuple(int(w) for w in self.gen_widths)
        self.inv_widths = tuple(int(w) for w in self.inv_widths)
        if len(self.gen_widths) != self.levels or len(self.inv_widths) != self.levels:
            raise ValueError("one generator and one inversion width per level is required")

    @property
    def size(self) -> int:
        return 4 * 2 ** (self.levels - 1)


class Generator(Module):
    prefix = "gen"

    def __init__(self, cfg: DecoderConfig, seed: int = 0):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        widths = cfg.gen_widths
        self.add("seed", rng.normal(0.0, 1.0, size=(widths[0], 4, 4)))
        prev = widths[0]
        for i, w in enumerate(widths):
            self.add(f"l{i}.conv_w", he_normal(rng, (w, prev, 3, 3), prev * 9))
            self.add(f"l{i}.conv_b", np.zeros(w))
            self.add(f"l{i}.mod_w", he_normal(rng, (cfg.c_lat, 2 * w), cfg.c_lat, gain=0.25))
            self.add(f"l{i}.mod_b", np.zeros(2 * w))
            prev = w
        self.add("out_w", he_normal(rng, (cfg.channels, prev, 3, 3), prev * 9, gain=0.5))
        self.add("out_b", np.zeros(cfg.channels))

    def forward(self, z) -> Tensor:
        """[B, l, c_lat] -> [B, C, m, n] in [0, 1] (unbatched in, unbatched out)."""
        z = ad.as_tensor(z)
        cfg = self.cfg
        single = z.ndim == 2
        if single:
            z = ad.reshape(z, (1,) + z.shape)
        if z.ndim != 3 or z.shape[1:] != (cfg.levels, cfg.c_lat):
            raise DimensionError(f"generator expects [{cfg.levels}, {cfg.c_lat}] latents, got {z.shape}")
        batch = z.shape[0]
        h = ad.add(ad.Tensor(np.zeros((batch, 1, 1, 1))), ad.reshape(self["seed"], (1,) + self["seed"].shape))
        for i, w in enumerate(cfg.gen_widths):
            if i:
                h = ad.upsample2x_nearest(h)
            h = ad.conv2d(h, self[f"l{i}.conv_w"], stride=1, pad=1) + ad.reshape(self[f"l{i}.conv_b"], (1, w, 1, 1))
            style = linear(z[:, i, :], self[f"l{i}.mod_w"], self[f"l{i}.mod_b"])
            scale = ad.reshape(style[:, :w], (batch, w, 1, 1))
            shift = ad.reshape(style[:, w:], (batch, w, 1, 1))
            h = ad.leaky_relu(h * (scale + 1.0) + shift)
        out = ad.conv2d(h, self["out_w"], stride=1, pad=1) + ad.reshape(self["out_b"], (1, cfg.channels, 1, 1))
        img = ad.sigmoid(out)
        return ad.reshape(img, img.shape[1:]) if single else img

    __call__ = forward


class InversionEncoder(Module):
    prefix = "inv"

    def __init__(self, cfg: DecoderConfig, seed: int = 0):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(seed + 1)
        prev = cfg.channels
        # stage 0 keeps full resolution; later stages halve it
        for i, w in enumerate(cfg.inv_widths):
            self.add(f"s{i}.conv_w", he_normal(rng, (w, prev, 3, 3), prev * 9))
            self.add(f"s{i}.conv_b", np.zeros(w))
            prev = w
        for i, w in enumerate(cfg.inv_widths):
            feat = w * 16  # every head sees its stage pooled to 4x4
            level = cfg.levels - 1 - i
            self.add(f"head{level}.w", he_normal(rng, (feat, cfg.c_lat), feat, gain=0.5))
            self.add(f"head{level}.b", np.zeros(cfg.c_lat))

    def forward(self, image) -> Tensor:
        cfg = self.cfg
        x = ad.as_tensor(image)
        single = x.ndim == 3
        if single:
            x = ad.reshape(x, (1,) + x.shape)
        expect = (cfg.channels, cfg.size, cfg.size)
        if x.ndim != 4 or x.shape[1:] != expect:
            raise DimensionError(f"inversion encoder expects images {expect}, got {x.shape}")
        batch = x.shape[0]
        heads: dict[int, Tensor] = {}
        for i, w in enumerate(cfg.inv_widths):
            x = ad.conv2d(x, self[f"s{i}.conv_w"], stride=1 if i == 0 else 2, pad=1)
            x = ad.leaky_relu(x + ad.reshape(self[f"s{i}.conv_b"], (1, w, 1, 1)))
            pooled = x
            while pooled.shape[-1] > 4:
                pooled = ad.avg_pool2x(pooled)
            level = cfg.levels - 1 - i
            heads[level] = linear(ad.reshape(pooled, (batch, w * 16)), self[f"head{level}.w"], self[f"head{level}.b"])
        z = ad.stack([heads[k] for k in range(cfg.levels)], axis=1)
        return ad.reshape(z, z.shape[1:]) if single else z

    __call__ = forward


def generate(G: Generator, z) -> Tensor:
    if isinstance(z, LatentStack):
        z = z.values
    z = ad.as_tensor(z)
    if z.shape[-2] != G.cfg.levels:
        raise DimensionError(f"latent has {z.shape[-2]} levels, generator has {G.cfg.levels}")
    return G(z)


def invert(N: InversionEncoder, image) -> LatentStack:
    return LatentStack(N(image))


def batched(fn, arrays: np.ndarray, batch: int = 128) -> np.ndarray:
    """Graph-free evaluation of ``fn`` over the leading axis in chunks."""
    out = [fn(Tensor(arrays[i:i + batch])).data for i in range(0, len(arrays), batch)]
    return np.concatenate(out, axis=0)


@dataclass
class PretrainConfig:
    epochs: int = 60
    batch_size: int = 32
    lr: float = 1e-3
    l1_weight: float = 1.0
    seed: int = 0


@dataclass
class PretrainReport:
    train_loss: list[float] = field(default_factory=list)
    val_psnr: list[float] = field(default_factory=list)
    heldout_psnr: float = float("nan")

    def rows(self) -> list[dict]:
        return [{"epoch": i + 1, "train_loss": l, "val_psnr": p}
                for i, (l, p) in enumerate(zip(self.train_loss, self.val_psnr))]


def autoencoder_loss(G: Generator, N: InversionEncoder, images: np.ndarray, l1_weight: float) -> Tensor:
    x = Tensor(images)
    recon = G(N(x))
    return mse(recon, x) + l1_weight * multiscale_l1(recon, x)


def pretrain_autoencoder(train: np.ndarray, val: np.ndarray, dcfg: DecoderConfig, pcfg: PretrainConfig,
                         progress=None) -> tuple[Generator, InversionEncoder, PretrainReport]:
    """Fit G(N(I)) ~ I with Ranger; returns frozen models and the training curve."""
    G = Generator(dcfg, seed=pcfg.seed)
    N = InversionEncoder(dcfg, seed=pcfg.seed)
    params = G.parameters() + N.parameters()
    opt = ranger(params, lr=pcfg.lr)
    rng = np.random.default_rng(pcfg.seed)
    report = PretrainReport()
    for epoch in range(pcfg.epochs):
        order = rng.permutation(len(train))
        losses = []
        for start in range(0, len(order), pcfg.batch_size):
            idx = order[start:start + pcfg.batch_size]
            opt.zero_grad()
            loss = autoencoder_loss(G, N, train[idx], pcfg.l1_weight)
            if not np.isfinite(loss.item()):
                raise NumericError(f"autoencoder loss became {loss.item()} at epoch {epoch + 1}")
            loss.backward()
            opt.step()
            losses.append(loss.item())
        recon = batched(lambda t: G(N(t)), val)
        report.train_loss.append(float(np.mean(losses)))
        report.val_psnr.append(psnr(recon, val))
        log.info("pretrain epoch %d loss %.5f val psnr %.2f", epoch + 1, report.train_loss[-1], report.val_psnr[-1])
        if progress is not None:
            progress(epoch + 1, report)
    G.freeze()
    N.freeze()
    return G, N, report
