"""Digital encoder: measurement vector -> multi-level latent stack.

Three coarse-to-fine blocks of per-level perceptrons, chained through MIX
(spatial gating) units, followed by a final MIX across all levels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import DimensionError, Tensor
from .nn import Module, check_finite, he_normal, linear
from .optics import ConfigurationError


@dataclass
class EncoderConfig:
    d: int = 16
    levels: int = 4
    c_lat: int = 64
    split: tuple[int, int, int] = (1, 1, 2)
    hidden: int = 128
    mix_expansion: int = 4
    depths: tuple[int, int, int] = (2, 3, 4)
    # measurements are counts of up to mn*C; this brings them to O(1) until
    # the standardization buffers are fitted to real measurements
    input_scale: float = 1.0 / 512.0

    def __post_init__(self) -> None:
        self.split = tuple(int(s) for s in self.split)
        self.depths = tuple(int(s) for s in self.depths)
        if len(self.split) != 3 or sum(self.split) != self.levels or min(self.split) < 1:
            raise ConfigurationError(f"split {self.split} must be 3 positive parts summing to {self.levels}")
        if self.mix_expansion < 2:
            raise ConfigurationError("mix expansion factor must be >= 2")
        if (self.mix_expansion * self.c_lat) % 2:
            raise ConfigurationError("mix expansion * c_lat must be even")
        if min(self.depths) < 1:
            raise ConfigurationError("perceptron depths must be >= 1")


@dataclass
class LatentStack:
    values: Tensor  # [l, c_lat] or [B, l, c_lat]

    @property
    def levels(self) -> int:
        return self.values.shape[-2]


def mlp_sizes(n_in: int, hidden: int, n_out: int, depth: int) -> list[tuple[int, int]]:
    dims = [n_in] + [hidden] * (depth - 1) + [n_out]
    return list(zip(dims[:-1], dims[1:]))


def mix_parameter_count(l_in: int, c_lat: int, e: int) -> int:
    wide = e * c_lat
    half = wide // 2
    return c_lat * wide + wide + l_in * l_in + l_in + half * c_lat + c_lat


def count_parameters(cfg: EncoderConfig) -> int:
    """Closed-form trainable scalar count for ``DigitalEncoder(cfg)`` (buffers excluded)."""
    n_c, n_m, n_f = cfg.split
    d, c, h = cfg.d, cfg.c_lat, cfg.hidden

    def mlp(n_in: int, depth: int) -> int:
        return sum(i * o + o for i, o in mlp_sizes(n_in, h, c, depth))

    total = n_c * mlp(d, cfg.depths[0])
    total += n_m * mlp(d + n_c * c, cfg.depths[1])
    total += d * n_m * c + n_m * c  # embedding of c for the fine block
    total += n_f * mlp(n_m * c, cfg.depths[2])
    e = cfg.mix_expansion
    total += mix_parameter_count(n_c, c, e) + mix_parameter_count(n_m, c, e)
    total += mix_parameter_count(cfg.levels, c, e)
    return total


class DigitalEncoder(Module):
    prefix = "enc"

    def __init__(self, cfg: EncoderConfig, seed: int = 0):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        n_c, n_m, n_f = cfg.split
        c = cfg.c_lat
        self.blocks: dict[str, list[str]] = {"coarse": [], "mid": [], "fine": []}
        for name, count, n_in, depth in (
            ("coarse", n_c, cfg.d, cfg.depths[0]),
            ("mid", n_m, cfg.d + n_c * c, cfg.depths[1]),
            ("fine", n_f, n_m * c, cfg.depths[2]),
        ):
            for i in range(count):
                key = f"{name}{i}"
                self.blocks[name].append(key)
                for j, (a, b) in enumerate(mlp_sizes(n_in, cfg.hidden, c, depth)):
                    last = j == depth - 1
                    self.add(f"{key}.w{j}", he_normal(rng, (a, b), a, gain=0.5 if last else 1.0))
                    self.add(f"{key}.b{j}", np.zeros(b))
        self.add("embed.w", he_normal(rng, (cfg.d, n_m * c), cfg.d, gain=0.5))
        self.add("embed.b", np.zeros(n_m * c))
        for name, l_in in (("mix_coarse", n_c), ("mix_mid", n_m), ("mix_final", cfg.levels)):
            self._add_mix(rng, name, l_in)
        self.add("norm.mean", np.zeros(cfg.d), trainable=False)
        self.add("norm.scale", np.full(cfg.d, cfg.input_scale), trainable=False)

    def fit_normalization(self, measurements: np.ndarray, floor: float = 1e-6) -> None:
        """Standardize each measurement channel with statistics of ``measurements`` [N, d].

        Channels with (near) zero spread keep a scale of ``1 / floor``
        capped at ``input_scale`` so constant readings stay bounded.
        """
        c = np.asarray(measurements, dtype=np.float64)
        if c.ndim != 2 or c.shape[1] != self.cfg.d:
            raise DimensionError(f"expected [N, {self.cfg.d}] measurements, got {c.shape}")
        std = c.std(axis=0)
        self["norm.mean"].data = c.mean(axis=0)
        self["norm.scale"].data = np.where(std > floor, 1.0 / np.maximum(std, floor), self.cfg.input_scale)

    def _add_mix(self, rng: np.random.Generator, name: str, l_in: int) -> None:
        c = self.cfg.c_lat
        wide = self.cfg.mix_expansion * c
        self.add(f"{name}.w_in", he_normal(rng, (c, wide), c))
        self.add(f"{name}.b_in", np.zeros(wide))
        # identity at init: zero static weights, unit gate bias, zero output projection
        self.add(f"{name}.gate_w", np.zeros((l_in, l_in)))
        self.add(f"{name}.gate_b", np.ones(l_in))
        self.add(f"{name}.w_out", np.zeros((wide // 2, c)))
        self.add(f"{name}.b_out", np.zeros(c))

    def mix(self, name: str, z: Tensor) -> Tensor:
        return mix(z, *(self[f"{name}.{p}"] for p in ("w_in", "b_in", "gate_w", "gate_b", "w_out", "b_out")))

    def _mlp(self, key: str, x: Tensor, depth: int) -> Tensor:
        for j in range(depth):
            x = linear(x, self[f"{key}.w{j}"], self[f"{key}.b{j}"])
            if j < depth - 1:
                x = ad.leaky_relu(x)
        return x

    def forward(self, c) -> Tensor:
        """[B, d] -> [B, l, c_lat] (a 1-D input gives [l, c_lat])."""
        cfg = self.cfg
        c = ad.as_tensor(c)
        single = c.ndim == 1
        if c.shape[-1] != cfg.d or c.ndim not in (1, 2):
            raise DimensionError(f"encoder expects {cfg.d} measurements, got shape {c.shape}")
        if single:
            c = ad.reshape(c, (1, cfg.d))
        batch = c.shape[0]
        x = (c - self["norm.mean"]) * self["norm.scale"]
        n_c, n_m, _ = cfg.split
        flat = lambda t, k: ad.reshape(t, (batch, k * cfg.c_lat))  # noqa: E731

        coarse = ad.stack([self._mlp(k, x, cfg.depths[0]) for k in self.blocks["coarse"]], axis=1)
        check_finite(coarse, "coarse block")
        mid_in = ad.concat([x, flat(self.mix("mix_coarse", coarse), n_c)], axis=1)
        mid = ad.stack([self._mlp(k, mid_in, cfg.depths[1]) for k in self.blocks["mid"]], axis=1)
        check_finite(mid, "middle block")
        fine_in = flat(self.mix("mix_mid", mid), n_m) + linear(x, self["embed.w"], self["embed.b"])
        fine = ad.stack([self._mlp(k, fine_in, cfg.depths[2]) for k in self.blocks["fine"]], axis=1)
        check_finite(fine, "fine block")
        z = self.mix("mix_final", ad.concat([coarse, mid, fine], axis=1))
        check_finite(z, "final mix")
        return ad.reshape(z, (cfg.levels, cfg.c_lat)) if single else z

    __call__ = forward


def mix(z: Tensor, w_in: Tensor, b_in: Tensor, gate_w: Tensor, gate_b: Tensor,
        w_out: Tensor, b_out: Tensor) -> Tensor:
    """Spatial gating unit across latent levels, with a residual connection.

    ``z`` is [l, c] or [B, l, c].  Channels are widened, split into (u, v);
    v is layer-normalized over channels and mixed across levels by the
    static ``gate_w`` (+ per-level ``gate_b``); u * v is projected back to
    c channels and added to ``z``.
    """
    z = ad.as_tensor(z)
    wide = w_in.shape[1]
    if wide % 2:
        raise ConfigurationError("MIX width must be even to split into u and v")
    l_in = z.shape[-2]
    if gate_w.shape != (l_in, l_in):
        raise DimensionError(f"MIX gate weight {gate_w.shape} does not match {l_in} levels")
    x = linear(z, w_in, b_in)
    half = wide // 2
    u = x[..., :half]
    v = ad.layer_norm(x[..., half:], axis=-1)
    v = ad.matmul(gate_w, v) + ad.reshape(gate_b, (l_in, 1))
    return linear(u * v, w_out, b_out) + z


def encode(cfg: EncoderConfig, weights: dict[str, np.ndarray], c) -> LatentStack:
    model = DigitalEncoder(cfg)
    model.load_state(weights)
    return LatentStack(model(c))
