"""Parameter containers and layer helpers shared by the networks."""

from __future__ import annotations

import hashlib

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class NumericError(FloatingPointError):
    """A non-finite value appeared in a forward pass."""


class Module:
    """A flat, ordered mapping of dotted names to parameter tensors."""

    prefix = ""

    def __init__(self) -> None:
        self.params: dict[str, Tensor] = {}
        # fixed tensors that are saved with the weights but never optimized
        self.buffers: set[str] = set()

    def add(self, name: str, value: np.ndarray, trainable: bool = True) -> Tensor:
        full = f"{self.prefix}.{name}" if self.prefix else name
        t = Tensor(value, requires_grad=trainable, name=full)
        self.params[full] = t
        if not trainable:
            self.buffers.add(full)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[f"{self.prefix}.{name}" if self.prefix else name]

    def parameters(self) -> list[Tensor]:
        """Trainable tensors only; buffers are excluded."""
        return [p for k, p in self.params.items() if k not in self.buffers]

    def freeze(self) -> None:
        for p in self.params.values():
            p.requires_grad = False
            p.grad = None

    def unfreeze(self) -> None:
        for p in self.parameters():
            p.requires_grad = True

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for k, p in self.params.items():
            if k not in state:
                raise KeyError(f"checkpoint lacks parameter {k!r}")
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"{k}: checkpoint shape {arr.shape} != model shape {p.shape}")
            p.data = arr.copy()

    def checksum(self) -> str:
        h = hashlib.sha256()
        for k in sorted(self.params):
            h.update(k.encode())
            h.update(np.ascontiguousarray(self.params[k].data).tobytes())
        return h.hexdigest()

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))


def he_normal(rng: np.random.Generator, shape, fan_in: int, gain: float = 1.0) -> np.ndarray:
    std = gain * np.sqrt(2.0 / (1.0 + ad.LEAKY_SLOPE ** 2) / fan_in)
    return rng.normal(0.0, std, size=shape)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    y = ad.matmul(x, w)
    return y if b is None else ad.add(y, b)


def check_finite(t: Tensor, where: str) -> Tensor:
    if not np.all(np.isfinite(t.data)):
        raise NumericError(f"non-finite activation in {where}")
    return t
