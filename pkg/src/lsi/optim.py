"""Optimizers: Lion for mask logits, RAdam wrapped in Lookahead ("Ranger") for networks.

All optimizers act in place on ``Tensor.data`` using the gradients that
``backward`` accumulated in ``Tensor.grad``.  Parameters without a gradient
are treated as having a zero gradient.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .autodiff import Tensor


class Optimizer:
    def __init__(self, params: Sequence[Tensor], lr: float):
        self.params = list(params)
        self.lr = lr
        self.step_count = 0

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def _grads(self) -> list[np.ndarray]:
        return [np.zeros_like(p.data) if p.grad is None else p.grad for p in self.params]

    def step(self) -> None:  # pragma: no cover - abstract
        raise NotImplementedError


class Lion(Optimizer):
    """Sign-momentum update; optional box projection after each step.

    update = sign(beta1 * m + (1 - beta1) * g)
    theta <- theta - lr * (update + wd * theta)
    m <- beta2 * m + (1 - beta2) * g
    """

    def __init__(self, params, lr: float = 1e-4, betas=(0.9, 0.99), weight_decay: float = 0.0,
                 bounds: tuple[float, float] | None = None):
        super().__init__(params, lr)
        self.beta1, self.beta2 = betas
        self.weight_decay = weight_decay
        self.bounds = bounds
        self.exp_avg = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.step_count += 1
        for p, g, m in zip(self.params, self._grads(), self.exp_avg):
            update = np.sign(self.beta1 * m + (1.0 - self.beta1) * g)
            p.data -= self.lr * (update + self.weight_decay * p.data)
            m *= self.beta2
            m += (1.0 - self.beta2) * g
            if self.bounds is not None:
                np.clip(p.data, self.bounds[0], self.bounds[1], out=p.data)


class RAdam(Optimizer):
    """Adam with variance rectification (Liu et al.).

    While the approximated SMA length rho_t <= 4 the adaptive term is
    switched off and the step is the bias-corrected momentum update
    ``theta -= lr * m_hat``.
    """

    def __init__(self, params, lr: float = 1e-4, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        super().__init__(params, lr)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.exp_avg = [np.zeros_like(p.data) for p in self.params]
        self.exp_avg_sq = [np.zeros_like(p.data) for p in self.params]
        self.rho_inf = 2.0 / (1.0 - self.beta2) - 1.0

    def rectification(self, t: int) -> float | None:
        """Rectification factor r_t, or None while the variance is intractable."""
        b2t = self.beta2 ** t
        rho_t = self.rho_inf - 2.0 * t * b2t / (1.0 - b2t)
        if rho_t <= 4.0:
            return None
        ri = self.rho_inf
        return math.sqrt((rho_t - 4.0) * (rho_t - 2.0) * ri / ((ri - 4.0) * (ri - 2.0) * rho_t))

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        rect = self.rectification(t)
        for p, g, m, v in zip(self.params, self._grads(), self.exp_avg, self.exp_avg_sq):
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / bc1
            if rect is None:
                p.data -= self.lr * m_hat
            else:
                p.data -= self.lr * rect * m_hat / (np.sqrt(v / bc2) + self.eps)


class Lookahead(Optimizer):
    """Every ``k`` inner steps: slow += alpha * (fast - slow); fast <- slow."""

    def __init__(self, inner: Optimizer, k: int = 5, alpha: float = 0.5):
        super().__init__(inner.params, inner.lr)
        self.inner = inner
        self.k = k
        self.alpha = alpha
        self.slow = [p.data.copy() for p in self.params]

    def zero_grad(self) -> None:
        self.inner.zero_grad()

    def step(self) -> None:
        self.inner.step()
        self.step_count += 1
        if self.step_count % self.k:
            return
        for p, slow in zip(self.params, self.slow):
            slow += self.alpha * (p.data - slow)
            p.data[...] = slow


def ranger(params, lr: float = 1e-4, betas=(0.9, 0.999), k: int = 5, alpha: float = 0.5,
           eps: float = 1e-8) -> Lookahead:
    return Lookahead(RAdam(params, lr=lr, betas=betas, eps=eps), k=k, alpha=alpha)
