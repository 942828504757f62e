import numpy as np
import pytest

from lsi.autodiff import Tensor
from lsi.optim import Lion, Lookahead, RAdam, ranger


def param(values):
    return Tensor(np.array(values, dtype=np.float64), requires_grad=True)


class TestLion:
    def test_hand_step(self):
        p = param([0.0])
        p.grad = np.array([4.0])
        Lion([p], lr=1e-4).step()
        assert abs(p.data[0] - (-1e-4)) <= 1e-12

    def test_zero_grad_zero_momentum(self):
        p = param([0.3, -0.7])
        opt = Lion([p], lr=1e-2)
        opt.step()
        np.testing.assert_array_equal(p.data, [0.3, -0.7])

    def test_magnitude_independent_of_grad(self):
        p = param([0.0, 0.0, 0.0])
        p.grad = np.array([1e-6, 3.0, -1e4])
        Lion([p], lr=1e-3).step()
        np.testing.assert_allclose(np.abs(p.data), 1e-3, rtol=0, atol=1e-15)

    def test_momentum_hand_second_step(self):
        p = param([0.0])
        opt = Lion([p], lr=0.1, betas=(0.9, 0.99))
        p.grad = np.array([1.0])
        opt.step()
        # m = 0.01; second gradient -0.05: 0.9*0.01 + 0.1*(-0.05) = 0.004 > 0
        p.grad = np.array([-0.05])
        opt.step()
        np.testing.assert_allclose(p.data, [-0.2], atol=1e-15)
        np.testing.assert_allclose(opt.exp_avg[0], [0.99 * 0.01 + 0.01 * -0.05], atol=1e-15)

    def test_weight_decay_bound(self, rng):
        p = param(rng.normal(size=50))
        opt = Lion([p], lr=1e-2, weight_decay=0.1)
        for _ in range(20):
            before = p.data.copy()
            p.grad = rng.normal(size=50)
            opt.step()
            assert np.max(np.abs(p.data - before)) <= 1e-2 * (1 + 0.1 * np.max(np.abs(before))) + 1e-15

    def test_projection(self, rng):
        p = param(rng.random(100))
        opt = Lion([p], lr=0.05, bounds=(0.0, 1.0))
        for _ in range(1000):
            p.grad = rng.normal(size=100)
            opt.step()
            assert p.data.min() >= 0.0 and p.data.max() <= 1.0


class TestRAdam:
    def test_warmup_is_momentum_step(self):
        opt = RAdam([param([1.0])], lr=0.1)
        assert opt.rectification(1) is None
        p = opt.params[0]
        p.grad = np.array([2.0])
        opt.step()
        # first step: m_hat = g, no adaptive denominator
        np.testing.assert_allclose(p.data, [1.0 - 0.1 * 2.0], atol=1e-15)

    def test_rectification_turns_on(self):
        opt = RAdam([param([0.0])])
        active = [t for t in range(1, 20) if opt.rectification(t) is not None]
        assert active and active[0] > 1
        assert 0 < opt.rectification(active[0]) < 1

    def test_rectification_tends_to_one(self):
        assert RAdam([param([0.0])]).rectification(10 ** 6) == pytest.approx(1.0, abs=1e-3)

    def test_zero_gradient_fixed_point(self, rng):
        p = param(rng.normal(size=7))
        start = p.data.copy()
        opt = RAdam([p], lr=1e-2)
        for _ in range(10):
            opt.zero_grad()
            opt.step()
        np.testing.assert_array_equal(p.data, start)

    def test_descends_quadratic(self):
        p = param([3.0, -2.0])
        opt = RAdam([p], lr=0.05)
        for _ in range(500):
            p.grad = 2 * p.data
            opt.step()
        assert np.max(np.abs(p.data)) < 0.1


class TestLookahead:
    def test_alpha_one_is_inner(self, rng):
        a = param(rng.normal(size=5))
        b = param(a.data.copy())
        plain = RAdam([a], lr=1e-2)
        wrapped = Lookahead(RAdam([b], lr=1e-2), k=5, alpha=1.0)
        for _ in range(23):
            g = rng.normal(size=5)
            a.grad, b.grad = g.copy(), g.copy()
            plain.step()
            wrapped.step()
        np.testing.assert_array_equal(a.data, b.data)

    def test_sync_every_k(self):
        p = param([0.0])
        opt = Lookahead(RAdam([p], lr=0.1), k=5, alpha=0.5)
        shadow = param([0.0])
        plain = RAdam([shadow], lr=0.1)
        for _ in range(5):
            p.grad = shadow.grad = np.array([1.0])
            opt.step()
            plain.step()
        # slow starts at 0, so after k steps slow = 0.5 * fast
        np.testing.assert_allclose(p.data, 0.5 * shadow.data, atol=1e-15)
        np.testing.assert_allclose(opt.slow[0], p.data)

    def test_zero_gradient_k_steps(self, rng):
        p = param(rng.normal(size=4))
        start = p.data.copy()
        opt = ranger([p], lr=1e-3)
        for _ in range(5):
            opt.zero_grad()
            opt.step()
        np.testing.assert_array_equal(p.data, start)
