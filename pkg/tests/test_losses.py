import numpy as np
import pytest

from lsi.autodiff import DimensionError, Tensor
from lsi.losses import LossWeights, latent_loss, multiscale_l1, pixel_losses, total_loss


class TestLatentLoss:
    def test_identical(self, rng):
        z = rng.normal(size=(4, 64))
        assert latent_loss(Tensor(z), Tensor(z)).item() == 0.0

    def test_constant_offset(self, rng):
        z = rng.normal(size=(4, 64))
        assert latent_loss(Tensor(z + 0.5), Tensor(z)).item() == pytest.approx(0.5, abs=1e-12)

    def test_brute_force(self, rng):
        a, b = rng.normal(size=(3, 4, 8)), rng.normal(size=(3, 4, 8))
        total = 0.0
        for x, y in zip(a.ravel(), b.ravel()):
            total += abs(x - y)
        assert latent_loss(Tensor(a), Tensor(b)).item() == pytest.approx(total / a.size, rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            latent_loss(Tensor(np.zeros((4, 8))), Tensor(np.zeros((3, 8))))


class TestPixelLosses:
    def test_identical(self, rng):
        img = rng.random((1, 8, 8))
        l2, sur = pixel_losses(Tensor(img), Tensor(img))
        assert (l2.item(), sur.item()) == (0.0, 0.0)

    def test_offset(self, rng):
        img = rng.uniform(0.2, 0.8, (1, 8, 8))
        l2, _ = pixel_losses(Tensor(img + 0.1), Tensor(img))
        assert l2.item() == pytest.approx(0.01, rel=1e-9)

    def test_hand_surrogate(self):
        a = np.zeros((1, 1, 4, 4))
        a[0, 0, 0, 0] = 1.0
        b = np.zeros((1, 1, 4, 4))
        # full: 1/16; half: top-left 2x2 mean 0.25 over 4 cells -> 1/16; quarter: 1/16
        assert multiscale_l1(Tensor(a), Tensor(b)).item() == pytest.approx(1 / 16)

    def test_hand_surrogate_cancelling(self):
        a = np.zeros((1, 1, 4, 4))
        a[0, 0, 0, 0], a[0, 0, 0, 1] = 1.0, -1.0
        # full: 2/16; pooled scales cancel to 0 -> mean = (1/8) / 3
        assert multiscale_l1(Tensor(a), Tensor(np.zeros_like(a))).item() == pytest.approx(1 / 24)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            pixel_losses(Tensor(np.zeros((1, 4, 4))), Tensor(np.zeros((1, 4, 2))))


class TestTotalLoss:
    def test_dot_product_composition(self, rng):
        w = LossWeights(lat=1.0, pips=0.8, l2=1.0, energy=3.0)
        terms = {k: Tensor(float(rng.random())) for k in ("lat", "pips", "l2", "energy")}
        expected = sum(getattr(w, k) * v.item() for k, v in terms.items())
        assert total_loss(w, terms).item() == pytest.approx(expected, rel=1e-15)

    def test_zero_weight_contributes_no_gradient(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        y = Tensor([3.0], requires_grad=True)
        terms = {"lat": (x * x).sum(), "energy": (y * y).sum()}
        total_loss(LossWeights(energy=0.0), terms).backward()
        np.testing.assert_array_equal(x.grad, [2.0, 4.0])
        assert y.grad is None

    def test_negative_weight(self):
        with pytest.raises(ValueError):
            LossWeights(l2=-1.0)

    def test_defaults(self):
        w = LossWeights()
        assert (w.lat, w.id, w.pips, w.l2, w.energy) == (1.0, 0.5, 0.8, 1.0, 3.0)
