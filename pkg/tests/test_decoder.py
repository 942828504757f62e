import numpy as np
import pytest

from lsi.autodiff import DimensionError, Tensor, grad_check
from lsi.decoder import (
    DecoderConfig,
    Generator,
    InversionEncoder,
    PretrainConfig,
    batched,
    generate,
    invert,
    pretrain_autoencoder,
    psnr,
)
from lsi.encoder import LatentStack

SMALL = DecoderConfig(levels=3, c_lat=8, gen_widths=(8, 6, 4), inv_widths=(4, 6, 8))


class TestGenerator:
    def test_shape_and_range(self, rng):
        G = Generator(SMALL, seed=0)
        out = G(rng.normal(0, 3, (5, 3, 8))).data
        assert out.shape == (5, 1, 16, 16)
        assert out.min() >= 0 and out.max() <= 1

    def test_unbatched(self, rng):
        assert Generator(SMALL)(rng.normal(size=(3, 8))).shape == (1, 16, 16)

    def test_level_mismatch(self, rng):
        with pytest.raises(DimensionError):
            generate(Generator(SMALL), rng.normal(size=(4, 8)))

    def test_latent_gradient(self, rng):
        G = Generator(SMALL, seed=1)
        G.freeze()
        r = rng.normal(size=(1, 1, 16, 16))
        assert grad_check(lambda t: (G(t) * Tensor(r)).sum(), rng.normal(size=(1, 3, 8))) < 1e-3

    def test_weight_gradient(self, rng):
        G = Generator(SMALL, seed=1)
        z = Tensor(rng.normal(size=(2, 3, 8)))
        r = rng.normal(size=(2, 1, 16, 16))
        w = G["l1.mod_w"]

        def f(t):
            G.params["gen.l1.mod_w"] = t
            return (G(z) * Tensor(r)).sum()

        assert grad_check(f, w.data.copy()) < 1e-3

    def test_accepts_stack(self, rng):
        G = Generator(SMALL)
        z = rng.normal(size=(3, 8))
        np.testing.assert_array_equal(generate(G, LatentStack(Tensor(z))).data, G(z).data)


class TestInversion:
    def test_shape(self, rng):
        N = InversionEncoder(SMALL)
        assert N(rng.random((4, 1, 16, 16))).shape == (4, 3, 8)
        assert invert(N, rng.random((1, 16, 16))).levels == 3

    def test_size_mismatch(self):
        with pytest.raises(DimensionError):
            InversionEncoder(SMALL)(np.zeros((1, 1, 8, 8)))

    def test_deterministic(self, rng):
        img = rng.random((2, 1, 16, 16))
        assert InversionEncoder(SMALL, seed=4)(img).data.tobytes() == InversionEncoder(SMALL, seed=4)(img).data.tobytes()

    def test_local_continuity(self, rng):
        N = InversionEncoder(SMALL, seed=0)
        imgs = rng.random((100, 1, 16, 16))
        z = batched(N, imgs)
        z_near = batched(N, imgs + rng.normal(0, 0.01, imgs.shape))
        near = np.mean(np.abs(z - z_near))
        far = np.mean(np.abs(z - np.roll(z, 1, axis=0)))
        assert near < far


class TestPsnr:
    def test_identical_is_inf(self):
        assert psnr(np.ones(4), np.ones(4)) == float("inf")

    def test_hand_value(self):
        assert psnr(np.zeros(4), np.full(4, 0.1)) == pytest.approx(20.0)


class TestPretrain:
    def test_deterministic_and_frozen(self, rng):
        train = rng.random((24, 1, 16, 16))
        val = rng.random((4, 1, 16, 16))
        cfg = PretrainConfig(epochs=2, batch_size=8, seed=3)
        G1, N1, r1 = pretrain_autoencoder(train, val, SMALL, cfg)
        G2, N2, r2 = pretrain_autoencoder(train, val, SMALL, cfg)
        assert r1.train_loss == r2.train_loss
        assert G1.checksum() == G2.checksum() and N1.checksum() == N2.checksum()
        assert not any(p.requires_grad for p in G1.parameters() + N1.parameters())
        assert [row["epoch"] for row in r1.rows()] == [1, 2]

    def test_loss_decreases(self, rng):
        yy, xx = np.mgrid[0:16, 0:16]
        blobs = np.stack([np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / 18.0)
                          for cx, cy in rng.uniform(4, 12, (48, 2))])[:, None]
        _, _, report = pretrain_autoencoder(blobs[:40], blobs[40:], SMALL, PretrainConfig(epochs=6, batch_size=8))
        assert report.train_loss[-1] < report.train_loss[0]
