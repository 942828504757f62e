import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lsi.fsi import (
    PHASES,
    ConfigurationError,
    assemble_spectrum,
    conjugate_bin,
    fsi_acquire,
    fsi_image,
    fsi_reconstruct,
    fsi_reconstruct_complex,
    full_coverage,
    make_pattern,
    select_frequencies,
)


class TestSelection:
    def test_budget_three(self):
        assert select_frequencies(3, 32, 32).bins == [(0, 0)]

    def test_budget_nine(self):
        bins = select_frequencies(9, 32, 32).bins
        assert bins[0] == (0, 0)
        assert sorted(map(lambda k: abs(k[0]) + abs(k[1]), bins[1:])) == [1, 1]
        # one horizontal and one vertical unit frequency
        assert {k[0] == 0 for k in bins[1:]} == {True, False}

    @pytest.mark.parametrize("budget", [3, 4, 8, 16, 31, 64, 192, 500])
    def test_count(self, budget):
        pset = select_frequencies(budget, 32, 32)
        assert len(pset.bins) == budget // 3
        assert pset.measurements <= budget

    def test_no_conjugates(self):
        bins = select_frequencies(600, 16, 16).bins
        seen = set(bins)
        for k in bins:
            c = conjugate_bin(*k, 16, 16)
            assert c == k or c not in seen

    def test_radius_non_decreasing(self):
        pset = select_frequencies(150, 32, 32)
        r = [np.hypot(fx, fy) for fx, fy in pset.freqs]
        assert all(b >= a - 1e-15 for a, b in zip(r, r[1:]))

    def test_full_coverage_count(self):
        # 32x32 real spectrum: 4 self-conjugate bins + (1024 - 4) / 2 pairs
        assert len(full_coverage(32, 32).bins) == 514

    def test_budget_too_small(self):
        with pytest.raises(ConfigurationError):
            select_frequencies(2, 8, 8)


class TestPattern:
    def test_dc_phase_zero(self):
        np.testing.assert_allclose(make_pattern(0, 0, 0.0, 4, 4), 1.0)

    def test_dc_phase_shift(self):
        np.testing.assert_allclose(make_pattern(0, 0, 2 * np.pi / 3, 4, 4), 0.25)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(-16, 15), st.integers(-16, 15), st.sampled_from(PHASES))
    def test_bounded(self, kx, ky, phi):
        p = make_pattern(kx / 32, ky / 32, phi, 32, 32)
        assert p.min() >= -1e-12 and p.max() <= 1 + 1e-12

    def test_invalid_amplitude(self):
        with pytest.raises(ConfigurationError):
            select_frequencies(3, 8, 8, a=0.5, b=0.6)


class TestAcquire:
    def test_constant_image_dc(self):
        pset = select_frequencies(3, 8, 8)
        F = fsi_acquire(np.full((8, 8), 0.4), pset)
        assert F[0].imag == pytest.approx(0.0, abs=1e-12)
        # 3b * DFT(0,0) = 1.5 * 64 * 0.4
        assert F[0].real == pytest.approx(1.5 * 64 * 0.4)

    def test_cosine_orthogonality(self):
        m = n = 16
        y, x = np.mgrid[0:m, 0:n]
        img = 0.5 + 0.4 * np.cos(2 * np.pi * (3 * x + 2 * y) / n)
        pset = select_frequencies(3 * 60, m, n)
        F = np.abs(fsi_acquire(img, pset))
        peak = pset.bins.index((3, 2)) if (3, 2) in pset.bins else pset.bins.index(conjugate_bin(3, 2, m, n))
        others = [i for i in range(len(F)) if i not in (0, peak)]
        # 3b * (0.4 * mn / 2)
        assert F[peak] == pytest.approx(1.5 * 0.4 * 256 / 2)
        assert np.max(F[others]) < 1e-9

    def test_matches_fft(self, rng):
        img = rng.random((8, 8))
        pset = select_frequencies(3 * 20, 8, 8)
        F = fsi_acquire(img, pset) / (3 * pset.b)
        D = np.fft.fft2(img)
        for (kx, ky), f in zip(pset.bins, F):
            assert abs(f - D[ky % 8, kx % 8]) < 1e-9

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0, 5))
    def test_linearity(self, alpha):
        img = np.linspace(0, 1, 64).reshape(8, 8)
        pset = select_frequencies(30, 8, 8)
        np.testing.assert_allclose(fsi_acquire(alpha * img, pset), alpha * fsi_acquire(img, pset), atol=1e-9)

    def test_rejects_color(self):
        with pytest.raises(ConfigurationError):
            fsi_acquire(np.zeros((3, 8, 8)), select_frequencies(3, 8, 8))


class TestReconstruct:
    def test_full_coverage_exact(self, rng):
        pset = full_coverage(32, 32)
        for _ in range(10):
            img = rng.random((32, 32))
            rec = fsi_reconstruct(fsi_acquire(img, pset), pset)
            assert np.mean((rec - img) ** 2) < 1e-6

    def test_odd_size_exact(self, rng):
        pset = full_coverage(7, 9)
        img = rng.random((7, 9))
        np.testing.assert_allclose(fsi_reconstruct(fsi_acquire(img, pset), pset), img, atol=1e-9)

    def test_dc_only_mean(self, rng):
        img = rng.random((16, 16))
        np.testing.assert_allclose(fsi_image(img, 3), img.mean(), atol=1e-12)

    def test_real_valued(self, rng):
        pset = select_frequencies(48, 16, 16)
        rec = fsi_reconstruct_complex(fsi_acquire(rng.random((16, 16)), pset), pset)
        assert np.max(np.abs(rec.imag)) < 1e-9

    def test_hermitian(self, rng):
        pset = select_frequencies(120, 16, 16)
        spec = assemble_spectrum(fsi_acquire(rng.random((16, 16)), pset), pset)
        mirrored = np.conj(np.roll(np.flip(spec, (0, 1)), 1, axis=(0, 1)))
        np.testing.assert_array_equal(spec, mirrored)

    @pytest.mark.parametrize("budget", [3, 9, 24, 96, 300])
    def test_energy_bound(self, rng, budget):
        img = rng.random((16, 16))
        pset = select_frequencies(budget, 16, 16)
        rec = fsi_reconstruct(fsi_acquire(img, pset), pset, clamp=False)
        assert np.sum(rec ** 2) <= np.sum(img ** 2) + 1e-9
