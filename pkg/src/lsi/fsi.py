"""Fourier single-pixel imaging baseline with three-step phase shifting.

Patterns are ``a + b*cos(2*pi*(fx*x + fy*y) + phi)`` for phi in
{0, 2pi/3, 4pi/3}.  The three readings D0, D1, D2 combine into
``(2*D0 - D1 - D2) + i*sqrt(3)*(D1 - D2) = 3*b*F(fx, fy)`` where F is the
image's DFT coefficient, so dividing by 3b recovers the spectrum exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .optics import ConfigurationError

PHASES = (0.0, 2.0 * np.pi / 3.0, 4.0 * np.pi / 3.0)


@dataclass
class FourierPatternSet:
    bins: list[tuple[int, int]]  # signed integer DFT indices (kx, ky)
    m: int
    n: int
    a: float = 0.5
    b: float = 0.5

    def __post_init__(self) -> None:
        if self.a - self.b < 0.0 or self.a + self.b > 1.0:
            raise ConfigurationError(f"pattern range [a-b, a+b] = [{self.a - self.b}, {self.a + self.b}] leaves [0,1]")

    @property
    def freqs(self) -> list[tuple[float, float]]:
        """(f_x, f_y) in cycles per pixel."""
        return [(kx / self.n, ky / self.m) for kx, ky in self.bins]

    @property
    def measurements(self) -> int:
        return 3 * len(self.bins)


def _signed_nyquist_low(k: int, size: int) -> int:
    # map into [-size/2, size/2): the Nyquist bin is negative
    k %= size
    return k - size if k >= size - size // 2 else k


def conjugate_bin(kx: int, ky: int, m: int, n: int) -> tuple[int, int]:
    return _signed_nyquist_low(-kx, n), _signed_nyquist_low(-ky, m)


def full_grid(m: int, n: int) -> list[tuple[int, int]]:
    xs = range(-(n // 2), n - n // 2)
    ys = range(-(m // 2), m - m // 2)
    return [(kx, ky) for ky in ys for kx in xs]


def select_frequencies(budget: int, m: int, n: int, a: float = 0.5, b: float = 0.5) -> FourierPatternSet:
    """floor(budget/3) lowest-radius, mutually non-conjugate DFT bins, DC first.

    Radius is measured in cycles/pixel; ties are broken by (f_y, f_x).
    """
    if budget < 3:
        raise ConfigurationError(f"FSI needs a budget of at least 3 readings, got {budget}")
    want = budget // 3
    grid = sorted(full_grid(m, n), key=lambda k: (np.hypot(k[0] / n, k[1] / m), k[1] / m, k[0] / n))
    chosen: list[tuple[int, int]] = []
    taken: set[tuple[int, int]] = set()
    for k in grid:
        if len(chosen) == want:
            break
        if k in taken:
            continue
        chosen.append(k)
        taken.add(k)
        taken.add(conjugate_bin(*k, m, n))
    return FourierPatternSet(chosen, m, n, a, b)


def full_coverage(m: int, n: int, a: float = 0.5, b: float = 0.5) -> FourierPatternSet:
    count = len({min(k, conjugate_bin(*k, m, n)) for k in full_grid(m, n)})
    return select_frequencies(3 * count, m, n, a, b)


def make_pattern(fx: float, fy: float, phi: float, m: int, n: int, a: float = 0.5, b: float = 0.5) -> np.ndarray:
    y, x = np.mgrid[0:m, 0:n]
    return a + b * np.cos(2.0 * np.pi * fx * x + 2.0 * np.pi * fy * y + phi)


def pattern_stack(pset: FourierPatternSet) -> np.ndarray:
    """All 3*K patterns, [K, 3, m, n]."""
    return np.stack([
        np.stack([make_pattern(fx, fy, phi, pset.m, pset.n, pset.a, pset.b) for phi in PHASES])
        for fx, fy in pset.freqs
    ])


def fsi_acquire(image: np.ndarray, pset: FourierPatternSet, sensor=None, scale: float = 1.0,
                index: int = 0) -> np.ndarray:
    """Complex coefficients (one per frequency) from three phase-shifted readings.

    ``image`` is [m, n] or [1, m, n].  With a ``sensor`` every reading goes
    through it and is multiplied by the calibration ``scale``.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3:
        if img.shape[0] != 1:
            raise ConfigurationError("FSI acquisition expects a single-channel image")
        img = img[0]
    if img.shape != (pset.m, pset.n):
        raise ConfigurationError(f"image {img.shape} vs patterns {(pset.m, pset.n)}")
    readings = np.tensordot(pattern_stack(pset), img, axes=([2, 3], [0, 1]))  # [K, 3]
    if sensor is not None:
        from .acquisition import sense

        readings = scale * sense(sensor, readings.reshape(-1), index=index).reshape(readings.shape)
    d0, d1, d2 = readings[:, 0], readings[:, 1], readings[:, 2]
    return (2.0 * d0 - d1 - d2) + 1j * np.sqrt(3.0) * (d1 - d2)


def assemble_spectrum(coeffs: np.ndarray, pset: FourierPatternSet) -> np.ndarray:
    """Hermitian [m, n] spectrum with unmeasured bins zero."""
    spec = np.zeros((pset.m, pset.n), dtype=np.complex128)
    for (kx, ky), F in zip(pset.bins, np.asarray(coeffs) / (3.0 * pset.b)):
        cx, cy = conjugate_bin(kx, ky, pset.m, pset.n)
        if (cx, cy) == (kx, ky):
            spec[ky % pset.m, kx % pset.n] = F.real
        else:
            spec[ky % pset.m, kx % pset.n] = F
            spec[cy % pset.m, cx % pset.n] = np.conj(F)
    return spec


def fsi_reconstruct(coeffs: np.ndarray, pset: FourierPatternSet, m: int | None = None,
                    n: int | None = None, clamp: bool = True) -> np.ndarray:
    m = pset.m if m is None else m
    n = pset.n if n is None else n
    if (m, n) != (pset.m, pset.n):
        raise ConfigurationError("reconstruction size must match the pattern set")
    img = np.fft.ifft2(assemble_spectrum(coeffs, pset))
    img = img.real
    return np.clip(img, 0.0, 1.0) if clamp else img


def fsi_reconstruct_complex(coeffs: np.ndarray, pset: FourierPatternSet) -> np.ndarray:
    """Un-clamped complex inverse transform (imaginary part is roundoff)."""
    return np.fft.ifft2(assemble_spectrum(coeffs, pset))


def fsi_image(image: np.ndarray, budget: int, sensor=None, scale: float = 1.0) -> np.ndarray:
    img = np.asarray(image)
    m, n = img.shape[-2:]
    pset = select_frequencies(budget, m, n)
    return fsi_reconstruct(fsi_acquire(img, pset, sensor, scale), pset)
