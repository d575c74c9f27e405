"""Derivatives of periodic samples on the uniform angle grid.

Everything here operates on samples of smooth 2*pi-periodic functions at
theta_j = 2*pi*j/N along the last axis. Two schemes are provided: a spectral
one (exact for band-limited data, the default for support functions, which
are analytic for the curves this package flows) and a centered fourth-order
finite-difference one used to cross-check the spectral route in tests.
"""

from __future__ import annotations

import numpy as np

SCHEMES = ("spectral", "fd4")


def theta_grid(n: int) -> np.ndarray:
    """Uniform angles theta_j = 2*pi*j/n, endpoint excluded."""
    return np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)


def periodic_derivative(values: np.ndarray, order: int = 1,
                        scheme: str = "spectral") -> np.ndarray:
    """Differentiate periodic samples along the last axis.

    order is the derivative order (>= 1). Leading axes are batched.
    """
    if order < 1:
        raise ValueError(f"derivative order must be >= 1, got {order}")
    if scheme == "spectral":
        return _spectral_derivative(np.asarray(values, dtype=float), order)
    if scheme == "fd4":
        out = np.asarray(values, dtype=float)
        for _ in range(order):
            out = _fd4_first_derivative(out)
        return out
    raise ValueError(f"unknown scheme {scheme!r}, expected one of {SCHEMES}")


def _spectral_derivative(values: np.ndarray, order: int) -> np.ndarray:
    n = values.shape[-1]
    k = np.fft.rfftfreq(n, d=1.0 / n)  # integer wavenumbers 0..n//2
    spectrum = np.fft.rfft(values, axis=-1)
    if order % 2 == 1 and n % 2 == 0:
        # The Nyquist mode has no well-defined odd derivative on the real
        # grid; zeroing it keeps the result real and symmetric.
        spectrum[..., -1] = 0.0
    spectrum = spectrum * (1j * k) ** order
    return np.fft.irfft(spectrum, n=n, axis=-1)


def _fd4_first_derivative(values: np.ndarray) -> np.ndarray:
    n = values.shape[-1]
    h = 2.0 * np.pi / n
    vp1 = np.roll(values, -1, axis=-1)
    vm1 = np.roll(values, 1, axis=-1)
    vp2 = np.roll(values, -2, axis=-1)
    vm2 = np.roll(values, 2, axis=-1)
    return (8.0 * (vp1 - vm1) - (vp2 - vm2)) / (12.0 * h)
