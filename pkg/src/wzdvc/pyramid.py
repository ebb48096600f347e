"""Undecimated complex steerable pyramid built in the Fourier domain.

Every subband keeps the input resolution, so an integer translation of the
input maps to the same translation of every subband (up to the periodic
boundary). Oriented filters cover one half of the frequency plane, which
makes the outputs complex with a phase that tracks local position.
"""

from functools import lru_cache

import numpy as np
import scipy.fft
from math import factorial


@lru_cache(maxsize=32)
def pyramid_filters(shape, levels=3, orientations=6):
    """Return a ``(levels*orientations, H, W)`` array of frequency responses.

    Radial windows are log-raised-cosines one octave wide centred on
    ``pi * 2**-(j + 0.5)``; squared adjacent windows sum to one. Angular
    windows are ``cos(theta - theta_k)**(K-1)`` restricted to a half plane.
    """
    h, w = shape
    wy = 2 * np.pi * np.fft.fftfreq(h)[:, None]
    wx = 2 * np.pi * np.fft.fftfreq(w)[None, :]
    r = np.hypot(wx, wy)
    theta = np.arctan2(wy, wx)
    with np.errstate(divide="ignore"):
        logr = np.log2(np.where(r > 0, r, 1.0))

    k = orientations
    # steerable normalisation so the orientations tile the plane in energy
    alpha = 2 ** (k - 1) * factorial(k - 1) / np.sqrt(k * factorial(2 * (k - 1)))
    out = np.empty((levels * k, h, w))
    for j in range(levels):
        centre = np.log2(np.pi) - (j + 0.5)
        x = logr - centre
        radial = np.where((np.abs(x) < 1) & (r > 0), np.cos(np.pi / 2 * x), 0.0)
        for o in range(k):
            d = np.angle(np.exp(1j * (theta - np.pi * o / k)))
            ang = np.where(np.abs(d) < np.pi / 2, np.cos(d) ** (k - 1), 0.0)
            out[j * k + o] = 2 * alpha * radial * ang
    out.flags.writeable = False
    return out


def decompose(x, levels=3, orientations=6):
    """Complex subbands of ``x`` with shape ``(..., levels*orientations, H, W)``.

    Leading axes of ``x`` are treated as a batch.
    """
    x = np.asarray(x, dtype=float)
    filt = pyramid_filters(x.shape[-2:], levels, orientations)
    spec = scipy.fft.fft2(x)[..., None, :, :]
    return scipy.fft.ifft2(spec * filt)
