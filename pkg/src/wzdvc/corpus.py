"""Deterministic synthetic motion corpus standing in for a QCIF talking-head clip.

Each frame is rendered from two natural grayscale images bundled with
scikit-image:

* background: ``camera``, viewed through a window that pans slowly with
  hand-held jitter (sub-pixel, cubic resampling);
* foreground: a face crop of ``astronaut`` inside a soft elliptical mask,
  nodding and swaying on its own trajectory;
* per-frame exposure flicker (gain and offset) and additive sensor noise,
  followed by rounding to 8 bits.

All randomness comes from one seed, so a given ``(n_frames, seed)`` always
yields the same bytes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .video_io import QCIF_HEIGHT, QCIF_WIDTH, VideoSequence


@dataclass(frozen=True)
class CorpusParams:
    pan_velocity: tuple = (0.4, 1.2)     # (dy, dx) px per frame
    jitter_sigma: float = 0.8            # px, random walk step of the camera
    head_amplitude: tuple = (3.0, 5.0)   # (dy, dx) px
    head_period: float = 14.0            # frames per nod cycle
    gain_sigma: float = 0.03
    offset_sigma: float = 3.0
    noise_sigma: float = 2.5


def _face():
    from skimage import data
    from skimage.color import rgb2gray

    face = rgb2gray(data.astronaut())[30:230, 150:330] * 255.0
    return ndimage.zoom(face, 0.5, order=3)  # ~100x90 px head


def motion_corpus(n_frames=45, seed=2024, width=QCIF_WIDTH, height=QCIF_HEIGHT,
                  params=CorpusParams()) -> VideoSequence:
    from skimage import data

    rng = np.random.default_rng(seed)
    background = data.camera().astype(float)
    face = _face()
    fh, fw = face.shape
    yy, xx = np.mgrid[0:fh, 0:fw]
    ell = ((yy - fh / 2) / (fh / 2)) ** 2 + ((xx - fw / 2) / (fw / 2)) ** 2
    alpha = np.clip((1.0 - ell) * 6.0, 0.0, 1.0)

    jitter = np.cumsum(rng.normal(0, params.jitter_sigma, size=(n_frames, 2)), axis=0)
    gains = 1 + rng.normal(0, params.gain_sigma, n_frames)
    offsets = rng.normal(0, params.offset_sigma, n_frames)
    phase = rng.uniform(0, 2 * np.pi)

    oy, ox = 150.0, 120.0
    gy, gx = np.mgrid[0:height, 0:width].astype(float)
    frames = np.empty((n_frames, height, width), np.uint8)
    for t in range(n_frames):
        cy = oy + params.pan_velocity[0] * t + jitter[t, 0]
        cx = ox + params.pan_velocity[1] * t + jitter[t, 1]
        img = ndimage.map_coordinates(background, [gy + cy, gx + cx], order=3, mode="reflect")

        ang = 2 * np.pi * t / params.head_period + phase
        hy = (height - fh) / 2 + 10 + params.head_amplitude[0] * np.sin(ang)
        hx = (width - fw) / 2 + params.head_amplitude[1] * np.sin(0.5 * ang)
        fy, fx = gy - hy, gx - hx
        head = ndimage.map_coordinates(face, [fy, fx], order=3, mode="nearest")
        a = ndimage.map_coordinates(alpha, [fy, fx], order=1, mode="constant", cval=0.0)
        img = a * head + (1 - a) * img

        img = gains[t] * img + offsets[t] + rng.normal(0, params.noise_sigma, img.shape)
        frames[t] = np.clip(np.round(img), 0, 255)
    return VideoSequence.from_array(frames)
