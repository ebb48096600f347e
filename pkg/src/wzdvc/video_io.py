"""Raw YUV/luma sequence I/O and key/Wyner-Ziv frame splitting.

Only the luma plane is ever kept; chroma planes of 4:2:0 files are skipped
when reading and written as mid-grey when writing.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

QCIF_WIDTH = 176
QCIF_HEIGHT = 144

LAYOUTS = ("420", "luma")


@dataclass(frozen=True)
class Frame:
    """One 8-bit luma raster.

    ``luma`` is stored as a read-only ``(height, width)`` uint8 array.
    """

    luma: np.ndarray
    index: int = 0

    def __post_init__(self):
        luma = np.asarray(self.luma)
        if luma.ndim != 2:
            raise ValueError(f"luma must be 2-D, got shape {luma.shape}")
        if luma.dtype != np.uint8:
            if np.any(luma < 0) or np.any(luma > 255):
                raise ValueError("luma samples must lie in [0, 255]")
            luma = luma.astype(np.uint8)
        if min(luma.shape) < 16:
            raise ValueError(f"frame must be at least 16x16, got {luma.shape}")
        luma = np.array(luma, copy=True)
        luma.flags.writeable = False
        object.__setattr__(self, "luma", luma)

    @property
    def width(self) -> int:
        return self.luma.shape[1]

    @property
    def height(self) -> int:
        return self.luma.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return self.index == other.index and np.array_equal(self.luma, other.luma)

    __hash__ = None


@dataclass(frozen=True)
class VideoSequence:
    frames: tuple
    frame_rate: float = 15.0

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise ValueError("a sequence needs at least one frame")
        shape = frames[0].luma.shape
        for k, f in enumerate(frames):
            if f.luma.shape != shape:
                raise ValueError(f"frame {k} has shape {f.luma.shape}, expected {shape}")
            if f.index != k:
                raise ValueError(f"frame indices must be consecutive from 0 (got {f.index} at {k})")
        object.__setattr__(self, "frames", frames)

    @classmethod
    def from_array(cls, luma, frame_rate=15.0):
        """Build a sequence from a ``(T, H, W)`` array."""
        luma = np.asarray(luma)
        return cls(tuple(Frame(luma[k], k) for k in range(luma.shape[0])), frame_rate)

    def __len__(self):
        return len(self.frames)

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def height(self) -> int:
        return self.frames[0].height

    def as_array(self) -> np.ndarray:
        return np.stack([f.luma for f in self.frames])


@dataclass(frozen=True)
class GopSplit:
    """Key frames at even 0-based positions, WZ frames in between.

    ``pairing`` maps each usable WZ frame index to ``(prev_key, next_key)``.
    ``dropped`` lists trailing WZ frames with no next key frame.
    """

    key_frames: tuple
    wz_frames: tuple
    pairing: dict
    dropped: tuple = field(default_factory=tuple)


def frame_bytes(width, height, layout="420"):
    if layout == "420":
        return width * height + 2 * ((width + 1) // 2) * ((height + 1) // 2)
    if layout == "luma":
        return width * height
    raise ValueError(f"unknown layout {layout!r}; expected one of {LAYOUTS}")


def load_raw_sequence(path, width=QCIF_WIDTH, height=QCIF_HEIGHT, layout="420",
                      frame_rate=15.0) -> VideoSequence:
    """Read a headerless planar file and return its luma frames in file order."""
    unit = frame_bytes(width, height, layout)
    size = os.path.getsize(path)
    if size == 0:
        raise ValueError(f"{path}: file holds zero frames")
    if size % unit:
        raise ValueError(
            f"{path}: size {size} bytes is not a multiple of the {unit}-byte "
            f"frame unit for {width}x{height} layout {layout} "
            f"(expected {size // unit * unit} or {(size // unit + 1) * unit} bytes)")
    raw = np.fromfile(path, dtype=np.uint8).reshape(size // unit, unit)
    luma = raw[:, : width * height].reshape(-1, height, width)
    return VideoSequence.from_array(luma, frame_rate)


def write_raw_sequence(path, seq, layout="420"):
    """Write ``seq`` as a headerless planar file; chroma is filled with 128."""
    w, h = seq.width, seq.height
    chroma = frame_bytes(w, h, layout) - w * h
    with open(path, "wb") as fh:
        for f in seq.frames:
            fh.write(f.luma.tobytes())
            if chroma:
                fh.write(np.full(chroma, 128, np.uint8).tobytes())


def split_gop(seq: VideoSequence) -> GopSplit:
    """Split into key frames (positions 0, 2, 4, ...) and WZ frames (1, 3, ...).

    Position 0 is the first frame, i.e. the "odd" frame in 1-based counting.
    A trailing WZ frame without a following key frame is dropped.
    """
    n = len(seq)
    if n < 3:
        raise ValueError(f"need at least 3 frames to form a GOP, got {n}")
    keys = tuple(seq.frames[0::2])
    wz, pairing, dropped = [], {}, []
    for k in range(1, n, 2):
        if k + 1 < n:
            wz.append(seq.frames[k])
            pairing[k] = (k - 1, k + 1)
        else:
            dropped.append(k)
            logger.warning("WZ frame %d has no next key frame; dropped", k)
    return GopSplit(keys, tuple(wz), pairing, tuple(dropped))


def reassemble(keys, wz, n_frames):
    """Interleave decoded key and WZ frames back into display order.

    ``keys`` and ``wz`` map frame index to a luma array. Missing indices (a
    dropped trailing WZ frame) are filled by repeating the previous frame.
    """
    out = []
    for k in range(n_frames):
        if k in keys:
            out.append(keys[k])
        elif k in wz:
            out.append(wz[k])
        else:
            out.append(out[-1])
    return VideoSequence.from_array(np.stack(out))


# -- deterministic fixture sequences -----------------------------------------

def constant_sequence(n_frames, width=QCIF_WIDTH, height=QCIF_HEIGHT):
    """Frame k is constant with value k (mod 256)."""
    luma = np.empty((n_frames, height, width), np.uint8)
    for k in range(n_frames):
        luma[k] = k % 256
    return VideoSequence.from_array(luma)


def random_sequence(n_frames, seed, width=QCIF_WIDTH, height=QCIF_HEIGHT):
    rng = np.random.default_rng(seed)
    return VideoSequence.from_array(
        rng.integers(0, 256, size=(n_frames, height, width), dtype=np.uint8))


def static_sequence(n_frames, seed, width=QCIF_WIDTH, height=QCIF_HEIGHT):
    """A smooth random texture repeated unchanged in every frame."""
    img = _smooth_texture(seed, height, width)
    return VideoSequence.from_array(np.repeat(img[None], n_frames, axis=0))


def pan_sequence(n_frames, seed, speed=2, width=QCIF_WIDTH, height=QCIF_HEIGHT):
    """Horizontal integer pan: frame k is the texture moved right by ``speed*k``."""
    margin = speed * n_frames
    img = _smooth_texture(seed, height, width + margin)
    luma = np.stack([img[:, margin - speed * k: margin - speed * k + width]
                     for k in range(n_frames)])
    return VideoSequence.from_array(luma)


def _smooth_texture(seed, height, width):
    from scipy.ndimage import gaussian_filter

    rng = np.random.default_rng(seed)
    img = gaussian_filter(rng.normal(size=(height, width)), 2.0, mode="wrap")
    img = (img - img.min()) / (np.ptp(img) + 1e-12)
    return np.round(20 + 215 * img).astype(np.uint8)


def write_fixture(path, kind, n_frames, seed=0, layout="420", **kw):
    """Write one of the deterministic fixture sequences to ``path``."""
    makers = {
        "constant": lambda: constant_sequence(n_frames, **kw),
        "random": lambda: random_sequence(n_frames, seed, **kw),
        "static": lambda: static_sequence(n_frames, seed, **kw),
        "pan": lambda: pan_sequence(n_frames, seed, **kw),
    }
    if kind == "corpus":
        from .corpus import motion_corpus
        seq = motion_corpus(n_frames, seed)
    else:
        seq = makers[kind]()
    write_raw_sequence(path, seq, layout)
    return seq
