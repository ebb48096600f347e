"""8x8 DCT, band-wise uniform quantisation, bitplanes and SI-aided reconstruction."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np
import scipy.fft

BLOCK = 8


def _zigzag():
    cells = [(r, c) for r in range(BLOCK) for c in range(BLOCK)]
    cells.sort(key=lambda rc: (rc[0] + rc[1], rc[0] if (rc[0] + rc[1]) % 2 else rc[1]))
    return np.array([r * BLOCK + c for r, c in cells])


ZIGZAG = _zigzag()                 # zigzag position -> raster index in the block
UNZIGZAG = np.argsort(ZIGZAG)      # raster index -> zigzag position


@dataclass(frozen=True)
class DctBlockSet:
    """``coefficients[b, k]`` is zigzag coefficient ``k`` of block ``b`` (raster order)."""

    coefficients: np.ndarray
    height: int
    width: int


def _blocks(img):
    h, w = img.shape
    if h % BLOCK or w % BLOCK:
        raise ValueError(f"frame {w}x{h} is not a multiple of {BLOCK}")
    return img.reshape(h // BLOCK, BLOCK, w // BLOCK, BLOCK).swapaxes(1, 2).reshape(-1, BLOCK, BLOCK)


def dct_forward(frame) -> DctBlockSet:
    """Orthonormal type-II DCT of every 8x8 block."""
    img = np.asarray(getattr(frame, "luma", frame), dtype=float)
    c = scipy.fft.dctn(_blocks(img), axes=(1, 2), norm="ortho")
    return DctBlockSet(c.reshape(-1, BLOCK * BLOCK)[:, ZIGZAG], *img.shape)


def dct_inverse_float(blocks: DctBlockSet) -> np.ndarray:
    h, w = blocks.height, blocks.width
    c = blocks.coefficients[:, UNZIGZAG].reshape(-1, BLOCK, BLOCK)
    px = scipy.fft.idctn(c, axes=(1, 2), norm="ortho")
    return px.reshape(h // BLOCK, w // BLOCK, BLOCK, BLOCK).swapaxes(1, 2).reshape(h, w)


def dct_inverse(blocks: DctBlockSet) -> np.ndarray:
    """Inverse DCT rounded and clamped to 8-bit samples."""
    return np.clip(np.round(dct_inverse_float(blocks)), 0, 255).astype(np.uint8)


# -- band plan ---------------------------------------------------------------

@dataclass(frozen=True)
class BandPlan:
    """Per zigzag band: quantiser step, level count (0 = uncoded), signedness."""

    knob: int
    steps: np.ndarray
    levels: np.ndarray
    signed: np.ndarray

    @property
    def coded(self):
        return np.flatnonzero(self.levels >= 2)

    @property
    def planes(self):
        """Bitplanes per band (0 for uncoded bands)."""
        out = np.zeros(len(self.levels), dtype=int)
        m = self.levels >= 2
        out[m] = np.log2(self.levels[m]).astype(int)
        return out

    @property
    def offsets(self):
        """Index of the zero-valued bin: half the levels for signed bands."""
        return np.where(self.signed, self.levels // 2, 0)

    @property
    def total_planes(self):
        return int(self.planes.sum())


def _parse_plan_file(text):
    scales, bands, section = {}, [], None
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            section = line.strip("[]")
            continue
        f = line.split()
        if section == "scales":
            scales[int(f[0])] = float(f[1])
        elif section == "bands":
            bands.append((int(f[0]), int(f[1]), int(f[2]), float(f[3]), float(f[4])))
    bands.sort()
    if [b[0] for b in bands] != list(range(BLOCK * BLOCK)):
        raise ValueError("band plan must list all 64 zigzag bands")
    return scales, np.array([b[3] for b in bands]), np.array([b[4] for b in bands])


@lru_cache(maxsize=None)
def _plan_table():
    text = resources.files("wzdvc").joinpath("data/band_plan.txt").read_text()
    return _parse_plan_file(text)


def available_knobs():
    return sorted(_plan_table()[0])


def hvs_band_plan(knob: int) -> BandPlan:
    """Band plan for a quality knob (1 = coarsest).

    Steps are the shipped base table times the knob's multiplier; each band
    gets the smallest power-of-two level count whose bins span its design
    range, or is left uncoded when one bin already spans it.
    """
    scales, base, amplitude = _plan_table()
    if knob not in scales:
        raise ValueError(f"unknown quality knob {knob!r}; choose from {sorted(scales)}")
    steps = base * scales[knob]
    signed = np.arange(BLOCK * BLOCK) > 0
    width = np.where(signed, 2 * amplitude, amplitude)
    ratio = width / steps
    levels = np.where(ratio > 1, 2 ** np.ceil(np.log2(np.maximum(ratio, 1))), 0).astype(int)
    for a in (steps, levels, signed):
        a.flags.writeable = False
    return BandPlan(knob, steps, levels, signed)


# -- quantisation and reconstruction -------------------------------------------

@dataclass(frozen=True)
class Quantized:
    """Indices ``(n_blocks, 64)``; uncoded bands hold 0."""

    indices: np.ndarray
    saturated: int


def quantize_bands(blocks, plan: BandPlan) -> Quantized:
    """Mid-tread uniform quantisation, clamped to each band's index range."""
    c = blocks.coefficients if isinstance(blocks, DctBlockSet) else np.asarray(blocks, float)
    coded = plan.levels >= 2
    raw = np.floor(c / plan.steps + 0.5).astype(np.int64) + plan.offsets
    hi = np.maximum(plan.levels - 1, 0)
    sat = int(np.count_nonzero(((raw < 0) | (raw > hi)) & coded))
    idx = np.where(coded, np.clip(raw, 0, hi), 0)
    return Quantized(idx, sat)


@dataclass(frozen=True)
class ReconstructionRule:
    """Bin geometry of one band: ``bin i = [(i - offset - 1/2) step, (i - offset + 1/2) step]``."""

    step: float
    offset: int
    levels: int

    @classmethod
    def for_band(cls, plan, band):
        return cls(float(plan.steps[band]), int(plan.offsets[band]), int(plan.levels[band]))

    def bounds(self, index):
        index = np.asarray(index)
        if np.any((index < 0) | (index >= self.levels)):
            raise ValueError(f"bin index out of range [0, {self.levels})")
        centre = (index - self.offset) * self.step
        return centre - self.step / 2, centre + self.step / 2

    def centre(self, index):
        lo, hi = self.bounds(index)
        return (lo + hi) / 2


def reconstruct(decoded_index, si_value, rule: ReconstructionRule):
    """Keep the SI value if it falls in the decoded bin, else clamp it to the bin."""
    lo, hi = rule.bounds(decoded_index)
    return np.clip(si_value, lo, hi)


def reconstruct_bands(indices, si_coefficients, plan: BandPlan):
    """Vectorised :func:`reconstruct` over all coded bands; uncoded bands keep SI."""
    si = np.asarray(si_coefficients, dtype=float)
    coded = plan.levels >= 2
    centre = (indices - plan.offsets) * plan.steps
    out = np.clip(si, centre - plan.steps / 2, centre + plan.steps / 2)
    return np.where(coded, out, si)


def dequantize_centres(indices, plan: BandPlan):
    coded = plan.levels >= 2
    return np.where(coded, (indices - plan.offsets) * plan.steps, 0.0)


# -- bitplanes ---------------------------------------------------------------

@dataclass(frozen=True)
class BitplaneStream:
    """``planes[k]`` holds bit ``plane_count - 1 - k`` of every value (MSB first)."""

    planes: np.ndarray
    plane_count: int
    source: str = "pixel"


def to_bitplanes(values, plane_count=8, source="pixel") -> BitplaneStream:
    v = np.asarray(getattr(values, "luma", values))
    if v.size and (v.min() < 0 or v.max() >= 1 << plane_count):
        raise ValueError(f"values outside [0, {(1 << plane_count) - 1}] for {plane_count} planes")
    v = v.astype(np.int64)
    shifts = np.arange(plane_count - 1, -1, -1).reshape((-1,) + (1,) * v.ndim)
    return BitplaneStream(((v[None] >> shifts) & 1).astype(np.uint8), plane_count, source)


def from_bitplanes(stream: BitplaneStream) -> np.ndarray:
    p = stream.planes.astype(np.int64)
    shifts = np.arange(stream.plane_count - 1, -1, -1).reshape((-1,) + (1,) * (p.ndim - 1))
    out = (p << shifts).sum(axis=0)
    return out.astype(np.uint8) if stream.plane_count <= 8 else out
