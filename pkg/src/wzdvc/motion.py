"""Metric-driven full-search block matching and bidirectional SI interpolation.

Forward motion is estimated from the previous key frame to the next one; the
side-information frame is then built block by block by averaging the two
key frames fetched half a vector away on either side.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import metrics
from .metrics import MetricParams, Polarity


@dataclass(frozen=True)
class BlockGrid:
    block_size: int
    height: int
    width: int

    def __post_init__(self):
        n = self.block_size
        if self.height % n or self.width % n:
            raise ValueError(
                f"frame {self.width}x{self.height} is not tiled by {n}x{n} blocks")

    @classmethod
    def for_frame(cls, frame, block_size=16):
        luma = getattr(frame, "luma", frame)
        return cls(block_size, *np.shape(luma))

    @property
    def rows(self):
        return self.height // self.block_size

    @property
    def cols(self):
        return self.width // self.block_size

    @property
    def positions(self):
        """Top-left ``(y, x)`` of every block in raster order."""
        n = self.block_size
        return [(r * n, c * n) for r in range(self.rows) for c in range(self.cols)]

    def __len__(self):
        return self.rows * self.cols


@dataclass(frozen=True)
class MotionField:
    """One integer vector per block, stored as ``(dx, dy)`` rows."""

    grid: BlockGrid
    vectors: np.ndarray
    metric: str
    scores: np.ndarray
    search_range: int


def candidate_offsets(search_range):
    """All ``(dy, dx)`` in the square window, in tie-break order.

    Order: smallest ``|dx| + |dy|`` first, then raster order of ``(dy, dx)``.
    """
    r = np.arange(-search_range, search_range + 1)
    dy, dx = np.meshgrid(r, r, indexing="ij")
    dy, dx = dy.ravel(), dx.ravel()
    order = np.lexsort((dx, dy, np.abs(dx) + np.abs(dy)))
    return np.stack([dy[order], dx[order]], axis=1)


def _as_luma(frame):
    return np.asarray(getattr(frame, "luma", frame))


def block_match(prev, next, grid=None, metric="SAD", params=None,
                search_range=None) -> MotionField:
    """Exhaustive block matching of ``prev`` blocks inside ``next``.

    The candidate window is a ``3N x 3N`` region centred on each block, i.e.
    displacements in ``[-N, N]``; ``search_range`` narrows it. Candidates
    leaving the frame are skipped. Ties go to the candidate that comes first
    in :func:`candidate_offsets` order.
    """
    a = _as_luma(prev).astype(float)
    b = _as_luma(next).astype(float)
    if a.shape != b.shape:
        raise ValueError(f"key frames differ in shape: {a.shape} vs {b.shape}")
    grid = grid or BlockGrid.for_frame(a)
    if (grid.height, grid.width) != a.shape:
        raise ValueError(f"grid {grid.width}x{grid.height} does not match frame {a.shape[::-1]}")
    n = grid.block_size
    if 3 * n > min(a.shape):
        raise ValueError(f"search window {3 * n} exceeds frame size {a.shape}")
    rng = n if search_range is None else int(search_range)
    m = metrics.as_metric(metric)
    params = params or MetricParams()

    offsets = candidate_offsets(rng)
    windows = sliding_window_view(b, (n, n))
    h, w = a.shape
    vectors = np.zeros((len(grid), 2), dtype=int)
    scores = np.zeros(len(grid))
    for i, (y, x) in enumerate(grid.positions):
        cy = y + offsets[:, 0]
        cx = x + offsets[:, 1]
        ok = (cy >= 0) & (cx >= 0) & (cy <= h - n) & (cx <= w - n)
        cands = windows[cy[ok], cx[ok]]
        s = m.make_scorer(a[y:y + n, x:x + n], params)(cands)
        best = m.polarity.best(s)
        dy, dx = offsets[ok][best]
        vectors[i] = dx, dy
        scores[i] = s[best]
    return MotionField(grid, vectors, m.name, scores, rng)


def half_vector(v):
    """``v / 2`` rounded to nearest with ties toward zero (so ``+-1 -> 0``)."""
    v = np.asarray(v)
    return np.sign(v) * (np.abs(v) // 2)


def interpolate_si(prev, next, field: MotionField) -> np.ndarray:
    """Bidirectional motion-compensated interpolation of the middle frame.

    For the block at ``p`` with vector ``v`` and ``h = half_vector(v)``, the
    SI block is the rounded mean of ``prev`` at ``p - h`` and ``next`` at
    ``p + h``: the two halves of the trajectory meet at ``p``. Source
    coordinates outside the frame are clamped to the border.
    """
    a = _as_luma(prev).astype(np.int32)
    b = _as_luma(next).astype(np.int32)
    grid = field.grid
    n = grid.block_size
    h, w = a.shape
    out = np.empty((h, w), np.uint8)
    span = np.arange(n)
    for (y, x), (dx, dy) in zip(grid.positions, field.vectors):
        hy, hx = half_vector(dy), half_vector(dx)
        ry = np.clip(y - hy + span, 0, h - 1)[:, None]
        rx = np.clip(x - hx + span, 0, w - 1)[None, :]
        fy = np.clip(y + hy + span, 0, h - 1)[:, None]
        fx = np.clip(x + hx + span, 0, w - 1)[None, :]
        out[y:y + n, x:x + n] = (a[ry, rx] + b[fy, fx] + 1) // 2
    return out


@dataclass(frozen=True)
class SiReport:
    mse: float
    ssim: float
    vif: float
    frame_index: int = -1


def si_quality_report(si, truth, params=None, frame_index=-1) -> SiReport:
    """MSE, SSIM and VIF of an SI frame against the true WZ frame."""
    s = _as_luma(si).astype(float)
    t = _as_luma(truth).astype(float)
    if s.shape != t.shape:
        raise ValueError(f"SI shape {s.shape} differs from truth {t.shape}")
    params = params or MetricParams()
    return SiReport(metrics.mse(s, t), metrics.ssim(s, t, params.ssim),
                    metrics.vif(t, s, params.vif), frame_index)


def generate_si(prev, next, metric="SAD", block_size=16, params=None, search_range=None):
    """Motion search plus interpolation; returns ``(si, field)``."""
    grid = BlockGrid.for_frame(prev, block_size)
    field = block_match(prev, next, grid, metric, params, search_range)
    return interpolate_si(prev, next, field), field


def si_cache_key(prev, next, metric, block_size, params, search_range):
    """Content hash identifying one SI computation."""
    h = hashlib.sha256()
    for f in (prev, next):
        h.update(np.ascontiguousarray(_as_luma(f), dtype=np.uint8).tobytes())
    meta = {"metric": metrics.as_metric(metric).name, "block": block_size,
            "range": search_range, "params": dataclasses.asdict(params or MetricParams())}
    h.update(json.dumps(meta, sort_keys=True).encode())
    return h.hexdigest()[:32]


class SiCache:
    """Directory of ``<key>.npz`` files holding SI frames and their search time.

    The stored time is the wall time of the original computation, so reports
    built from cached frames still carry meaningful timings.
    """

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def get(self, key):
        path = self.directory / f"{key}.npz"
        if not path.exists():
            return None
        with np.load(path) as z:
            return z["si"], float(z["seconds"])

    def put(self, key, si, seconds):
        tmp = self.directory / f"{key}.tmp.npz"
        np.savez(tmp, si=si, seconds=seconds)
        tmp.replace(self.directory / f"{key}.npz")


def cached_si(prev, next, metric="SAD", block_size=16, params=None, search_range=None,
              cache=None):
    """:func:`generate_si` through an optional :class:`SiCache`; returns ``(si, seconds)``."""
    key = None
    if cache is not None:
        key = si_cache_key(prev, next, metric, block_size, params, search_range)
        hit = cache.get(key)
        if hit is not None:
            return hit
    t0 = time.perf_counter()
    si, _ = generate_si(prev, next, metric, block_size, params, search_range)
    dt = time.perf_counter() - t0
    if cache is not None:
        cache.put(key, si, dt)
    return si, dt


def _si_job(args):
    return cached_si(*args)


def si_frames(jobs, workers=1):
    """Run :func:`cached_si` over ``jobs`` (argument tuples), results in job order.

    With ``workers > 1`` the frames are spread over a process pool; each
    result is a pure function of its job, so the output does not depend on
    the worker count.
    """
    jobs = list(jobs)
    if workers <= 1 or len(jobs) <= 1:
        return [_si_job(j) for j in jobs]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_si_job, jobs))


__all__ = [
    "si_frames", "SiCache", "cached_si", "si_cache_key",
    "BlockGrid", "MotionField", "SiReport", "Polarity", "block_match", "candidate_offsets",
    "generate_si", "half_vector", "interpolate_si", "si_quality_report",
]
