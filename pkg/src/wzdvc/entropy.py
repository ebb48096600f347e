"""Bitplane error rates, conditional-rate estimates and the SI comparison table."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass

import numpy as np

from . import motion
from .metrics import MetricKind, MetricParams
from .transform import BitplaneStream, to_bitplanes
from .turbo import binary_entropy
from .video_io import split_gop

logger = logging.getLogger(__name__)

MODELS = ("bsc", "context")

CSV_HEADER = ["metric", "mse", "ssim", "vif", "avg_plane_err",
              "msb1", "msb2", "msb3", "msb4", "time_sec", "h_cond"]


@dataclass(frozen=True)
class PlaneErrorStats:
    per_plane: np.ndarray   # flip rate per plane, MSB first

    @property
    def mean(self):
        return float(self.per_plane.mean())

    @property
    def msb4(self):
        return self.per_plane[:4]


def plane_errors(truth, si) -> PlaneErrorStats:
    """Per-plane Hamming distance between two 8-bit frames, as a fraction."""
    t = np.asarray(getattr(truth, "luma", truth))
    s = np.asarray(getattr(si, "luma", si))
    if t.shape != s.shape:
        raise ValueError(f"shape mismatch: {t.shape} vs {s.shape}")
    tp, sp = to_bitplanes(t).planes, to_bitplanes(s).planes
    return PlaneErrorStats((tp != sp).reshape(8, -1).mean(axis=1))


@dataclass(frozen=True)
class ConditionalRateEstimate:
    h: float          # bits per source bit
    model: str
    frames: int
    per_plane: np.ndarray


def _bsc_rates(tp, sp):
    p = (tp != sp).reshape(len(tp), -1).mean(axis=1)
    return binary_entropy(p)


def _context_rates(tp, sp):
    """``H(X_k | Y_k, X_0..X_{k-1})`` per plane, plug-in (empirical frequency) estimate."""
    n_planes = len(tp)
    t = tp.reshape(n_planes, -1).astype(np.int64)
    s = sp.reshape(n_planes, -1).astype(np.int64)
    n = t.shape[1]
    out = np.empty(n_planes)
    prefix = np.zeros(n, np.int64)
    for k in range(n_planes):
        ctx = (prefix << 1) | s[k]
        n_ctx = 2 << k
        total = np.bincount(ctx, minlength=n_ctx)
        ones = np.bincount(ctx, weights=t[k], minlength=n_ctx)
        used = total > 0
        p1 = ones[used] / total[used]
        out[k] = float((total[used] / n * binary_entropy(p1)).sum())
        prefix = (prefix << 1) | t[k]
    return out


def conditional_rate(truth_planes, si_planes, model="bsc") -> ConditionalRateEstimate:
    """Estimate ``H(Fe|Fo)`` in bits per source bit from true and SI bitplanes.

    Accepts one :class:`BitplaneStream` per side or lists of them (one per
    frame); per-frame estimates are averaged. ``"bsc"`` treats each plane as
    a binary symmetric channel with its empirical crossover; ``"context"``
    also conditions each bit on the higher true bits of the same sample.
    """
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; choose from {MODELS}")
    if isinstance(truth_planes, BitplaneStream):
        truth_planes, si_planes = [truth_planes], [si_planes]
    if not len(truth_planes) or len(truth_planes) != len(si_planes):
        raise ValueError("need matching, non-empty lists of bitplane streams")
    rates = []
    for tp, sp in zip(truth_planes, si_planes):
        if tp.planes.shape != sp.planes.shape or tp.planes.size == 0:
            raise ValueError("bitplane geometry mismatch or empty planes")
        fn = _bsc_rates if model == "bsc" else _context_rates
        rates.append(fn(tp.planes, sp.planes))
    per_plane = np.mean(rates, axis=0)
    return ConditionalRateEstimate(float(per_plane.mean()), model, len(rates), per_plane)


@dataclass(frozen=True)
class SiReportRow:
    metric: str
    mse: float
    ssim: float
    vif: float
    avg_plane_err: float
    msb4: tuple
    time_sec: float
    h_cond: float
    frames: int = 0
    model: str = "bsc"

    def csv_fields(self, timing=True):
        f = lambda v: f"{v:.6f}"
        return [self.metric, f(self.mse), f(self.ssim), f(self.vif), f(self.avg_plane_err),
                *(f(v) for v in self.msb4),
                f"{self.time_sec:.3f}" if timing else "NA", f(self.h_cond)]


def rows_to_csv(rows, timing=True):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.csv_fields(timing))
    return buf.getvalue()


def table1_report(seq, metrics=tuple(MetricKind), frames=20, params=None, block_size=16,
                  search_ranges=None, model="bsc", cache=None, timing=True, workers=1,
                  labels=None):
    """Compare SI generation methods over the first ``frames`` WZ frames.

    Key frames are used undistorted. ``search_ranges`` optionally maps a
    metric to a narrower displacement bound and ``labels`` renames rows
    (e.g. to mark such a restriction). A metric's time is the summed wall
    time of its per-frame searches. Returns ``(rows, csv_text)``.
    """
    params = params or MetricParams()
    split = split_gop(seq)
    wz = split.wz_frames[:frames]
    if len(wz) < frames:
        raise ValueError(f"sequence yields {len(split.wz_frames)} WZ frames, {frames} requested")
    search_ranges = {MetricKind.parse(k): v for k, v in (search_ranges or {}).items()}
    rows = []
    for m in metrics:
        kind = MetricKind.parse(m)
        reports, errs, truth_p, si_p = [], [], [], []
        jobs = [(seq.frames[split.pairing[f.index][0]], seq.frames[split.pairing[f.index][1]],
                 kind, block_size, params, search_ranges.get(kind), cache) for f in wz]
        results = motion.si_frames(jobs, workers)
        elapsed = float(sum(dt for _, dt in results))
        for f, (si, _) in zip(wz, results):
            reports.append(motion.si_quality_report(si, f, params, f.index))
            errs.append(plane_errors(f, si).per_plane)
            truth_p.append(to_bitplanes(f.luma))
            si_p.append(to_bitplanes(si))
        pe = np.mean(errs, axis=0)
        h = conditional_rate(truth_p, si_p, model)
        label = (labels or {}).get(kind, kind.value)
        row = SiReportRow(label,
                          float(np.mean([r.mse for r in reports])),
                          float(np.mean([r.ssim for r in reports])),
                          float(np.mean([r.vif for r in reports])),
                          float(pe.mean()), tuple(float(v) for v in pe[:4]),
                          elapsed, h.h, len(wz), model)
        logger.info("%s: ssim %.3f h %.3f (%.1fs)", kind.value, row.ssim, row.h_cond, elapsed)
        rows.append(row)
    return rows, rows_to_csv(rows, timing)
