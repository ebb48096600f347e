"""End-to-end Wyner-Ziv codec runs, rate-distortion sweeps and the SI table.

Frame roles follow the GOP split: key frames at even positions travel
losslessly (or through a simple intra coder), WZ frames are sent as turbo
parity only. Per WZ frame the decoder builds SI from the two neighbouring
decoded key frames, then decodes bit planes MSB first, requesting parity
until each plane verifies.

Transform mode serialises plane rank ``r`` of a frame as: for every coded
band in zigzag order whose index has more than ``r`` planes, bit ``r`` (MSB
first) of that band's quantisation index in every 8x8 block, blocks in
raster order. Pixel mode serialises the 8 planes of the samples themselves.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bitstream, metrics, motion
from .entropy import table1_report
from .metrics import MetricKind, MetricParams
from .transform import (BandPlan, available_knobs, dct_forward, dct_inverse, dequantize_centres,
                        hvs_band_plan, quantize_bands, reconstruct_bands, DctBlockSet)
from .turbo import (INTERLEAVER_SEED, CrossoverModel, ParityServer,
                    PunctureSchedule, TurboBlock, decode_with_feedback, interleaver, turbo_encode)
from .video_io import (LAYOUTS, VideoSequence, load_raw_sequence, reassemble, split_gop)

logger = logging.getLogger(__name__)

MODES = ("transform", "pixel")
KEY_MODES = ("lossless", "intra")
ALL_METRICS = tuple(m.value for m in MetricKind)


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    input: str | None = None          # raw 4:2:0 / luma file; None selects the synthetic corpus
    width: int = 176
    height: int = 144
    layout: str = "420"
    corpus_seed: int = 2024
    frames: int = 20                  # WZ frames to process
    block_size: int = 16
    metric: str = "SSIM"
    metric_params: dict = field(default_factory=dict)
    search_range: int | None = None   # None: +-block_size
    vif_search_range: int | None = None
    knob: int = 4
    knobs: list = field(default_factory=lambda: [2, 4, 6, 8])
    metrics: list = field(default_factory=lambda: list(ALL_METRICS))
    mode: str = "transform"
    key_mode: str = "lossless"
    turbo_seed: int = INTERLEAVER_SEED
    max_iter: int = 15
    crossover_prior: float = 0.15
    use_context: bool = False
    entropy_model: str = "bsc"
    workers: int = 1
    timing: bool = True
    si_cache: str | None = None
    output_dir: str = "wzdvc_out"

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.layout in LAYOUTS, f"layout must be one of {LAYOUTS}")
        need(self.mode in MODES, f"mode must be one of {MODES}")
        need(self.key_mode in KEY_MODES, f"key_mode must be one of {KEY_MODES}")
        need(self.frames >= 1, "frames must be >= 1")
        need(self.block_size >= 4, "block_size must be >= 4")
        need(self.width % self.block_size == 0 and self.height % self.block_size == 0,
             f"{self.width}x{self.height} is not tiled by {self.block_size}x{self.block_size} blocks")
        need(self.width % 8 == 0 and self.height % 8 == 0, "frame size must be a multiple of 8")
        need(3 * self.block_size <= min(self.width, self.height), "search window exceeds frame")
        for r in (self.search_range, self.vif_search_range):
            need(r is None or 0 <= r <= self.block_size, "search ranges must lie in [0, block_size]")
        need(self.knob in available_knobs(), f"knob must be one of {available_knobs()}")
        need(len(self.knobs) >= 1 and all(k in available_knobs() for k in self.knobs),
             f"knobs must be drawn from {available_knobs()}")
        need(1 <= self.max_iter <= 100, "max_iter must be in [1, 100]")
        need(0 < self.crossover_prior < 0.5, "crossover_prior must be in (0, 0.5)")
        need(self.entropy_model in ("bsc", "context"), "entropy_model must be bsc or context")
        need(self.workers >= 1, "workers must be >= 1")
        need(0 <= self.turbo_seed < 2 ** 64, "turbo_seed must fit in 64 bits")
        try:
            MetricKind.parse(self.metric)
            for m in self.metrics:
                MetricKind.parse(m)
            MetricParams.from_dict(self.metric_params)
        except (ValueError, TypeError) as e:
            raise ConfigError(str(e)) from e
        return self

    @property
    def params(self):
        return MetricParams.from_dict(self.metric_params)

    def range_for(self, metric):
        if MetricKind.parse(metric) is MetricKind.VIF and self.vif_search_range is not None:
            return self.vif_search_range
        return self.search_range

    def to_json(self):
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n"

    def write(self, directory=None):
        out = Path(directory or self.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(self.to_json())
        return out


def load_sequence(cfg: PipelineConfig) -> VideoSequence:
    """The ``2 * frames + 1`` frames the run needs, from file or the corpus."""
    n = 2 * cfg.frames + 1
    if cfg.input is None:
        from .corpus import motion_corpus

        return motion_corpus(n, cfg.corpus_seed, cfg.width, cfg.height)
    seq = load_raw_sequence(cfg.input, cfg.width, cfg.height, cfg.layout)
    if len(seq) < n:
        raise ValueError(f"{cfg.input}: {len(seq)} frames, {cfg.frames} WZ frames need {n}")
    return VideoSequence(seq.frames[:n], seq.frame_rate)


# -- plane layout ----------------------------------------------------------------

@dataclass(frozen=True)
class PlaneLayout:
    """Which (sample column, plane count) pairs feed each plane rank.

    ``bands`` lists columns of the ``(n_samples, n_columns)`` index array in
    serialisation order, ``planes`` their plane counts.
    """

    bands: np.ndarray
    planes: np.ndarray

    @classmethod
    def for_mode(cls, mode, plan: BandPlan | None):
        if mode == "pixel":
            return cls(np.array([0]), np.array([8]))
        coded = plan.coded
        return cls(coded, plan.planes[coded])

    @property
    def ranks(self):
        return int(self.planes.max())

    def members(self, r):
        """Positions in ``bands`` that carry a plane of rank ``r``."""
        return np.flatnonzero(self.planes > r)

    def stream(self, idx, r):
        sel = self.members(r)
        cols = [(idx[:, self.bands[i]] >> (self.planes[i] - 1 - r)) & 1 for i in sel]
        return np.concatenate(cols).astype(np.uint8)


def _indices(frame, mode, plan):
    """``(n_samples, n_columns)`` integer values to be coded."""
    if mode == "pixel":
        return np.asarray(frame, np.int64).reshape(-1, 1)
    return quantize_bands(dct_forward(frame), plan).indices


def _si_positions(si, mode, plan):
    """Continuous index-domain position of the SI and, in transform mode, its coefficients."""
    if mode == "pixel":
        return np.asarray(si, float).reshape(-1, 1), None
    c = dct_forward(si).coefficients
    return c / plan.steps + plan.offsets, c


# -- encoder -------------------------------------------------------------------

@dataclass
class EncodedFrame:
    index: int
    streams: list        # per plane rank, list of TurboBlock
    source_bits: int


def encode_frame(frame, index, cfg, plan, perm) -> EncodedFrame:
    layout = PlaneLayout.for_mode(cfg.mode, plan)
    idx = _indices(frame, cfg.mode, plan)
    streams = [turbo_encode(layout.stream(idx, r), perm=perm) for r in range(layout.ranks)]
    return EncodedFrame(index, streams, int(sum(len(layout.stream(idx, r)) for r in range(layout.ranks))))


def intra_code(frame, plan):
    """Fixed-length intra coding of a key frame; returns ``(decoded, bits)``."""
    q = quantize_bands(dct_forward(frame), plan)
    blocks = DctBlockSet(dequantize_centres(q.indices, plan), *np.shape(frame))
    return dct_inverse(blocks), plan.total_planes * len(q.indices)


def encode_sequence(seq, cfg) -> bitstream.Bitstream:
    """Encoder side: key frames plus every parity chunk of every WZ block."""
    plan = hvs_band_plan(cfg.knob)
    perm = interleaver(seed=cfg.turbo_seed)
    split = split_gop(seq)
    bs = bitstream.Bitstream(meta=_meta(cfg, len(seq)))
    for f in split.key_frames:
        bs.keys[f.index] = intra_code(f.luma, plan)[0] if cfg.key_mode == "intra" else f.luma
    sched = PunctureSchedule()
    for f in split.wz_frames[:cfg.frames]:
        enc = encode_frame(f.luma, f.index, cfg, plan, perm)
        for r, blocks in enumerate(enc.streams):
            for b, blk in enumerate(blocks):
                bs.blocks.append(bitstream.BlockRecord(
                    f.index, r, b, blk.n_valid, blk.crc, _chunks(blk, sched, sched.period)))
    return bs


def _chunks(block: TurboBlock, sched, n):
    return np.stack([np.stack([block.parity[s, pos] for s, pos in enumerate(sched.chunk(k))])
                     for k in range(n)]).astype(np.uint8).reshape(n, 2, -1)


def _block_from_record(rec, sched):
    parity = np.zeros((2, sched.block_bits), np.uint8)
    for k, chunk in enumerate(rec.chunks):
        for s, pos in enumerate(sched.chunk(k)):
            parity[s, pos] = chunk[s]
    return TurboBlock(parity, rec.crc, rec.n_valid)


_RUN_ONLY = ("output_dir", "si_cache", "workers", "timing", "input")


def _meta(cfg, n_frames):
    """Configuration recorded in a bitstream, minus paths and run-environment knobs."""
    d = {k: v for k, v in dataclasses.asdict(cfg).items() if k not in _RUN_ONLY}
    d["sequence_frames"] = n_frames
    return d


# -- decoder -------------------------------------------------------------------

@dataclass
class FrameStats:
    index: int
    rate_bits: int
    verified: bool
    requests: int
    mse: float = float("nan")
    ssim: float = float("nan")


@dataclass
class CodecResult:
    decoded: VideoSequence
    point: "RdPoint"
    frames: list
    consumed: bitstream.Bitstream

    @property
    def all_verified(self):
        return all(f.verified for f in self.frames)


def decode_frame(si, streams, cfg, plan, perm, model: CrossoverModel, index=0, consumed=None,
                 limits=None):
    """Decode one WZ frame against its SI; returns ``(frame, rate_bits, verified, requests)``.

    ``streams[r]`` is a :class:`ParityServer` for plane rank ``r``; ``limits[r]``
    optionally caps its requests at the chunks the store holds. SI bits
    for each plane come from the SI value restricted to the bins allowed by
    the planes already decoded.
    """
    layout = PlaneLayout.for_mode(cfg.mode, plan)
    pos, si_coeffs = _si_positions(si, cfg.mode, plan)
    n = len(pos)
    levels = 1 << layout.planes
    prefix = np.zeros((n, len(layout.bands)), np.int64)
    si_idx = np.clip(np.floor(pos[:, layout.bands] + 0.5), 0, levels - 1).astype(np.int64)
    rate, verified, requests = 0, True, 0
    sched = PunctureSchedule()
    for r in range(layout.ranks):
        sel = layout.members(r)
        rem = layout.planes[sel] - r
        lo = prefix[:, sel] << rem
        guess = np.clip(si_idx[:, sel], lo, lo + (1 << rem) - 1)
        si_bits = ((guess >> (rem - 1)) & 1).T.ravel().astype(np.uint8)
        agree = ((si_idx[:, sel] >> rem) == prefix[:, sel]).T.astype(int)
        keys = [(int(layout.bands[i]), r) for i in sel]
        p_hat = np.concatenate([np.broadcast_to(model.estimate(k, agree[j]), (n,))
                                for j, k in enumerate(keys)])
        server = streams[r]
        res = decode_with_feedback(si_bits, server, p_hat, cfg.max_iter, perm=perm,
                                   max_requests=None if limits is None else limits[r])
        rate += res.rate_bits
        verified &= res.verified
        requests += int(res.requests.sum())
        bits = res.bits.reshape(len(sel), n)
        for j, k in enumerate(keys):
            model.update(k, bits[j], si_bits[j * n:(j + 1) * n], agree[j])
        prefix[:, sel] = (prefix[:, sel] << 1) | bits.T
        if consumed is not None:
            for b, blk in enumerate(server.blocks):
                consumed.blocks.append(bitstream.BlockRecord(
                    index, r, b, blk.n_valid, blk.crc, _chunks(blk, sched, int(res.requests[b]))))
            consumed.requests.extend((index, r, b, k, nb) for b, k, nb in server.log)
    if cfg.mode == "pixel":
        out = prefix[:, 0].reshape(np.shape(si)).astype(np.uint8)
    else:
        idx = np.zeros((n, len(plan.steps)), np.int64)
        idx[:, layout.bands] = prefix
        c = reconstruct_bands(idx, si_coeffs, plan)
        out = dct_inverse(DctBlockSet(c, *np.shape(si)))
    return out, rate, bool(verified), requests


def decode_bitstream(bs: bitstream.Bitstream, cfg, truth: VideoSequence | None = None,
                     si_frames=None) -> CodecResult:
    """Decoder side: SI from the key frames, feedback decoding of every WZ frame.

    ``truth`` (optional) only feeds the quality figures of the result.
    ``si_frames`` optionally supplies precomputed SI by frame index.
    """
    plan = hvs_band_plan(cfg.knob)
    perm = interleaver(seed=cfg.turbo_seed)
    sched = PunctureSchedule()
    n_frames = int(bs.meta.get("sequence_frames", 2 * cfg.frames + 1))
    by_frame = {}
    for rec in bs.blocks:
        by_frame.setdefault(rec.frame, {}).setdefault(rec.stream, []).append(rec)
    wz_idx = sorted(by_frame)
    for k in wz_idx:
        if k - 1 not in bs.keys or k + 1 not in bs.keys:
            raise ValueError(f"WZ frame {k} lacks a neighbouring key frame")
    if si_frames is None:
        cache = motion.SiCache(cfg.si_cache) if cfg.si_cache else None
        jobs = [(bs.keys[k - 1], bs.keys[k + 1], cfg.metric, cfg.block_size, cfg.params,
                 cfg.range_for(cfg.metric), cache) for k in wz_idx]
        si_frames = {k: si for k, (si, _) in zip(wz_idx, motion.si_frames(jobs, cfg.workers))}

    model = CrossoverModel(cfg.crossover_prior, cfg.use_context)
    consumed = bitstream.Bitstream(meta=dict(bs.meta, decoder_metric=cfg.metric))
    decoded, stats = {}, []
    for k in wz_idx:
        ranks = by_frame[k]
        streams, limits = [], []
        for r in range(len(ranks)):
            recs = sorted(ranks[r], key=lambda x: x.block)
            streams.append(ParityServer([_block_from_record(x, sched) for x in recs], sched))
            limits.append(min(len(x.chunks) for x in recs))
            if limits[-1] == 0:
                raise ValueError(f"frame {k} plane {r}: parity block without chunks")
        out, rate, ok, req = decode_frame(si_frames[k], streams, cfg, plan, perm, model, k,
                                          consumed, limits)
        decoded[k] = out
        st = FrameStats(k, rate, ok, req)
        if truth is not None:
            t = truth.frames[k].luma.astype(float)
            st.mse = metrics.mse(out.astype(float), t)
            st.ssim = metrics.ssim(out.astype(float), t)
        if not ok:
            logger.warning("frame %d: unverified plane(s) present", k)
        stats.append(st)
    seq = reassemble(dict(bs.keys), decoded, n_frames)
    return CodecResult(seq, rd_point(stats, cfg.metric, cfg.knob), stats, consumed)


# -- rate-distortion -----------------------------------------------------------

@dataclass(frozen=True)
class RdPoint:
    rate: float        # WZ bits (parity + CRC) per WZ frame
    psnr: float        # dB from the mean MSE over WZ frames; inf when exact
    ssim: float
    flagged: bool = False   # some plane failed to verify
    metric: str = ""
    knob: int = 0


def rd_point(stats, metric="", knob=0) -> RdPoint:
    rate = float(np.mean([s.rate_bits for s in stats]))
    mses = [s.mse for s in stats]
    psnr = metrics.psnr(float(np.mean(mses))) if not np.isnan(mses).any() else float("nan")
    return RdPoint(rate, psnr, float(np.mean([s.ssim for s in stats])),
                   not all(s.verified for s in stats), str(metric), knob)


def run_wz_codec(cfg: PipelineConfig, seq=None, si_frames=None) -> CodecResult:
    """Encode and decode the configured sequence in one process."""
    cfg.validate()
    seq = seq if seq is not None else load_sequence(cfg)
    bs = encode_sequence(seq, cfg)
    return decode_bitstream(bitstream.from_bytes(bitstream.to_bytes(bs)), cfg, seq, si_frames)


def compute_si(seq, cfg, metric=None):
    """SI for the first ``cfg.frames`` WZ frames from undistorted key frames."""
    metric = metric or cfg.metric
    split = split_gop(seq)
    wz = split.wz_frames[:cfg.frames]
    cache = motion.SiCache(cfg.si_cache) if cfg.si_cache else None
    jobs = [(seq.frames[f.index - 1], seq.frames[f.index + 1], metric, cfg.block_size,
             cfg.params, cfg.range_for(metric), cache) for f in wz]
    return {f.index: si for f, (si, _) in zip(wz, motion.si_frames(jobs, cfg.workers))}


RD_HEADER = ["metric", "knob", "rate", "psnr", "ssim", "flagged"]


def _fmt(v):
    return "inf" if math.isinf(v) else f"{v:.6f}"


def rd_sweep(cfg: PipelineConfig, knobs=None, metric_list=None, seq=None, csv_path=None):
    """One codec run per (metric, knob); rows are appended to the CSV as they finish.

    Returns the points grouped per metric, each group sorted by rate.
    """
    cfg.validate()
    knobs = list(knobs or cfg.knobs)
    if len(knobs) < 2:
        raise ConfigError("an RD sweep needs at least 2 knobs")
    metric_list = list(metric_list or cfg.metrics)
    seq = seq if seq is not None else load_sequence(cfg)
    if cfg.key_mode == "intra":
        raise ConfigError("RD sweeps use lossless key frames")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = Path(csv_path or out / "rd_sweep.csv")
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RD_HEADER)
        fh.flush()
        points = {}
        for m in metric_list:
            si = compute_si(seq, cfg, m)
            for k in knobs:
                run = dataclasses.replace(cfg, metric=MetricKind.parse(m).value, knob=k)
                p = run_wz_codec(run, seq, si).point
                points.setdefault(p.metric, []).append(p)
                w.writerow([p.metric, k, f"{p.rate:.3f}", _fmt(p.psnr), f"{p.ssim:.6f}",
                            int(p.flagged)])
                fh.flush()
                logger.info("%s knob %d: %.0f bits, %.2f dB", p.metric, k, p.rate, p.psnr)
    (out / "rd_plot.py").write_text(PLOT_SCRIPT.format(csv=csv_path.name))
    return {m: sorted(v, key=lambda p: p.rate) for m, v in points.items()}


def matched_rate_gap(better, worse, n=5, field="psnr"):
    """Quality difference at ``n`` rates spread over the overlap of two curves.

    Each curve is linearly interpolated in rate. Returns ``(rates, gaps)``;
    both are empty when the curves' rate ranges do not overlap.
    """
    a = sorted(better, key=lambda p: p.rate)
    b = sorted(worse, key=lambda p: p.rate)
    lo = max(a[0].rate, b[0].rate)
    hi = min(a[-1].rate, b[-1].rate)
    if not hi > lo:
        return np.zeros(0), np.zeros(0)
    rates = np.linspace(lo, hi, n)
    qa = np.interp(rates, [p.rate for p in a], [getattr(p, field) for p in a])
    qb = np.interp(rates, [p.rate for p in b], [getattr(p, field) for p in b])
    return rates, qa - qb


PLOT_SCRIPT = '''"""Plot quality against WZ bits per frame from {csv}."""
import csv
import sys
from collections import defaultdict

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "{csv}"
curves = defaultdict(list)
with open(path) as fh:
    for row in csv.DictReader(fh):
        curves[row["metric"]].append((float(row["rate"]), float(row["psnr"]), float(row["ssim"])))

fig, axes = plt.subplots(1, 2, figsize=(10, 4))
for metric, pts in sorted(curves.items()):
    pts.sort()
    rate = [p[0] for p in pts]
    axes[0].plot(rate, [p[1] for p in pts], marker="o", label=metric)
    axes[1].plot(rate, [p[2] for p in pts], marker="o", label=metric)
axes[0].set_ylabel("PSNR (dB)")
axes[1].set_ylabel("SSIM")
for ax in axes:
    ax.set_xlabel("WZ bits per frame")
    ax.grid(alpha=0.3)
    ax.legend()
fig.tight_layout()
fig.savefig(path.rsplit(".", 1)[0] + ".png", dpi=120)
'''


# -- table -----------------------------------------------------------------------

def run_table1(cfg: PipelineConfig, seq=None):
    """SI comparison table over the configured metrics; writes ``table1.csv``."""
    cfg.validate()
    seq = seq if seq is not None else load_sequence(cfg)
    ranges, labels = {}, {}
    if cfg.search_range is not None:
        ranges = {MetricKind.parse(m): cfg.search_range for m in cfg.metrics}
    if cfg.vif_search_range is not None:
        ranges[MetricKind.VIF] = cfg.vif_search_range
        labels[MetricKind.VIF] = f"VIF[r={cfg.vif_search_range}]"
    cache = motion.SiCache(cfg.si_cache) if cfg.si_cache else None
    rows, text = table1_report(seq, cfg.metrics, cfg.frames, cfg.params, cfg.block_size, ranges,
                               cfg.entropy_model, cache, cfg.timing, cfg.workers, labels)
    out = cfg.write()
    (out / "table1.csv").write_text(text)
    return rows, text
