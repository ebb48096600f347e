"""Acceptance criteria A1-A9.

Each test prints one ``A<n> PASS|FAIL`` line (collected again in the pytest
terminal summary). A4-A7 and A9 run on the synthetic motion corpus, seed
2024, first 20 WZ frames at QCIF with the full +-16 search for every metric;
on this corpus only orderings are asserted and the reference bands are
reported as warnings. The corpus work is done once per module: the SI
comparison table, then RD sweeps for SAD and SSIM reusing the cached SI.
"""

import math
import time
import warnings

import numpy as np
import pytest

from wzdvc import metrics as M
from wzdvc import motion
from wzdvc.corpus import motion_corpus
from wzdvc.entropy import table1_report
from wzdvc.pipeline import PipelineConfig, matched_rate_gap, rd_sweep
from wzdvc.transform import (dct_forward, dct_inverse, from_bitplanes, hvs_band_plan,
                             quantize_bands, to_bitplanes)
from wzdvc.turbo import ParityServer, binary_entropy, decode_with_feedback, turbo_encode

from test_metrics import mse_oracle, sad_oracle, ssim_oracle

WZ_FRAMES = 20
CASES = 100
REL = 1e-9

# reference values for the soft bands: h_cond, SSIM of SI
REF_H = {"SAD": 0.926, "MSE": 0.919, "SSIM": 0.765, "CW-SSIM": 0.731, "VIF": 0.706}
REF_SSIM = {"SAD": 0.42, "MSE": 0.43, "SSIM": 0.79, "CW-SSIM": 0.84, "VIF": 0.88}


def rel_close(a, b, rel=REL):
    return abs(a - b) <= rel * max(1.0, abs(b))


# -- A1 --------------------------------------------------------------------------

def metric_cases(n=CASES, seed=2024):
    """Half independent blocks, half correlated pairs, 16x16 uint8."""
    rng = np.random.default_rng(seed)
    for i in range(n):
        x = rng.integers(0, 256, (16, 16)).astype(float)
        if i % 2:
            y = np.clip(np.round(x + rng.normal(0, rng.uniform(1, 40), x.shape)), 0, 255)
        else:
            y = rng.integers(0, 256, (16, 16)).astype(float)
        yield x, y


def test_a1_metric_axioms(verdict):
    t0 = time.perf_counter()
    bad = []
    for x, y in metric_cases():
        s_xy, s_yx = M.ssim(x, y), M.ssim(y, x)
        c_xy, c_yx = M.cw_ssim(x, y), M.cw_ssim(y, x)
        v = M.vif(x, y)
        checks = {
            "sad oracle": rel_close(M.sad(x, y), sad_oracle(x, y)),
            "mse oracle": rel_close(M.mse(x, y), mse_oracle(x, y)),
            "ssim oracle": rel_close(s_xy, ssim_oracle(x, y)),
            "sad identity": M.sad(x, x) == 0,
            "mse identity": M.mse(x, x) == 0,
            "ssim identity": M.ssim(x, x) == 1.0,
            "cw identity": rel_close(M.cw_ssim(x, x), 1.0),
            "vif identity": rel_close(M.vif(x, x), 1.0),
            "sad symmetry": M.sad(x, y) == M.sad(y, x) >= 0,
            "mse symmetry": M.mse(x, y) == M.mse(y, x) >= 0,
            "ssim symmetry": rel_close(s_xy, s_yx),
            "cw symmetry": rel_close(c_xy, c_yx),
            "ssim range": -1 <= s_xy <= 1,
            "cw range": -REL <= c_xy <= 1 + REL,
            "vif range": v >= 0 and math.isfinite(v),
        }
        bad += [k for k, ok in checks.items() if not ok]
    dt = time.perf_counter() - t0
    ok = not bad and dt < 60
    verdict("A1", ok, f"{CASES} cases x 15 checks, {len(bad)} failures, {dt:.1f}s")
    assert not bad, sorted(set(bad))
    assert dt < 60


# -- A2 --------------------------------------------------------------------------

def test_a2_transform_roundtrips(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    plan = hvs_band_plan(4)
    worst_parseval, failures = 0.0, 0
    for _ in range(50):
        f = rng.integers(0, 256, (144, 176), dtype=np.uint8)
        d = dct_forward(f)
        failures += not np.array_equal(dct_inverse(d), f)
        ex = (f.astype(float) ** 2).sum()
        worst_parseval = max(worst_parseval, abs((d.coefficients ** 2).sum() - ex) / ex)
        failures += not np.array_equal(from_bitplanes(to_bitplanes(f)), f)
        idx = quantize_bands(d.coefficients, plan).indices
        for k in np.flatnonzero(plan.levels >= 2):
            s = to_bitplanes(idx[:, k], int(plan.planes[k]), source="band")
            failures += not np.array_equal(from_bitplanes(s), idx[:, k])
    dt = time.perf_counter() - t0
    ok = failures == 0 and worst_parseval <= 1e-6 and dt < 60
    verdict("A2", ok, f"50 frames, {failures} round-trip failures, "
                      f"worst Parseval rel err {worst_parseval:.1e}, {dt:.1f}s")
    assert failures == 0 and worst_parseval <= 1e-6 and dt < 60


# -- A3 --------------------------------------------------------------------------

def test_a3_turbo_slepian_wolf(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    n_blocks = 100
    lines, ok = [], True
    for p in (0.01, 0.05, 0.1):
        x = rng.integers(0, 2, n_blocks * 1024, dtype=np.uint8)
        si = x ^ (rng.random(x.size) < p).astype(np.uint8)
        res = decode_with_feedback(si, ParityServer(turbo_encode(x)), p)
        blocks_ok = res.block_verified
        exact = all(np.array_equal(res.bits[b * 1024:(b + 1) * 1024], x[b * 1024:(b + 1) * 1024])
                    for b in np.flatnonzero(blocks_ok))
        h = binary_entropy(p)
        in_band = h <= res.rate <= h + 0.35
        ok &= bool(exact and in_band)
        lines.append(f"p={p}: rate {res.rate:.3f} (h2 {h:.3f}), "
                     f"{int(blocks_ok.sum())}/{n_blocks} verified, exact={exact}")
    dt = time.perf_counter() - t0
    ok &= dt < 300
    verdict("A3", ok, "; ".join(lines) + f"; {dt:.1f}s")
    assert ok


# -- corpus experiments ----------------------------------------------------------

@pytest.fixture(scope="module")
def corpus():
    return motion_corpus(2 * WZ_FRAMES + 1, 2024)


@pytest.fixture(scope="module")
def si_cache_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("si_cache")


@pytest.fixture(scope="module")
def table(corpus, si_cache_dir, verdict):
    rows, text = table1_report(corpus, frames=WZ_FRAMES, cache=motion.SiCache(si_cache_dir))
    for line in text.splitlines():
        verdict("table", None, line)
    return {r.metric: r for r in rows}


@pytest.fixture(scope="module")
def rd(corpus, si_cache_dir, tmp_path_factory, verdict):
    out = tmp_path_factory.mktemp("rd")
    cfg = PipelineConfig(frames=WZ_FRAMES, si_cache=str(si_cache_dir), output_dir=str(out))
    pts = rd_sweep(cfg, knobs=list(range(1, 9)), metric_list=["SAD", "SSIM"], seq=corpus)
    for line in (out / "rd_sweep.csv").read_text().splitlines():
        verdict("rd", None, line)
    return pts


def _soft_band(tag, values, ref, tol, verdict):
    off = {m: round(values[m] - ref[m], 3) for m in ref if abs(values[m] - ref[m]) > tol}
    if off:
        warnings.warn(f"{tag}: outside the +-{tol} reference band: {off}")
    verdict(f"{tag}-band", None, "all within band" if not off else f"outside band {off}")


@pytest.mark.slow
def test_a4_conditional_entropy_order(table, verdict):
    h = {m: r.h_cond for m, r in table.items()}
    ok = h["VIF"] < h["CW-SSIM"] < h["SSIM"] < min(h["MSE"], h["SAD"])
    verdict("A4", ok, "H(Fe|Fo) " + ", ".join(f"{m} {v:.4f}" for m, v in h.items())
            + " (need VIF < CW-SSIM < SSIM < min(MSE, SAD))")
    _soft_band("A4", h, REF_H, 0.08, verdict)
    assert ok


@pytest.mark.slow
def test_a5_si_quality_order(table, verdict):
    s = {m: r.ssim for m, r in table.items()}
    perceptual = min(s["VIF"], s["CW-SSIM"], s["SSIM"])
    pixel = max(s["MSE"], s["SAD"])
    ok = perceptual > pixel
    within = s["VIF"] > s["CW-SSIM"] > s["SSIM"]
    verdict("A5", ok, "SSIM of SI " + ", ".join(f"{m} {v:.4f}" for m, v in s.items())
            + f" (min perceptual {perceptual:.4f} vs max pixel {pixel:.4f}; "
              f"VIF > CW-SSIM > SSIM: {within})")
    _soft_band("A5", s, REF_SSIM, 0.15, verdict)
    assert ok


@pytest.mark.slow
def test_a6_bitplane_errors(table, verdict):
    err = {m: r.avg_plane_err for m, r in table.items()}
    monotone = {m: bool(np.all(np.diff(r.msb4) >= 0)) for m, r in table.items()}
    ok = err["VIF"] <= 0.32 and err["SAD"] >= 0.33 and all(monotone.values())
    verdict("A6", ok, f"mean plane error VIF {err['VIF']:.4f} (<= 0.32), SAD {err['SAD']:.4f} "
                      f"(>= 0.33); MSB1-4 "
            + "; ".join(f"{m} {np.round(r.msb4, 3).tolist()}" for m, r in table.items())
            + f"; monotone {monotone}")
    assert ok


@pytest.mark.slow
def test_a7_rd_gap(rd, verdict):
    rates, gaps = matched_rate_gap(rd["SSIM"], rd["SAD"], n=5)
    wins = int(np.sum(gaps >= 0.3))
    ok = wins >= 3
    verdict("A7", ok, "SSIM minus SAD PSNR at matched rates "
            + ", ".join(f"{r:.0f}b: {g:+.3f} dB" for r, g in zip(rates, gaps))
            + f" ({wins} of {len(gaps)} >= 0.3 dB, need 3)")
    assert ok


@pytest.mark.slow
def test_a9_complexity_order(table, verdict):
    t = {m: r.time_sec for m, r in table.items()}
    fast = max(t["SAD"], t["MSE"])
    similar = max(t["SAD"], t["MSE"]) <= 2 * min(t["SAD"], t["MSE"])
    ok = similar and fast < t["SSIM"] < t["CW-SSIM"] < t["VIF"]
    verdict("A9", ok, "wall time " + ", ".join(f"{m} {v:.1f}s" for m, v in t.items())
            + " (need SAD ~ MSE within 2x < SSIM < CW-SSIM < VIF)")
    assert ok


# -- A8 --------------------------------------------------------------------------

A8_RUNS = {
    "table1": ["--metrics", "SAD,SSIM", "--no-timing"],
    "si-only": ["--metric", "SSIM"],
    "rd-sweep": ["--metrics", "SAD", "--knobs", "2,4"],
    "encode": [],
}


def _snapshot(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def test_a8_determinism(tmp_path, verdict):
    from wzdvc.cli import main
    base = ["--frames", "2", "--search-range", "8"]
    diffs, files = [], 0
    for cmd, extra in [*A8_RUNS.items(), ("decode", None)]:
        out = tmp_path / cmd
        if cmd == "decode":
            extra = ["--bitstream", str(tmp_path / "encode" / "encoded.wzb")]
        snaps = []
        for _ in range(2):
            assert main([cmd, *base, *extra, "-o", str(out)]) == 0
            snaps.append(_snapshot(out))
        files += len(snaps[0])
        diffs += [f"{cmd}/{k}" for k in snaps[0] if snaps[0][k] != snaps[1].get(k)]
    ok = not diffs
    verdict("A8", ok, f"{files} output files over 5 subcommands x 2 runs, differing: {diffs}")
    assert ok
