"""Block and frame similarity criteria used for motion search and SI reports.

All array kernels accept leading batch axes, so the motion search can score a
reference block against every candidate block in a single call. The public
scalar functions (:func:`sad`, :func:`ssim`, ...) take two equally shaped 2-D
regions and return a float.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .pyramid import decompose


class Polarity(enum.Enum):
    DISTANCE = "distance"      # lower is better
    SIMILARITY = "similarity"  # higher is better

    def best(self, scores):
        """Index of the first optimal entry of ``scores``."""
        return int(np.argmin(scores) if self is Polarity.DISTANCE else np.argmax(scores))

    def better(self, a, b):
        return a < b if self is Polarity.DISTANCE else a > b

    def flipped(self):
        return Polarity.SIMILARITY if self is Polarity.DISTANCE else Polarity.DISTANCE


class MetricKind(enum.Enum):
    SAD = "SAD"
    MSE = "MSE"
    SSIM = "SSIM"
    CWSSIM = "CW-SSIM"
    VIF = "VIF"

    @property
    def polarity(self) -> Polarity:
        if self in (MetricKind.SAD, MetricKind.MSE):
            return Polarity.DISTANCE
        return Polarity.SIMILARITY

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        key = str(name).upper().replace("_", "-")
        for m in cls:
            if key in (m.value, m.name):
                return m
        raise ValueError(f"unknown metric {name!r}; choose from {[m.value for m in cls]}")


@dataclass(frozen=True)
class SsimParams:
    c1: float = (0.01 * 255) ** 2
    c2: float = (0.03 * 255) ** 2
    c3: float = (0.03 * 255) ** 2 / 2
    window: int = 8

    def __post_init__(self):
        if min(self.c1, self.c2, self.c3) <= 0:
            raise ValueError("SSIM constants must be positive")
        if self.window < 4:
            raise ValueError("SSIM window must be at least 4")


@dataclass(frozen=True)
class CwSsimParams:
    k: float = 0.03
    levels: int = 3
    orientations: int = 6
    patch: int = 7

    def __post_init__(self):
        if self.k <= 0:
            raise ValueError("K must be positive")
        if self.levels < 2 or self.orientations < 4:
            raise ValueError("need at least 2 levels and 4 orientations")


@dataclass(frozen=True)
class VifParams:
    sigma_n2: float = 0.1
    patch: int = 9  # coefficients per patch, a square neighbourhood
    levels: int = 3
    orientations: int = 6

    def __post_init__(self):
        if self.sigma_n2 <= 0:
            raise ValueError("sigma_n2 must be positive")
        side = math.isqrt(self.patch)
        if self.patch < 4 or side * side != self.patch:
            raise ValueError("VIF patch length must be a square >= 4")

    @property
    def side(self):
        return math.isqrt(self.patch)


@dataclass(frozen=True)
class MetricParams:
    """Bundle of per-metric parameters, as read from a pipeline config."""

    ssim: SsimParams = field(default_factory=SsimParams)
    cwssim: CwSsimParams = field(default_factory=CwSsimParams)
    vif: VifParams = field(default_factory=VifParams)

    @classmethod
    def from_dict(cls, d):
        d = d or {}
        return cls(SsimParams(**d.get("ssim", {})),
                   CwSsimParams(**d.get("cwssim", {})),
                   VifParams(**d.get("vif", {})))


def _check_pair(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    return x, y


def window_sums(a, win):
    """Sums of ``a`` over every ``win x win`` window of the last two axes."""
    c = np.cumsum(a, axis=-1)
    c = np.concatenate([c[..., win - 1:win], c[..., win:] - c[..., :-win]], axis=-1)
    c = np.cumsum(c, axis=-2)
    return np.concatenate([c[..., win - 1:win, :], c[..., win:, :] - c[..., :-win, :]], axis=-2)


# -- distances ---------------------------------------------------------------

def sad_batch(x, y):
    return np.abs(x - y).sum(axis=(-2, -1))


def mse_batch(x, y):
    d = x - y
    return (d * d).mean(axis=(-2, -1))


def sad(x, y) -> float:
    """Sum of absolute differences."""
    x, y = _check_pair(x, y)
    return float(sad_batch(x, y))


def mse(x, y) -> float:
    x, y = _check_pair(x, y)
    return float(mse_batch(x, y))


def psnr(mse_value) -> float:
    """PSNR in dB for 8-bit signals; ``inf`` marks a lossless match."""
    if mse_value < 0:
        raise ValueError(f"MSE must be nonnegative, got {mse_value}")
    if mse_value == 0:
        return math.inf
    return 10 * math.log10(255.0 ** 2 / mse_value)


# -- SSIM --------------------------------------------------------------------

def ssim_map(x, y, params=SsimParams()):
    """Local SSIM for every ``window x window`` placement (step 1).

    Uses the three-factor form: luminance, contrast and structure, with
    sample (n-1) variances and covariance.
    """
    win = params.window
    if x.shape[-1] < win or x.shape[-2] < win:
        raise ValueError(f"region {x.shape[-2:]} smaller than SSIM window {win}")
    # centring keeps the running sums small; variances are shift invariant
    x = x - 128.0
    y = y - 128.0
    n = win * win
    sx, sy = window_sums(x, win), window_sums(y, win)
    sxx, syy, sxy = window_sums(x * x, win), window_sums(y * y, win), window_sums(x * y, win)
    mx, my = sx / n, sy / n
    vx = np.maximum((sxx - sx * mx) / (n - 1), 0.0)
    vy = np.maximum((syy - sy * my) / (n - 1), 0.0)
    cxy = (sxy - sx * my) / (n - 1)
    mx = mx + 128.0
    my = my + 128.0
    c1, c2, c3 = params.c1, params.c2, params.c3
    sdx, sdy = np.sqrt(vx), np.sqrt(vy)
    lum = (2 * mx * my + c1) / (mx * mx + my * my + c1)
    con = (2 * sdx * sdy + c2) / (vx + vy + c2)
    struct = (cxy + c3) / (sdx * sdy + c3)
    return lum * con * struct


def ssim_batch(x, y, params=SsimParams()):
    return ssim_map(x, y, params).mean(axis=(-2, -1))


def ssim(x, y, params=SsimParams()) -> float:
    """Mean SSIM over all window placements; exactly 1 for ``x == y``."""
    x, y = _check_pair(x, y)
    if min(x.shape) < params.window:
        raise ValueError(f"region {x.shape} smaller than SSIM window {params.window}")
    if np.array_equal(x, y):
        return 1.0
    return float(ssim_batch(x, y, params))


# -- CW-SSIM -----------------------------------------------------------------

def cw_ssim_from_coeffs(cx, cy, params=CwSsimParams(), x_energy=None):
    """CW-SSIM from complex subbands ``(..., S, H, W)``, averaged per subband.

    ``x_energy`` optionally supplies the precomputed windowed ``|cx|**2`` sums.
    """
    p, k = params.patch, params.k
    ax, ay = np.abs(cx), np.abs(cy)
    if x_energy is None:
        x_energy = window_sums(ax * ax, p)
    cross = window_sums(ax * ay, p)
    energy = x_energy + window_sums(ay * ay, p)
    corr_sum = np.abs(window_sums(cx * np.conj(cy), p))
    magnitude = (2 * cross + k) / (energy + k)
    phase = (2 * corr_sum + k) / (2 * cross + k)
    per_band = (magnitude * phase).mean(axis=(-2, -1))
    return per_band.mean(axis=-1)


def _check_cw_size(shape, params):
    side = min(shape[-2:])
    if side < 2 ** params.levels or side < params.patch:
        raise ValueError(
            f"region {shape[-2:]} too small for {params.levels} levels "
            f"and {params.patch}x{params.patch} patches")


def cw_ssim(x, y, params=CwSsimParams()) -> float:
    """Complex-wavelet SSIM; insensitive to small translations."""
    x, y = _check_pair(x, y)
    _check_cw_size(x.shape, params)
    cx = decompose(x, params.levels, params.orientations)
    cy = decompose(y, params.levels, params.orientations)
    return float(cw_ssim_from_coeffs(cx, cy, params))


# -- VIF ---------------------------------------------------------------------

def patch_sums(a, side, step=1):
    """Sums over ``side x side`` neighbourhoods whose members lie ``step`` apart."""
    h, w = a.shape[-2:]
    span = (side - 1) * step
    out = 0.0
    for i in range(side):
        for j in range(side):
            out = out + a[..., i * step:h - span + i * step, j * step:w - span + j * step]
    return out


def _vif_levels(params):
    """``(subband slice, patch step)`` per pyramid level.

    Subbands are undecimated, so a patch at level ``j`` takes every ``2**j``-th
    coefficient: the spacing a critically sampled pyramid would have. Adjacent
    undecimated coefficients are too correlated for a 9-sample regression.
    """
    k = params.orientations
    return [(slice(j * k, (j + 1) * k), 2 ** j) for j in range(params.levels)]


def _check_vif_size(shape, params):
    need = (params.side - 1) * 2 ** (params.levels - 1) + 1
    if min(shape[-2:]) < max(need, 2 ** params.levels):
        raise ValueError(f"region {shape[-2:]} too small for VIF with {params.levels} levels")


def _patch_spectrum(c, side, step=1):
    """Eigenvalues of the normalised patch covariance of each subband.

    ``c`` is ``(S, H, W)``; returns ``(S, side*side)`` eigenvalues scaled to
    mean one, so that ``z`` (mean squared coefficient) stays the GSM scale.
    A silent subband gets all-zero eigenvalues.
    """
    m = side * side
    h, w = c.shape[-2:]
    span = (side - 1) * step
    patches = np.stack([c[:, i * step:h - span + i * step, j * step:w - span + j * step]
                        for i in range(side) for j in range(side)], axis=-1)
    patches = patches.reshape(c.shape[0], -1, m)
    cov = np.einsum("spi,spj->sij", patches, patches) / patches.shape[1]
    lam = np.clip(np.linalg.eigvalsh(cov), 0.0, None)
    tr = lam.sum(axis=-1, keepdims=True)
    return np.divide(lam * m, tr, out=np.zeros_like(lam), where=tr > 0)


def _info(snr, lam):
    """``1/2 sum_k log2(1 + snr * lam_k)`` summed over subbands and patches."""
    total = 0.0
    for k in range(lam.shape[-1]):
        total = total + np.log2(1 + snr * lam[:, k, None, None]).sum(axis=(-3, -2, -1))
    return 0.5 * total


def _vif_reference_stats(c, params):
    """Per level ``(sc, scc, z, lam)`` of the reference subbands, plus the denominator."""
    stats, den = [], 0.0
    for band, step in _vif_levels(params):
        cl = c[..., band, :, :]
        sc = patch_sums(cl, params.side, step)
        scc = patch_sums(cl * cl, params.side, step)
        z = scc / params.patch
        lam = _patch_spectrum(cl, params.side, step)
        den = den + _info(z / params.sigma_n2, lam)
        stats.append((sc, scc, z, lam))
    return stats, den


def _gain_fit(sc, scc, sd, scd, sdd, n):
    """Per-patch linear regression of distorted onto reference coefficients.

    Takes raw patch sums; the gain uses mean-removed (co)variances and the
    residual variance is what the gain leaves unexplained. Silent reference
    patches and negative gains carry no information: the gain is zero and
    all distorted variance counts as noise.
    """
    vcc = np.maximum(scc - sc * sc / n, 0.0)
    vcd = scd - sc * sd / n
    vdd = np.maximum(sdd - sd * sd / n, 0.0)
    g = np.divide(vcd, vcc, out=np.zeros(np.broadcast_shapes(vcd.shape, vcc.shape)),
                  where=vcc > 0)
    sv2 = np.maximum((vdd - g * vcd) / n, 0.0)
    neg = g < 0
    return np.where(neg, 0.0, g), np.where(neg, vdd / n, sv2)


def _vif_numerator(c, d, stats, params):
    num = 0.0
    side = params.side
    for (band, step), (sc, scc, z, lam) in zip(_vif_levels(params), stats):
        cl, dl = c[..., band, :, :], d[..., band, :, :]
        g, sv2 = _gain_fit(sc, scc, patch_sums(dl, side, step), patch_sums(cl * dl, side, step),
                           patch_sums(dl * dl, side, step), params.patch)
        num = num + _info(g * g * z / (sv2 + params.sigma_n2), lam)
    return num


def _vif_subbands(x, params):
    return decompose(x, params.levels, params.orientations).real


def vif(reference, distorted, params=VifParams(), full=False):
    """Visual information fidelity of ``distorted`` against ``reference``.

    Coefficients are the real parts of the steerable subbands; every
    ``side x side`` neighbourhood (spaced by the level's sampling step) is
    one GSM patch ``c = sqrt(z) u``. The covariance of ``u`` is estimated
    per subband from the reference. A blank reference carries no
    information: the score is then defined as 1.0 and, with ``full=True``,
    the returned flag is set.
    """
    c, d = _check_pair(reference, distorted)
    _check_vif_size(c.shape, params)
    c, d = _vif_subbands(c, params), _vif_subbands(d, params)
    stats, den = _vif_reference_stats(c, params)
    degenerate = not den > 0
    score = 1.0 if degenerate else float(_vif_numerator(c, d, stats, params) / den)
    return (score, degenerate) if full else score


@dataclass(frozen=True)
class GsmFit:
    """Per-patch model fit, one ``(orientations, h, w)`` array per pyramid level."""

    g: tuple
    sigma_v2: tuple
    z: tuple


def gsm_fit(reference, distorted, params=VifParams()) -> GsmFit:
    c, d = _check_pair(reference, distorted)
    _check_vif_size(c.shape, params)
    c, d = _vif_subbands(c, params), _vif_subbands(d, params)
    gs, vs, zs = [], [], []
    for band, step in _vif_levels(params):
        cl, dl = c[band], d[band]
        side = params.side
        scc = patch_sums(cl * cl, side, step)
        g, sv2 = _gain_fit(patch_sums(cl, side, step), scc, patch_sums(dl, side, step),
                           patch_sums(cl * dl, side, step), patch_sums(dl * dl, side, step),
                           params.patch)
        gs.append(g)
        vs.append(sv2)
        zs.append(scc / params.patch)
    return GsmFit(tuple(gs), tuple(vs), tuple(zs))


# -- dispatch ----------------------------------------------------------------

@dataclass(frozen=True)
class Metric:
    """A block criterion: a name, a polarity and a scorer factory.

    ``make_scorer(ref_block, params)`` returns a function mapping a stack of
    candidate blocks ``(K, N, N)`` to ``K`` scores against ``ref_block``.
    """

    name: str
    polarity: Polarity
    make_scorer: Callable


def _sad_scorer(ref, params):
    ref = ref.astype(float)
    return lambda cands: sad_batch(ref, cands)


def _mse_scorer(ref, params):
    ref = ref.astype(float)
    return lambda cands: mse_batch(ref, cands)


def _ssim_scorer(ref, params):
    ref = ref.astype(float)
    return lambda cands: ssim_batch(ref, cands, params.ssim)


def _cwssim_scorer(ref, params):
    p = params.cwssim
    _check_cw_size(ref.shape, p)
    cref = decompose(ref, p.levels, p.orientations)
    ax = np.abs(cref)
    x_energy = window_sums(ax * ax, p.patch)

    def score(cands):
        return cw_ssim_from_coeffs(cref, decompose(cands, p.levels, p.orientations), p, x_energy)
    return score


def _vif_scorer(ref, params):
    p = params.vif
    _check_vif_size(ref.shape, p)
    c = _vif_subbands(ref, p)
    stats, den = _vif_reference_stats(c, p)

    def score(cands):
        if not den > 0:
            return np.ones(len(cands))
        return _vif_numerator(c, _vif_subbands(cands, p), stats, p) / den
    return score


BUILTIN = {
    MetricKind.SAD: Metric("SAD", Polarity.DISTANCE, _sad_scorer),
    MetricKind.MSE: Metric("MSE", Polarity.DISTANCE, _mse_scorer),
    MetricKind.SSIM: Metric("SSIM", Polarity.SIMILARITY, _ssim_scorer),
    MetricKind.CWSSIM: Metric("CW-SSIM", Polarity.SIMILARITY, _cwssim_scorer),
    MetricKind.VIF: Metric("VIF", Polarity.SIMILARITY, _vif_scorer),
}


def as_metric(metric) -> Metric:
    if isinstance(metric, Metric):
        return metric
    return BUILTIN[MetricKind.parse(metric)]


def evaluate(metric, x, y, params=None):
    """Score ``(x, y)`` with ``metric`` and return ``(score, polarity)``."""
    kind = MetricKind.parse(metric)
    params = params or MetricParams()
    if kind is MetricKind.SAD:
        s = sad(x, y)
    elif kind is MetricKind.MSE:
        s = mse(x, y)
    elif kind is MetricKind.SSIM:
        s = ssim(x, y, params.ssim)
    elif kind is MetricKind.CWSSIM:
        s = cw_ssim(x, y, params.cwssim)
    else:
        s = vif(x, y, params.vif)
    return s, kind.polarity
