"""Rate-adaptive Slepian-Wolf coding of bitplanes with a punctured turbo code.

Two identical rate-1 recursive systematic convolutional encoders (memory 3,
feedback ``1 + D^2 + D^3``, parity ``1 + D + D^2 + D^3``) run on each
1024-bit block and on its interleaved copy. Only parity leaves the encoder;
the decoder substitutes side-information bits for the systematic stream and
asks for more parity, one punctured chunk at a time, until a per-block
CRC-16 and the received parity both check.
"""

from __future__ import annotations

import binascii
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

BLOCK_BITS = 1024
INTERLEAVER_SEED = 0x5EED_0D15_C0DE_C0DE
CRC_BITS = 16
PARITY_LLR = 30.0   # received parity is error free
PAD_LLR = 30.0      # zero padding is known to both ends
LLR_CLIP = 60.0
P_MIN, P_MAX = 1e-3, 0.499


@dataclass(frozen=True)
class RscConfig:
    """Constituent code polynomials, coefficients of ``D^0 .. D^3``.

    The code is the (13, 17) octal pair in feedback form: ``g1`` doubles as the
    feedback polynomial, so the ``g1`` branch is the systematic output and
    parity is ``g2 / feedback``.
    """

    g1: tuple = (1, 0, 1, 1)
    g2: tuple = (1, 1, 1, 1)
    feedback: tuple = (1, 0, 1, 1)

    def __post_init__(self):
        if len(self.feedback) != 4 or self.feedback[0] != 1:
            raise ValueError("feedback polynomial must be monic with memory 3")
        if tuple(self.g1) != tuple(self.feedback):
            raise ValueError("systematic form needs g1 equal to the feedback polynomial")

    @property
    def memory(self):
        return len(self.feedback) - 1

    @property
    def states(self):
        return 1 << self.memory

    def trellis(self):
        """``(next_state, parity)`` tables indexed ``[state, input]``.

        State bits hold the last three register values, newest in the MSB.
        """
        m = self.memory
        nxt = np.zeros((self.states, 2), np.int64)
        par = np.zeros((self.states, 2), np.int64)
        for s in range(self.states):
            reg = [(s >> (m - 1 - i)) & 1 for i in range(m)]  # a[t-1], a[t-2], a[t-3]
            for u in (0, 1):
                a = u
                for i in range(m):
                    a ^= self.feedback[i + 1] & reg[i]
                p = self.g2[0] & a
                for i in range(m):
                    p ^= self.g2[i + 1] & reg[i]
                new = [a] + reg[:-1]
                nxt[s, u] = sum(b << (m - 1 - i) for i, b in enumerate(new))
                par[s, u] = p
        return nxt, par


def interleaver(size=BLOCK_BITS, seed=INTERLEAVER_SEED):
    """Fixed pseudo-random permutation: position ``i`` of the interleaved block is ``x[perm[i]]``."""
    return np.random.default_rng(seed).permutation(size)


# -- puncturing --------------------------------------------------------------

def _bit_reversed(n):
    bits = max(1, (n - 1).bit_length())
    return sorted(range(n), key=lambda i: int(format(i, f"0{bits}b")[::-1], 2))


@dataclass(frozen=True)
class PunctureSchedule:
    """Incremental release of parity, ``1/period`` of all parity per request.

    Request ``k`` releases positions ``t % period == phase[k]`` of parity
    stream 0 and ``t % period == phase[k] + period/2`` (mod ``period``) of
    stream 1, where ``phase`` is the bit-reversed order of ``range(period)``.
    Both constituent decoders thus get fresh, evenly spread parity with
    every request, and ``period`` requests release everything exactly once.
    """

    period: int = 8
    block_bits: int = BLOCK_BITS

    def __post_init__(self):
        if self.period < 2 or self.period % 2:
            raise ValueError("puncturing period must be an even number >= 2")

    def chunk(self, k):
        """``(positions_stream0, positions_stream1)`` released by request ``k``."""
        if not 0 <= k < self.period:
            raise ValueError(f"request {k} outside schedule of {self.period}")
        phase = _bit_reversed(self.period)[k]
        other = (phase + self.period // 2) % self.period
        return (np.arange(phase, self.block_bits, self.period),
                np.arange(other, self.block_bits, self.period))

    def chunk_bits(self, k):
        return sum(len(p) for p in self.chunk(k))

    def masks(self, n_requests):
        """Boolean ``(2, block_bits)`` mask of parity released after ``n_requests``."""
        m = np.zeros((2, self.block_bits), bool)
        for k in range(n_requests):
            for s, pos in enumerate(self.chunk(k)):
                m[s, pos] = True
        return m


# -- CRC ---------------------------------------------------------------------

def crc16(bits):
    """CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF) of a bit array, MSB-first bytes."""
    return binascii.crc_hqx(np.packbits(np.asarray(bits, np.uint8)).tobytes(), 0xFFFF)


@njit(cache=True)
def _crc16_bits(bits):
    crc = 0xFFFF
    for b in bits:
        fb = ((crc >> 15) & 1) ^ b
        crc = (crc << 1) & 0xFFFF
        if fb:
            crc ^= 0x1021
    return crc


# -- encoder -----------------------------------------------------------------

@njit(cache=True)
def _rsc_encode(bits, nxt, par):
    out = np.empty(bits.shape, np.uint8)
    for b in range(bits.shape[0]):
        s = 0
        for t in range(bits.shape[1]):
            u = bits[b, t]
            out[b, t] = par[s, u]
            s = nxt[s, u]
    return out


def rsc_parity(bits, config=RscConfig()):
    """Parity of a zero-started, unterminated constituent encoder, per row."""
    nxt, par = config.trellis()
    bits = np.atleast_2d(np.asarray(bits, np.uint8))
    return _rsc_encode(bits, nxt, par)


def segment(bits, block_bits=BLOCK_BITS):
    """Split a flat bit array into zero-padded blocks; returns ``(blocks, n_valid)``."""
    bits = np.asarray(bits, np.uint8).ravel()
    n_blocks = max(1, -(-bits.size // block_bits))
    out = np.zeros((n_blocks, block_bits), np.uint8)
    out.ravel()[: bits.size] = bits
    valid = np.full(n_blocks, block_bits)
    valid[-1] = bits.size - (n_blocks - 1) * block_bits
    return out, valid


@dataclass(frozen=True)
class TurboBlock:
    parity: np.ndarray   # (2, block_bits)
    crc: int
    n_valid: int


def turbo_encode(bits, config=RscConfig(), perm=None) -> list:
    """Encode one serialised bitplane into parity-only turbo blocks.

    The plane is cut into 1024-bit blocks (tail zero-padded); each block is
    fed to the first encoder and, interleaved, to the second. Systematic
    bits are not part of the output.
    """
    blocks, valid = segment(bits)
    perm = interleaver() if perm is None else perm
    p1 = rsc_parity(blocks, config)
    p2 = rsc_parity(blocks[:, perm], config)
    return [TurboBlock(np.stack([p1[i], p2[i]]), crc16(blocks[i]), int(valid[i]))
            for i in range(len(blocks))]


# -- decoder -----------------------------------------------------------------

@njit(cache=True)
def _maxstar(a, b):
    if a == -np.inf:
        return b
    if b == -np.inf:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


@njit(cache=True)
def _siso(lsys, lapr, lpar, nxt, par, alpha, beta, out):
    """Log-MAP decoder for one constituent code; writes extrinsic LLRs to ``out``."""
    n = lsys.shape[0]
    ns = nxt.shape[0]
    for s in range(ns):
        alpha[0, s] = -np.inf
        beta[n, s] = 0.0
    alpha[0, 0] = 0.0
    for t in range(n):
        ls = 0.5 * (lsys[t] + lapr[t])
        lp = 0.5 * lpar[t]
        for s in range(ns):
            alpha[t + 1, s] = -np.inf
        for s in range(ns):
            a = alpha[t, s]
            if a == -np.inf:
                continue
            for u in range(2):
                g = (ls if u == 0 else -ls) + (lp if par[s, u] == 0 else -lp)
                s2 = nxt[s, u]
                alpha[t + 1, s2] = _maxstar(alpha[t + 1, s2], a + g)
        m = -np.inf
        for s in range(ns):
            if alpha[t + 1, s] > m:
                m = alpha[t + 1, s]
        for s in range(ns):
            alpha[t + 1, s] -= m
    for t in range(n - 1, -1, -1):
        ls = 0.5 * (lsys[t] + lapr[t])
        lp = 0.5 * lpar[t]
        m = -np.inf
        for s in range(ns):
            acc = -np.inf
            for u in range(2):
                g = (ls if u == 0 else -ls) + (lp if par[s, u] == 0 else -lp)
                acc = _maxstar(acc, g + beta[t + 1, nxt[s, u]])
            beta[t, s] = acc
            if acc > m:
                m = acc
        for s in range(ns):
            beta[t, s] -= m
        l0 = -np.inf
        l1 = -np.inf
        for s in range(ns):
            a = alpha[t, s]
            if a == -np.inf:
                continue
            for u in range(2):
                g = (ls if u == 0 else -ls) + (lp if par[s, u] == 0 else -lp)
                v = a + g + beta[t + 1, nxt[s, u]]
                if u == 0:
                    l0 = _maxstar(l0, v)
                else:
                    l1 = _maxstar(l1, v)
        e = l0 - l1 - lsys[t] - lapr[t]
        if e > LLR_CLIP:
            e = LLR_CLIP
        elif e < -LLR_CLIP:
            e = -LLR_CLIP
        out[t] = e


@njit(cache=True)
def _parity_consistent(bits, rx, mask, nxt, par):
    s = 0
    for t in range(bits.shape[0]):
        u = bits[t]
        if mask[t] and par[s, u] != rx[t]:
            return False
        s = nxt[s, u]
    return True


@njit(cache=True)
def _turbo_decode_blocks(lsys, parity, masks, crcs, perm, nxt, par, max_iter, bits_out, ok_out, iters_out):
    nb, n = lsys.shape
    alpha = np.empty((n + 1, nxt.shape[0]))
    beta = np.empty((n + 1, nxt.shape[0]))
    lsys_i = np.empty(n)
    lpar1 = np.empty(n)
    lpar2 = np.empty(n)
    la1 = np.empty(n)
    la2 = np.empty(n)
    le1 = np.empty(n)
    le2 = np.empty(n)
    hard = np.empty(n, np.uint8)
    hard_i = np.empty(n, np.uint8)
    for b in range(nb):
        for t in range(n):
            lsys_i[t] = lsys[b, perm[t]]
            lpar1[t] = (PARITY_LLR if parity[b, 0, t] == 0 else -PARITY_LLR) if masks[b, 0, t] else 0.0
            lpar2[t] = (PARITY_LLR if parity[b, 1, t] == 0 else -PARITY_LLR) if masks[b, 1, t] else 0.0
            la1[t] = 0.0
        ok = False
        it = 0
        while it < max_iter and not ok:
            it += 1
            _siso(lsys[b], la1, lpar1, nxt, par, alpha, beta, le1)
            for t in range(n):
                la2[t] = le1[perm[t]]
            _siso(lsys_i, la2, lpar2, nxt, par, alpha, beta, le2)
            for t in range(n):
                la1[perm[t]] = le2[t]
            for t in range(n):
                hard[t] = 1 if lsys[b, t] + la1[t] + le1[t] < 0 else 0
            if _crc16_bits(hard) == crcs[b] and _parity_consistent(hard, parity[b, 0], masks[b, 0], nxt, par):
                for t in range(n):
                    hard_i[t] = hard[perm[t]]
                ok = _parity_consistent(hard_i, parity[b, 1], masks[b, 1], nxt, par)
        bits_out[b] = hard
        ok_out[b] = ok
        iters_out[b] = it


def channel_llr(si_bits, p_hat):
    """LLR ``log P(x=0)/P(x=1)`` of each bit given its SI bit and crossover ``p_hat``."""
    p = np.clip(np.asarray(p_hat, float), P_MIN, P_MAX)
    mag = np.log((1 - p) / p)
    return np.where(np.asarray(si_bits) == 0, mag, -mag)


class ParityServer:
    """Encoder side of the feedback channel: releases buffered parity chunks.

    ``log`` records every request as ``(block, request_index, n_bits)``.
    """

    def __init__(self, blocks, schedule=PunctureSchedule()):
        self.blocks = list(blocks)
        self.schedule = schedule
        self.log = []

    def crc(self, b):
        return self.blocks[b].crc

    def release(self, b, k):
        """Parity chunk ``k`` of block ``b`` as a ``(2, block_bits/period)`` array."""
        chunk = np.stack([self.blocks[b].parity[s, pos]
                          for s, pos in enumerate(self.schedule.chunk(k))])
        self.log.append((b, k, chunk.size))
        return chunk


@dataclass
class DecodeResult:
    bits: np.ndarray          # recovered plane (padding stripped)
    verified: bool
    block_verified: np.ndarray
    requests: np.ndarray      # chunks consumed per block
    parity_bits: int
    crc_bits: int
    iterations: np.ndarray = field(default=None)

    @property
    def rate_bits(self):
        return self.parity_bits + self.crc_bits

    @property
    def rate(self):
        """Bits spent per source bit."""
        return self.rate_bits / max(1, self.bits.size)


def decode_with_feedback(si_bits, server: ParityServer, p_hat, max_iter=15,
                         max_requests=None, config=RscConfig(), perm=None,
                         first_request=1) -> DecodeResult:
    """Turbo-decode one serialised plane, requesting parity until it verifies.

    ``p_hat`` may be a scalar or a per-bit array. Each round sends one more
    chunk to every block that has not yet verified; a block fails for good
    once ``max_requests`` chunks are spent, and its best-effort bits are
    returned with ``verified=False``.
    """
    si_bits = np.asarray(si_bits, np.uint8).ravel()
    n_src = si_bits.size
    sched = server.schedule
    max_requests = sched.period if max_requests is None else min(max_requests, sched.period)
    perm = interleaver(sched.block_bits) if perm is None else perm
    nxt, par = config.trellis()

    si_blocks, valid = segment(si_bits, sched.block_bits)
    llr = np.zeros(si_blocks.shape)
    pflat = np.broadcast_to(np.asarray(p_hat, float), (n_src,))
    llr.ravel()[:n_src] = channel_llr(si_bits, pflat)
    llr.ravel()[n_src:] = PAD_LLR

    nb = len(si_blocks)
    if len(server.blocks) != nb:
        raise ValueError(f"parity holds {len(server.blocks)} blocks, SI plane needs {nb}")
    crcs = np.array([server.crc(b) for b in range(nb)], np.int64)
    rx = np.zeros((nb, 2, sched.block_bits), np.uint8)
    masks = np.zeros((nb, 2, sched.block_bits), np.bool_)
    requests = np.zeros(nb, int)
    done = np.zeros(nb, bool)
    bits = si_blocks.copy()
    iters = np.zeros(nb, np.int64)

    def _request(b):
        chunk = server.release(b, requests[b])
        for s, pos in enumerate(sched.chunk(requests[b])):
            rx[b, s, pos] = chunk[s]
            masks[b, s, pos] = True
        requests[b] += 1

    for b in range(nb):
        for _ in range(first_request):
            _request(b)
    while True:
        todo = np.flatnonzero(~done)
        if todo.size == 0:
            break
        out = np.empty((todo.size, sched.block_bits), np.uint8)
        ok = np.zeros(todo.size, np.bool_)
        it = np.zeros(todo.size, np.int64)
        _turbo_decode_blocks(llr[todo], rx[todo], masks[todo], crcs[todo], perm, nxt, par,
                             max_iter, out, ok, it)
        bits[todo] = out
        iters[todo] += it
        done[todo[ok]] = True
        exhausted = False
        for b in todo[~ok]:
            if requests[b] < max_requests:
                _request(b)
            else:
                done[b] = True
                exhausted = True
        if exhausted and np.all(done):
            break

    verified_blocks = np.array([
        _crc16_bits(bits[b]) == crcs[b]
        and _parity_consistent(bits[b], rx[b, 0], masks[b, 0], nxt, par)
        and _parity_consistent(bits[b][perm], rx[b, 1], masks[b, 1], nxt, par)
        for b in range(nb)])
    return DecodeResult(
        bits=bits.ravel()[:n_src].copy(),
        verified=bool(verified_blocks.all()),
        block_verified=verified_blocks,
        requests=requests,
        parity_bits=int(masks.sum()),
        crc_bits=CRC_BITS * nb,
        iterations=iters,
    )


def binary_entropy(p):
    """``h2(p)`` in bits with the ``0 log 0 = 0`` convention."""
    p = np.asarray(p, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -p * np.log2(p) - (1 - p) * np.log2(1 - p)
    h = np.where((p <= 0) | (p >= 1), 0.0, h)
    return h if h.ndim else float(h)


# -- virtual channel estimation ------------------------------------------------

def estimate_crossover(mismatches, total, prior=0.15):
    """Empirical flip rate clamped to ``[1e-3, 0.499]``; ``prior`` without history."""
    if total <= 0:
        return float(prior)
    return float(min(max(mismatches / total, P_MIN), P_MAX))


class CrossoverModel:
    """Running per-(band, plane[, context]) flip statistics across decoded frames.

    With ``use_context`` the statistics are split by whether the already
    decoded higher planes of a coefficient agree with its SI.
    """

    def __init__(self, prior=0.15, use_context=False):
        self.prior = prior
        self.use_context = use_context
        self.stats = {}

    def _keys(self, key, context):
        if not self.use_context or context is None:
            return np.zeros(0 if context is None else len(context), int), [key]
        return np.asarray(context, int), [(key, 0), (key, 1)]

    def estimate(self, key, context=None):
        """Scalar ``p_hat`` or, with context, one value per bit."""
        if not self.use_context or context is None:
            return estimate_crossover(*self.stats.get(key, (0, 0)), self.prior)
        ctx = np.asarray(context, int)
        ps = [estimate_crossover(*self.stats.get((key, c), (0, 0)), self.prior) for c in (0, 1)]
        return np.where(ctx == 1, ps[1], ps[0])

    def update(self, key, truth_bits, si_bits, context=None):
        flips = np.asarray(truth_bits) != np.asarray(si_bits)
        if not self.use_context or context is None:
            m, n = self.stats.get(key, (0, 0))
            self.stats[key] = (m + int(flips.sum()), n + flips.size)
            return
        ctx = np.asarray(context, int)
        for c in (0, 1):
            sel = ctx == c
            m, n = self.stats.get((key, c), (0, 0))
            self.stats[(key, c)] = (m + int(flips[sel].sum()), n + int(sel.sum()))
