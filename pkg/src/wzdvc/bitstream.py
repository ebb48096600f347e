"""Length-prefixed binary records for parity, CRCs, key frames and request logs.

Layout: an 8-byte header (``b"WZDV"``, format version ``u16``, reserved
``u16``), then records. Every record is ``type u8, length u32`` (both
big-endian) followed by ``length`` payload bytes:

====  ========  ==================================================================
type  name      payload
====  ========  ==================================================================
1     META      UTF-8 JSON object (codec configuration, geometry)
2     BLOCK     ``frame u32, stream u16, block u32, n_valid u16, crc u16,
                n_chunks u8`` then ``n_chunks`` parity chunks, each the packed
                bits of a ``(2, chunk_bits)`` array
3     REQUEST   ``frame u32, stream u16, block u32, request u8, n_bits u16``
4     KEY       ``frame u32, height u16, width u16`` then raw 8-bit luma
5     END       ``records u32``: number of records before this one
====  ========  ==================================================================

An encoder writes BLOCK records holding every chunk; a decoder writes the
same record type holding only the chunks it asked for, so the rate it spent
can be recounted from the file alone.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"WZDV"
VERSION = 1

META, BLOCK, REQUEST, KEY, END = 1, 2, 3, 4, 5

_HEAD = struct.Struct(">4sHH")
_REC = struct.Struct(">BI")
_BLOCK = struct.Struct(">IHIHHB")
_REQ = struct.Struct(">IHIBH")
_KEY = struct.Struct(">IHH")
_END = struct.Struct(">I")

CRC_BITS = 16


class FormatError(ValueError):
    pass


@dataclass
class BlockRecord:
    frame: int
    stream: int
    block: int
    n_valid: int
    crc: int
    chunks: np.ndarray   # (n_chunks, 2, chunk_bits) uint8


@dataclass
class Bitstream:
    meta: dict = field(default_factory=dict)
    blocks: list = field(default_factory=list)
    requests: list = field(default_factory=list)   # (frame, stream, block, k, n_bits)
    keys: dict = field(default_factory=dict)       # frame -> luma

    @property
    def parity_bits(self):
        return int(sum(r.chunks.size for r in self.blocks))

    @property
    def crc_bits(self):
        return CRC_BITS * len(self.blocks)

    @property
    def rate_bits(self):
        return self.parity_bits + self.crc_bits

    def frame_bits(self):
        """Parity plus CRC bits per frame index."""
        out = {}
        for r in self.blocks:
            out[r.frame] = out.get(r.frame, 0) + r.chunks.size + CRC_BITS
        return out


def _record(kind, payload):
    return _REC.pack(kind, len(payload)) + payload


def to_bytes(bs: Bitstream) -> bytes:
    out = [_HEAD.pack(MAGIC, VERSION, 0)]
    out.append(_record(META, json.dumps(bs.meta, sort_keys=True).encode()))
    for k in sorted(bs.keys):
        luma = np.ascontiguousarray(bs.keys[k], np.uint8)
        out.append(_record(KEY, _KEY.pack(k, *luma.shape) + luma.tobytes()))
    for r in bs.blocks:
        chunks = np.asarray(r.chunks, np.uint8)
        body = b"".join(np.packbits(c).tobytes() for c in chunks)
        out.append(_record(BLOCK, _BLOCK.pack(r.frame, r.stream, r.block, r.n_valid, r.crc,
                                              len(chunks)) + body))
    for q in bs.requests:
        out.append(_record(REQUEST, _REQ.pack(*q)))
    out.append(_record(END, _END.pack(len(out) - 1)))
    return b"".join(out)


def from_bytes(data: bytes, chunk_bits=128) -> Bitstream:
    if len(data) < _HEAD.size:
        raise FormatError("truncated header")
    magic, version, _ = _HEAD.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported format version {version}")
    bs, pos, count, ended = Bitstream(), _HEAD.size, 0, False
    chunk_bytes = 2 * chunk_bits // 8
    while pos < len(data):
        if ended:
            raise FormatError("data after END record")
        if pos + _REC.size > len(data):
            raise FormatError("truncated record header")
        kind, n = _REC.unpack_from(data, pos)
        pos += _REC.size
        body = data[pos:pos + n]
        if len(body) != n:
            raise FormatError("truncated record payload")
        pos += n
        if kind == META:
            bs.meta = json.loads(body.decode())
        elif kind == KEY:
            k, h, w = _KEY.unpack_from(body)
            if len(body) != _KEY.size + h * w:
                raise FormatError("key frame size mismatch")
            bs.keys[k] = np.frombuffer(body, np.uint8, offset=_KEY.size).reshape(h, w).copy()
        elif kind == BLOCK:
            frame, stream, block, n_valid, crc, nc = _BLOCK.unpack_from(body)
            raw = np.frombuffer(body, np.uint8, offset=_BLOCK.size)
            if raw.size != nc * chunk_bytes:
                raise FormatError("block record length does not match its chunk count")
            chunks = np.unpackbits(raw).reshape(nc, 2, chunk_bits)
            bs.blocks.append(BlockRecord(frame, stream, block, n_valid, crc, chunks))
        elif kind == REQUEST:
            bs.requests.append(_REQ.unpack(body))
        elif kind == END:
            (expected,) = _END.unpack(body)
            if expected != count:
                raise FormatError(f"END counts {expected} records, found {count}")
            ended = True
        else:
            raise FormatError(f"unknown record type {kind}")
        count += 1
    if not ended:
        raise FormatError("missing END record")
    return bs


def write(path, bs: Bitstream):
    with open(path, "wb") as fh:
        fh.write(to_bytes(bs))


def read(path, chunk_bits=128) -> Bitstream:
    with open(path, "rb") as fh:
        return from_bytes(fh.read(), chunk_bits)
