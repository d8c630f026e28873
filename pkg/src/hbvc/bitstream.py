"""Bitstream container and per-tensor payload serialization.

Byte-level layout is specified in FORMAT.md.  The container makes rate
accounting exact (header-reported sizes always sum to the file size) and
carries a checkpoint hash so a decoder refuses streams produced with
different weights.  Every substream carries a crc32 over its decoded symbols
as the integrity cross-check.
"""

from __future__ import annotations

import hashlib
import io
import struct
from dataclasses import dataclass, field

import numpy as np
import torch

from . import rans
from .entropy import gaussian_coding_tables, factorized_coding_tables, scale_to_index

MAGIC = b"HBVC"
VERSION = 1

CODER_IDS = {"rans16": 0, "native": 1}
CODER_NAMES = {v: k for k, v in CODER_IDS.items()}

SUBSTREAM_IDS = {"motion": 0, "inter_y": 1, "inter_uv": 2,
                 "intra_y": 3, "intra_uv": 4, "hyper": 5, "inter_yuv": 6}
SUBSTREAM_NAMES = {v: k for k, v in SUBSTREAM_IDS.items()}

MODE_IDS = {"separate": 0, "independent": 1, "merged": 2,
            "space_to_depth": 3, "yuv444": 4}
MODE_NAMES = {v: k for k, v in MODE_IDS.items()}

SYMBOL_CAP = 512  # table half-range cap; values beyond use tail escapes

FRAME_TYPES = {"I": 0, "B": 1}
FRAME_TYPE_NAMES = {v: k for k, v in FRAME_TYPES.items()}


class BitstreamError(ValueError):
    pass


class ChecksumError(BitstreamError):
    pass


# -- varints ------------------------------------------------------------------

def write_varint(out: bytearray, value: int):
    if value < 0:
        raise ValueError("varint is unsigned")
    while True:
        b = value & 0x7F
        value >>= 7
        if value:
            out.append(b | 0x80)
        else:
            out.append(b)
            return


def read_varint(buf: bytes, pos: int):
    value = 0
    shift = 0
    while True:
        if pos >= len(buf):
            raise BitstreamError("varint ran past end of buffer")
        b = buf[pos]
        pos += 1
        value |= (b & 0x7F) << shift
        if not b & 0x80:
            return value, pos
        shift += 7


def zigzag(v: int) -> int:
    return (v << 1) ^ (v >> 63) if v < 0 else v << 1


def unzigzag(v: int) -> int:
    return (v >> 1) ^ -(v & 1)


# -- entropy backends ----------------------------------------------------------

class ReferenceCoder:
    """The normative in-process rANS backend."""

    name = "rans16"

    def encode_with_tables(self, symbols, tables, indices) -> bytes:
        return rans.encode_symbols(symbols, tables, indices)

    def decode_with_tables(self, data, tables, indices) -> np.ndarray:
        return rans.decode_symbols(data, tables, indices)


def _bucket(m: int) -> int:
    """Round a table half-range up to a power of two (better table reuse)."""
    m = max(1, min(int(m), SYMBOL_CAP))
    return 1 << (m - 1).bit_length()


def encode_gaussian_payload(sym: torch.Tensor, scale: torch.Tensor, coder) -> tuple:
    """Serialize integer residual symbols under scale-indexed Gaussian tables.

    Returns (payload bytes, crc32 of symbols).
    """
    sym_np = sym.detach().cpu().numpy().astype(np.int64).ravel()
    idx_np = scale_to_index(scale).detach().cpu().numpy().ravel()
    m = _bucket(np.abs(sym_np).max() if sym_np.size else 1)
    body = coder.encode_with_tables(sym_np, gaussian_coding_tables(m), idx_np)
    out = bytearray()
    write_varint(out, m)
    write_varint(out, len(body))
    out.extend(body)
    return bytes(out), rans.symbols_checksum(sym_np)


def decode_gaussian_payload(buf: bytes, pos: int, scale: torch.Tensor, coder):
    """Inverse of encode_gaussian_payload; returns (symbol tensor, pos, crc)."""
    m, pos = read_varint(buf, pos)
    size, pos = read_varint(buf, pos)
    if pos + size > len(buf):
        raise BitstreamError("gaussian payload truncated")
    idx_np = scale_to_index(scale).detach().cpu().numpy().ravel()
    sym_np = coder.decode_with_tables(
        buf[pos:pos + size], gaussian_coding_tables(m), idx_np)
    pos += size
    sym = torch.from_numpy(sym_np.astype(np.float32)).reshape(scale.shape)
    return sym, pos, rans.symbols_checksum(sym_np)


def encode_factorized_payload(sym: torch.Tensor, model, coder) -> tuple:
    """Serialize hyper-latent symbols under the learned factorized tables."""
    sym_np = sym.detach().cpu().numpy().astype(np.int64)
    b, c, h, w = sym_np.shape
    m = _bucket(np.abs(sym_np).max() if sym_np.size else 1)
    tables = factorized_coding_tables(model, -m, m)
    idx_np = np.broadcast_to(
        np.arange(c, dtype=np.int64).reshape(1, c, 1, 1), sym_np.shape).ravel()
    body = coder.encode_with_tables(sym_np.ravel(), tables, idx_np)
    out = bytearray()
    write_varint(out, m)
    write_varint(out, len(body))
    out.extend(body)
    return bytes(out), rans.symbols_checksum(sym_np.ravel())


def decode_factorized_payload(buf: bytes, pos: int, model, shape, coder):
    m, pos = read_varint(buf, pos)
    size, pos = read_varint(buf, pos)
    if pos + size > len(buf):
        raise BitstreamError("factorized payload truncated")
    b, c, h, w = shape
    tables = factorized_coding_tables(model, -m, m)
    idx_np = np.broadcast_to(
        np.arange(c, dtype=np.int64).reshape(1, c, 1, 1), shape).ravel()
    sym_np = coder.decode_with_tables(buf[pos:pos + size], tables, idx_np)
    pos += size
    sym = torch.from_numpy(sym_np.astype(np.float32)).reshape(shape)
    return sym, pos, rans.symbols_checksum(sym_np)


# -- checkpoint hashing ---------------------------------------------------------

def model_hash(module: torch.nn.Module) -> bytes:
    """First 8 bytes of a canonical sha256 over the state dict."""
    digest = hashlib.sha256()
    state = module.state_dict()
    for key in sorted(state.keys()):
        digest.update(key.encode())
        digest.update(state[key].detach().cpu().numpy().tobytes())
    return digest.digest()[:8]


# -- sequence container ----------------------------------------------------------

@dataclass
class Substream:
    name: str
    payload: bytes
    crc: int

    @property
    def byte_length(self) -> int:
        return 9 + len(self.payload)  # id u8 + len u32 + crc u32 + payload


@dataclass
class FrameBitstream:
    frame_type: str  # "I" | "B"
    c: int
    substreams: list = field(default_factory=list)

    @property
    def byte_length(self) -> int:
        return 3 + sum(s.byte_length for s in self.substreams)

    def get(self, name: str) -> Substream:
        for s in self.substreams:
            if s.name == name:
                return s
        raise KeyError(name)


@dataclass
class SequenceHeader:
    width: int
    height: int
    frame_count: int
    intra_period: int
    lambda_index: int
    intra_lambda: float
    coding_mode: str
    coder: str
    checkpoint_hash: bytes
    lambda_table: tuple

    HEADER_FMT = "<4sBBBBHHIHBxd8s"

    def pack(self) -> bytes:
        head = struct.pack(
            self.HEADER_FMT, MAGIC, VERSION, CODER_IDS[self.coder],
            MODE_IDS[self.coding_mode], len(self.lambda_table),
            self.width, self.height, self.frame_count, self.intra_period,
            self.lambda_index, self.intra_lambda, self.checkpoint_hash)
        return head + struct.pack(f"<{len(self.lambda_table)}f", *self.lambda_table)

    @property
    def byte_length(self) -> int:
        return struct.calcsize(self.HEADER_FMT) + 4 * len(self.lambda_table)

    @classmethod
    def unpack(cls, buf: bytes):
        base = struct.calcsize(cls.HEADER_FMT)
        if len(buf) < base:
            raise BitstreamError("stream shorter than the fixed header")
        (magic, version, coder_id, mode_id, table_len, width, height,
         frame_count, intra_period, lambda_index, intra_lambda,
         ckpt_hash) = struct.unpack(cls.HEADER_FMT, buf[:base])
        if magic != MAGIC:
            raise BitstreamError(f"bad magic {magic!r}")
        if version != VERSION:
            raise BitstreamError(f"unsupported version {version}")
        if coder_id not in CODER_NAMES:
            raise BitstreamError(f"unknown coder id {coder_id}")
        if mode_id not in MODE_NAMES:
            raise BitstreamError(f"unknown coding mode id {mode_id}")
        end = base + 4 * table_len
        if len(buf) < end:
            raise BitstreamError("stream truncated inside the lambda table")
        table = struct.unpack(f"<{table_len}f", buf[base:end])
        header = cls(width, height, frame_count, intra_period, lambda_index,
                     intra_lambda, MODE_NAMES[mode_id], CODER_NAMES[coder_id],
                     ckpt_hash, tuple(table))
        return header, end


def write_sequence(header: SequenceHeader, frames: list) -> bytes:
    out = io.BytesIO()
    out.write(header.pack())
    for fb in frames:
        out.write(struct.pack("<BBB", FRAME_TYPES[fb.frame_type], fb.c,
                              len(fb.substreams)))
        for s in fb.substreams:
            out.write(struct.pack("<BII", SUBSTREAM_IDS[s.name],
                                  len(s.payload), s.crc))
            out.write(s.payload)
    return out.getvalue()


def read_sequence(buf: bytes):
    header, pos = SequenceHeader.unpack(buf)
    frames = []
    for fi in range(header.frame_count):
        if pos + 3 > len(buf):
            raise BitstreamError(f"stream truncated at frame {fi}")
        ftype, c, nsub = struct.unpack_from("<BBB", buf, pos)
        pos += 3
        if ftype not in FRAME_TYPE_NAMES:
            raise BitstreamError(f"frame {fi}: unknown frame type {ftype}")
        fb = FrameBitstream(FRAME_TYPE_NAMES[ftype], c)
        for _ in range(nsub):
            if pos + 9 > len(buf):
                raise BitstreamError(f"stream truncated in frame {fi} substream header")
            sid, size, crc = struct.unpack_from("<BII", buf, pos)
            pos += 9
            if sid not in SUBSTREAM_NAMES:
                raise BitstreamError(f"frame {fi}: unknown substream id {sid}")
            if pos + size > len(buf):
                raise BitstreamError(f"stream truncated in frame {fi} payload")
            fb.substreams.append(Substream(SUBSTREAM_NAMES[sid], buf[pos:pos + size], crc))
            pos += size
        frames.append(fb)
    if pos != len(buf):
        raise BitstreamError(
            f"{len(buf) - pos} trailing bytes after the last frame")
    return header, frames
