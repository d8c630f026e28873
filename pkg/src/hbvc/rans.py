"""Reference rANS entropy coder over integer CDF tables.

This is the normative coder for the bitstream (coder_id "rans16"): byte-exact
behaviour, including CDF integerization, is specified in FORMAT.md so that
alternative implementations can produce mutually decodable streams.  The
coder itself is pure integer arithmetic; floating point appears only while
building tables.

Symbols at either end of a table's range act as tail-escape bins: they are
followed by an order-0 exp-Golomb suffix coding how far beyond the range the
actual value lies, which makes the coder lossless for arbitrary integers.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np

RANS_BYTE_L = 1 << 23
DEFAULT_PRECISION = 16


class TruncatedStreamError(ValueError):
    """Ran out of bytes while decoding."""


def _erfc(x: float) -> float:
    """Complementary error function (rational Chebyshev fit, ~1e-7 relative).

    Deliberately self-contained: the identical operation sequence is used by
    every coder implementation so CDF tables agree across languages.
    """
    z = abs(x)
    t = 1.0 / (1.0 + 0.5 * z)
    ans = t * math.exp(
        -z * z - 1.26551223 + t * (1.00002368 + t * (0.37409196 + t * (
            0.09678418 + t * (-0.18628806 + t * (0.27886807 + t * (
                -1.13520398 + t * (1.48851587 + t * (
                    -0.82215223 + t * 0.17087277))))))))
    )
    return ans if x >= 0.0 else 2.0 - ans


def _phi(x: float) -> float:
    """Standard normal CDF."""
    return 0.5 * _erfc(-x / math.sqrt(2.0))


@dataclass
class CdfTable:
    """Integer cumulative-frequency table for one symbol distribution.

    ``offset`` is the smallest in-range symbol; bin i codes symbol offset+i.
    ``cum`` has length num_bins+1, starts at 0, is strictly increasing and
    ends at 2**precision_bits (every bin has frequency >= 1).
    """

    precision_bits: int
    offset: int
    cum: np.ndarray
    _lookup: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.cum = np.asarray(self.cum, dtype=np.int64)
        total = 1 << self.precision_bits
        if self.cum[0] != 0 or self.cum[-1] != total:
            raise ValueError(f"cumulative table must run 0..{total}")
        if np.any(np.diff(self.cum) < 1):
            raise ValueError("every bin must have frequency >= 1")

    @property
    def num_bins(self) -> int:
        return len(self.cum) - 1

    @property
    def freqs(self) -> np.ndarray:
        return np.diff(self.cum)

    def lookup(self) -> np.ndarray:
        """Cumulative-value -> bin index map of size 2**precision_bits."""
        if self._lookup is None:
            self._lookup = np.repeat(
                np.arange(self.num_bins, dtype=np.uint32), self.freqs)
        return self._lookup

    def as_dict(self) -> dict:
        return {
            "precision_bits": self.precision_bits,
            "offset": int(self.offset),
            "cum": [int(c) for c in self.cum],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CdfTable":
        return cls(d["precision_bits"], d["offset"], np.asarray(d["cum"]))


def integerize_pmf(pmf: np.ndarray, precision_bits: int) -> np.ndarray:
    """Turn a probability vector into integer frequencies summing to 2**P.

    Rule (normative, see FORMAT.md): round half-up, floor at 1, then repair
    the total in passes that add/steal one unit from each of the largest bins
    in turn (frequency descending, index ascending; bins at 1 are never
    stolen from), so no single bin absorbs the whole correction.
    """
    total = 1 << precision_bits
    if len(pmf) > total:
        raise ValueError(f"{len(pmf)} bins cannot fit in precision {precision_bits}")
    f = np.floor(np.asarray(pmf, dtype=np.float64) * total + 0.5).astype(np.int64)
    f = np.maximum(f, 1)
    d = int(f.sum()) - total
    while d != 0:
        order = np.lexsort((np.arange(len(f)), -f))
        if d > 0:
            order = order[f[order] >= 2]
            if len(order) == 0:
                raise ValueError("cannot repair table: all mass at minimum")
            take = order[:d]
            f[take] -= 1
            d -= len(take)
        else:
            take = order[:-d]
            f[take] += 1
            d += len(take)
    return f


def gaussian_pmf(mean: float, scale: float, lo: int, hi: int) -> np.ndarray:
    """Bin masses of N(mean, scale^2) over integer bins lo..hi.

    The end bins absorb the full tail mass on their side, so the vector sums
    to 1 following the unit-width bin convention p_k = Phi(k+.5) - Phi(k-.5).
    """
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    if hi < lo:
        raise ValueError(f"empty symbol range [{lo}, {hi}]")
    upper = [_phi((k + 0.5 - mean) / scale) for k in range(lo, hi + 1)]
    lower = [_phi((k - 0.5 - mean) / scale) for k in range(lo, hi + 1)]
    p = np.array(upper) - np.array(lower)
    p[0] += lower[0]
    p[-1] += 1.0 - upper[-1]
    return np.maximum(p, 0.0)


def build_cdf(mean: float, scale: float, lo: int, hi: int,
              precision_bits: int = DEFAULT_PRECISION) -> CdfTable:
    """Quantized-Gaussian CDF table over symbols lo..hi (tails folded in)."""
    f = integerize_pmf(gaussian_pmf(mean, scale, lo, hi), precision_bits)
    cum = np.concatenate([[0], np.cumsum(f)])
    return CdfTable(precision_bits, lo, cum)


def build_cdf_from_pmf(pmf: np.ndarray, offset: int,
                       precision_bits: int = DEFAULT_PRECISION) -> CdfTable:
    """CDF table from an arbitrary probability vector (e.g. a learned model)."""
    s = float(np.sum(pmf))
    if not (s > 0.0 and np.isfinite(s)):
        raise ValueError("pmf must have positive finite mass")
    f = integerize_pmf(np.asarray(pmf, dtype=np.float64) / s, precision_bits)
    cum = np.concatenate([[0], np.cumsum(f)])
    return CdfTable(precision_bits, offset, cum)


def _exp_golomb_bits(value: int) -> list:
    """Order-0 exp-Golomb code of value >= 0, MSB first."""
    m = value + 1
    k = m.bit_length() - 1
    return [0] * k + [(m >> (k - i)) & 1 for i in range(k + 1)]


def _symbol_ops(symbols, tables, indices):
    """Flatten symbols into (start, freq, scale_bits) coding ops, escapes included."""
    ops = []
    for s, ti in zip(symbols, indices):
        t = tables[ti]
        cum, sb = t.cum, t.precision_bits
        n = t.num_bins
        b = int(s) - t.offset
        escape = None
        if n == 1:
            if b != 0:
                raise ValueError(
                    f"symbol {s} outside single-bin table at offset {t.offset}")
        elif b <= 0:
            escape = -b  # distance below/at the low end
            b = 0
        elif b >= n - 1:
            escape = b - (n - 1)
            b = n - 1
        ops.append((int(cum[b]), int(cum[b + 1] - cum[b]), sb))
        if escape is not None:
            for bit in _exp_golomb_bits(escape):
                ops.append((bit, 1, 1))
    return ops


def encode_symbols(symbols, tables, indices=None) -> bytes:
    """Entropy-code integer symbols; ``tables[indices[i]]`` models symbol i.

    A single CdfTable may be passed for ``tables`` to use it everywhere.
    Returns the rANS byte stream (4-byte sentinel for an empty input).
    """
    if isinstance(tables, CdfTable):
        tables = [tables]
    symbols = np.asarray(symbols, dtype=np.int64).ravel()
    if indices is None:
        indices = np.zeros(len(symbols), dtype=np.int64)
    else:
        indices = np.asarray(indices, dtype=np.int64).ravel()
    if len(indices) != len(symbols):
        raise ValueError("need one table index per symbol")

    ops = _symbol_ops(symbols, tables, indices)
    x = RANS_BYTE_L
    out = bytearray()
    append = out.append
    for start, freq, sb in reversed(ops):
        x_max = ((RANS_BYTE_L >> sb) << 8) * freq
        while x >= x_max:
            append(x & 0xFF)
            x >>= 8
        q, r = divmod(x, freq)
        x = (q << sb) + r + start
    append(x & 0xFF)
    append((x >> 8) & 0xFF)
    append((x >> 16) & 0xFF)
    append((x >> 24) & 0xFF)
    out.reverse()
    return bytes(out)


def decode_symbols(data: bytes, tables, indices=None, count: int | None = None,
                   strict: bool = False) -> np.ndarray:
    """Exact inverse of :func:`encode_symbols`.

    Raises TruncatedStreamError when the stream runs out of bytes.  With
    ``strict`` the final coder state and full byte consumption are verified
    too; by default integrity is left to an outer checksum so that decoding
    with a mismatched table completes and can be detected downstream.
    """
    if isinstance(tables, CdfTable):
        tables = [tables]
    if indices is None:
        if count is None:
            raise ValueError("need indices or count")
        indices = np.zeros(count, dtype=np.int64)
    else:
        indices = np.asarray(indices, dtype=np.int64).ravel()

    if len(data) < 4:
        raise TruncatedStreamError(f"stream holds {len(data)} bytes, need >= 4")
    x = (data[0] << 24) | (data[1] << 16) | (data[2] << 8) | data[3]
    pos = 4
    size = len(data)

    def pull(x, pos):
        while x < RANS_BYTE_L:
            if pos >= size:
                raise TruncatedStreamError(
                    f"stream truncated at byte {pos} of {size}")
            x = (x << 8) | data[pos]
            pos += 1
        return x, pos

    def read_bit(x, pos):
        bit = x & 1
        x >>= 1
        x, pos = pull(x, pos)
        return bit, x, pos

    out = np.empty(len(indices), dtype=np.int64)
    for i, ti in enumerate(indices):
        t = tables[ti]
        sb = t.precision_bits
        mask = (1 << sb) - 1
        cum_val = x & mask
        b = int(t.lookup()[cum_val])
        cum, n = t.cum, t.num_bins
        x = int(cum[b + 1] - cum[b]) * (x >> sb) + cum_val - int(cum[b])
        x, pos = pull(x, pos)
        value = t.offset + b
        if n > 1 and (b == 0 or b == n - 1):
            zeros = 0
            bit, x, pos = read_bit(x, pos)
            while bit == 0:
                zeros += 1
                bit, x, pos = read_bit(x, pos)
            m = 1
            for _ in range(zeros):
                bit, x, pos = read_bit(x, pos)
                m = (m << 1) | bit
            escape = m - 1
            value = t.offset - escape if b == 0 else t.offset + n - 1 + escape
        out[i] = value

    if strict and (x != RANS_BYTE_L or pos != size):
        raise ValueError(
            f"stream integrity check failed (state {x:#x}, consumed {pos}/{size})")
    return out


def symbols_checksum(symbols) -> int:
    """crc32 over the symbol sequence (int32 little-endian), for cross-checks."""
    arr = np.asarray(symbols, dtype="<i4").ravel()
    return zlib.crc32(arr.tobytes()) & 0xFFFFFFFF
