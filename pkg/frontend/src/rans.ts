/**
 * Byte-oriented rANS coder over integer CDF tables (FORMAT.md "rans16").
 *
 * All arithmetic stays below 2^53 so plain numbers are exact; state values
 * fit 32 bits. Symbols at a table's ends act as tail escapes followed by an
 * order-0 exp-Golomb suffix, making the coder lossless for any integers.
 */

import { CdfTable } from "./cdf.js";

export const RANS_BYTE_L = 1 << 23;

export class TruncatedStreamError extends Error {}

class OpList {
  starts: Int32Array;
  freqs: Int32Array;
  bits: Int32Array;
  length = 0;

  constructor(capacity: number) {
    this.starts = new Int32Array(capacity);
    this.freqs = new Int32Array(capacity);
    this.bits = new Int32Array(capacity);
  }

  push(start: number, freq: number, bits: number) {
    if (this.length === this.starts.length) {
      const grow = (a: Int32Array) => {
        const b = new Int32Array(a.length * 2);
        b.set(a);
        return b;
      };
      this.starts = grow(this.starts);
      this.freqs = grow(this.freqs);
      this.bits = grow(this.bits);
    }
    this.starts[this.length] = start;
    this.freqs[this.length] = freq;
    this.bits[this.length] = bits;
    this.length += 1;
  }
}

function symbolOps(
  symbols: ArrayLike<number>,
  tables: CdfTable[],
  indices: ArrayLike<number>,
): OpList {
  const ops = new OpList(symbols.length + 16);
  for (let i = 0; i < symbols.length; i++) {
    const t = tables[indices[i]];
    const n = t.numBins;
    let b = symbols[i] - t.offset;
    let escape = -1;
    if (n === 1) {
      if (b !== 0) {
        throw new Error(
          `symbol ${symbols[i]} outside single-bin table at offset ${t.offset}`,
        );
      }
    } else if (b <= 0) {
      escape = -b;
      b = 0;
    } else if (b >= n - 1) {
      escape = b - (n - 1);
      b = n - 1;
    }
    ops.push(t.cum[b], t.cum[b + 1] - t.cum[b], t.precisionBits);
    if (escape >= 0) {
      const m = escape + 1;
      const k = 31 - Math.clz32(m); // bit length - 1
      for (let z = 0; z < k; z++) ops.push(0, 1, 1);
      for (let z = k; z >= 0; z--) ops.push((m >>> z) & 1, 1, 1);
    }
  }
  return ops;
}

export function encodeSymbols(
  symbols: ArrayLike<number>,
  tables: CdfTable | CdfTable[],
  indices?: ArrayLike<number>,
): Uint8Array {
  const tabs = Array.isArray(tables) ? tables : [tables];
  const idx = indices ?? new Int32Array(symbols.length);
  if (idx.length !== symbols.length) {
    throw new Error("need one table index per symbol");
  }
  const ops = symbolOps(symbols, tabs, idx);
  const { starts, freqs, bits } = ops;
  // worst case four renorm bytes per op plus the four flush bytes
  const buf = new Uint8Array(4 * ops.length + 8);
  let pos = buf.length; // filled backward, emitted bytes end up in order
  let x = RANS_BYTE_L;
  for (let i = ops.length - 1; i >= 0; i--) {
    const freq = freqs[i];
    const nbits = bits[i];
    const xMax = ((RANS_BYTE_L >>> nbits) << 8) * freq;
    while (x >= xMax) {
      buf[--pos] = x & 0xff;
      x = Math.floor(x / 256);
    }
    const q = Math.floor(x / freq);
    x = q * (1 << nbits) + (x - q * freq) + starts[i];
  }
  buf[--pos] = x & 0xff;
  buf[--pos] = (x >>> 8) & 0xff;
  buf[--pos] = (x >>> 16) & 0xff;
  buf[--pos] = (x >>> 24) & 0xff;
  return buf.slice(pos);
}

export function decodeSymbols(
  data: Uint8Array,
  tables: CdfTable | CdfTable[],
  indices?: ArrayLike<number>,
  count?: number,
): Int32Array {
  const tabs = Array.isArray(tables) ? tables : [tables];
  const idx =
    indices ??
    (() => {
      if (count === undefined) throw new Error("need indices or count");
      return new Int32Array(count);
    })();
  if (data.length < 4) {
    throw new TruncatedStreamError(
      `stream holds ${data.length} bytes, need >= 4`,
    );
  }
  let x = data[0] * 0x1000000 + data[1] * 0x10000 + data[2] * 0x100 + data[3];
  let pos = 4;

  function pull() {
    while (x < RANS_BYTE_L) {
      if (pos >= data.length) {
        throw new TruncatedStreamError(
          `stream truncated at byte ${pos} of ${data.length}`,
        );
      }
      x = x * 256 + data[pos];
      pos += 1;
    }
  }

  function readBit(): number {
    const bit = x % 2;
    x = (x - bit) / 2;
    pull();
    return bit;
  }

  const out = new Int32Array(idx.length);
  for (let i = 0; i < idx.length; i++) {
    const t = tabs[idx[i]];
    const mask = (1 << t.precisionBits) - 1;
    const cumVal = x & mask;
    const b = t.lookup()[cumVal];
    const freq = t.freq(b);
    x = freq * Math.floor(x / (1 << t.precisionBits)) + cumVal - t.cum[b];
    pull();
    let value = t.offset + b;
    const n = t.numBins;
    if (n > 1 && (b === 0 || b === n - 1)) {
      let zeros = 0;
      while (readBit() === 0) zeros += 1;
      let m = 1;
      for (let z = 0; z < zeros; z++) m = m * 2 + readBit();
      const escape = m - 1;
      value = b === 0 ? t.offset - escape : t.offset + n - 1 + escape;
    }
    out[i] = value;
  }
  return out;
}

/** crc32 over int32 little-endian symbol values (matches zlib.crc32). */
export function symbolsChecksum(symbols: ArrayLike<number>): number {
  const table = crcTable();
  let crc = 0xffffffff;
  for (let i = 0; i < symbols.length; i++) {
    let v = symbols[i] | 0;
    for (let byte = 0; byte < 4; byte++) {
      crc = table[(crc ^ (v & 0xff)) & 0xff] ^ (crc >>> 8);
      v >>>= 8;
    }
  }
  return (crc ^ 0xffffffff) >>> 0;
}

let crcTableCache: Uint32Array | null = null;

function crcTable(): Uint32Array {
  if (crcTableCache === null) {
    const t = new Uint32Array(256);
    for (let n = 0; n < 256; n++) {
      let c = n;
      for (let k = 0; k < 8; k++) {
        c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
      }
      t[n] = c >>> 0;
    }
    crcTableCache = t;
  }
  return crcTableCache;
}
