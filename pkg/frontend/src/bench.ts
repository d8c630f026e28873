/** Throughput benchmark: encode/decode 1e7 Gaussian symbols. */

import { buildCdf } from "./cdf.js";
import { encodeSymbols, decodeSymbols } from "./rans.js";

function lcg(seed: number) {
  let s = seed >>> 0;
  return () => {
    s = (s * 1664525 + 1013904223) >>> 0;
    return s / 4294967296;
  };
}

const n = Number(process.argv[2] ?? 1e7);
const rand = lcg(12345);
const sigma = 2.0;
const table = buildCdf(0, sigma, -24, 24, 16);

const symbols = new Int32Array(n);
for (let i = 0; i < n; i += 2) {
  const u1 = Math.max(rand(), 1e-12);
  const u2 = rand();
  const r = Math.sqrt(-2 * Math.log(u1)) * sigma;
  symbols[i] = Math.round(r * Math.cos(2 * Math.PI * u2));
  if (i + 1 < n) symbols[i + 1] = Math.round(r * Math.sin(2 * Math.PI * u2));
}

let t0 = performance.now();
const data = encodeSymbols(symbols, table);
const tEnc = (performance.now() - t0) / 1000;

t0 = performance.now();
const out = decodeSymbols(data, table, undefined, n);
const tDec = (performance.now() - t0) / 1000;

let ok = true;
for (let i = 0; i < n; i++) {
  if (out[i] !== symbols[i]) {
    ok = false;
    break;
  }
}

const report = {
  symbols: n,
  bytes: data.length,
  lossless: ok,
  encode_seconds: Number(tEnc.toFixed(3)),
  decode_seconds: Number(tDec.toFixed(3)),
  encode_msym_per_s: Number((n / 1e6 / tEnc).toFixed(2)),
  decode_msym_per_s: Number((n / 1e6 / tDec).toFixed(2)),
};
console.log(JSON.stringify(report, null, 2));
