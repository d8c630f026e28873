/**
 * Integer CDF tables for the rANS coder.
 *
 * The construction is normative (FORMAT.md): a shared erfc approximation,
 * round-half-up integerization with a floor of one count per bin, and a
 * deterministic spread repair of the total. Implementations in other
 * languages must reproduce these tables bit-exactly from the same inputs.
 */

export interface CdfTableData {
  precision_bits: number;
  offset: number;
  cum: number[];
}

export class CdfTable {
  readonly precisionBits: number;
  readonly offset: number;
  readonly cum: Int32Array;
  private lookupTable: Uint32Array | null = null;

  constructor(precisionBits: number, offset: number, cum: ArrayLike<number>) {
    this.precisionBits = precisionBits;
    this.offset = offset;
    this.cum = Int32Array.from(cum as number[]);
    const total = 1 << precisionBits;
    if (this.cum[0] !== 0 || this.cum[this.cum.length - 1] !== total) {
      throw new Error(`cumulative table must run 0..${total}`);
    }
    for (let i = 1; i < this.cum.length; i++) {
      if (this.cum[i] - this.cum[i - 1] < 1) {
        throw new Error("every bin must have frequency >= 1");
      }
    }
  }

  get numBins(): number {
    return this.cum.length - 1;
  }

  freq(bin: number): number {
    return this.cum[bin + 1] - this.cum[bin];
  }

  /** cumulative value -> bin index, materialized once per table */
  lookup(): Uint32Array {
    if (this.lookupTable === null) {
      const t = new Uint32Array(1 << this.precisionBits);
      for (let b = 0; b < this.numBins; b++) {
        t.fill(b, this.cum[b], this.cum[b + 1]);
      }
      this.lookupTable = t;
    }
    return this.lookupTable;
  }

  static fromJSON(d: CdfTableData): CdfTable {
    return new CdfTable(d.precision_bits, d.offset, d.cum);
  }
}

/** Complementary error function, rational Chebyshev fit (~1e-7 relative). */
export function erfc(x: number): number {
  const z = Math.abs(x);
  const t = 1.0 / (1.0 + 0.5 * z);
  const ans =
    t *
    Math.exp(
      -z * z -
        1.26551223 +
        t *
          (1.00002368 +
            t *
              (0.37409196 +
                t *
                  (0.09678418 +
                    t *
                      (-0.18628806 +
                        t *
                          (0.27886807 +
                            t *
                              (-1.13520398 +
                                t *
                                  (1.48851587 +
                                    t * (-0.82215223 + t * 0.17087277)))))))),
    );
  return x >= 0.0 ? ans : 2.0 - ans;
}

export function phi(x: number): number {
  return 0.5 * erfc(-x / Math.sqrt(2.0));
}

/** Bin masses of N(mean, scale^2) over lo..hi, tails folded into the ends. */
export function gaussianPmf(
  mean: number,
  scale: number,
  lo: number,
  hi: number,
): Float64Array {
  if (scale <= 0) throw new Error(`scale must be positive, got ${scale}`);
  if (hi < lo) throw new Error(`empty symbol range [${lo}, ${hi}]`);
  const n = hi - lo + 1;
  const p = new Float64Array(n);
  let lower0 = 0;
  let upperLast = 0;
  for (let i = 0; i < n; i++) {
    const k = lo + i;
    const upper = phi((k + 0.5 - mean) / scale);
    const lower = phi((k - 0.5 - mean) / scale);
    p[i] = Math.max(upper - lower, 0);
    if (i === 0) lower0 = lower;
    if (i === n - 1) upperLast = upper;
  }
  p[0] += lower0;
  p[n - 1] += 1.0 - upperLast;
  return p;
}

/**
 * Probabilities -> integer frequencies summing to 2^precision.
 * Round half-up, floor at one count, then repair the total in passes that
 * touch the largest bins first (index ascending on ties).
 */
export function integerizePmf(
  pmf: ArrayLike<number>,
  precisionBits: number,
): Int32Array {
  const total = 1 << precisionBits;
  const n = pmf.length;
  if (n > total) {
    throw new Error(`${n} bins cannot fit in precision ${precisionBits}`);
  }
  const f = new Int32Array(n);
  let sum = 0;
  for (let i = 0; i < n; i++) {
    f[i] = Math.max(1, Math.floor(pmf[i] * total + 0.5));
    sum += f[i];
  }
  let d = sum - total;
  while (d !== 0) {
    const order = Array.from({ length: n }, (_, i) => i).sort(
      (a, b) => f[b] - f[a] || a - b,
    );
    if (d > 0) {
      const eligible = order.filter((i) => f[i] >= 2);
      if (eligible.length === 0) {
        throw new Error("cannot repair table: all mass at minimum");
      }
      const take = eligible.slice(0, d);
      for (const i of take) f[i] -= 1;
      d -= take.length;
    } else {
      const take = order.slice(0, -d);
      for (const i of take) f[i] += 1;
      d += take.length;
    }
  }
  return f;
}

export function buildCdf(
  mean: number,
  scale: number,
  lo: number,
  hi: number,
  precisionBits = 16,
): CdfTable {
  const f = integerizePmf(gaussianPmf(mean, scale, lo, hi), precisionBits);
  const cum = new Int32Array(f.length + 1);
  for (let i = 0; i < f.length; i++) cum[i + 1] = cum[i] + f[i];
  return new CdfTable(precisionBits, lo, cum);
}
