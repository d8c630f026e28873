/**
 * Line-delimited JSON coding service.
 *
 * The Python side keeps one long-lived child process and sends one request
 * per line on stdin; each request yields exactly one JSON response line on
 * stdout. Byte payloads travel base64-encoded; tables are CdfTable dicts
 * identical to the reference implementation's serialization.
 *
 * Requests:
 *   {"op": "encode", "tables": [...], "indices": [...], "symbols": [...]}
 *   {"op": "decode", "tables": [...], "indices": [...], "data": "<base64>"}
 *   {"op": "build_cdf", "mean": m, "scale": s, "lo": a, "hi": b,
 *    "precision_bits": p}
 *   {"op": "ping"}
 */

import * as readline from "node:readline";
import { CdfTable, buildCdf, CdfTableData } from "./cdf.js";
import { encodeSymbols, decodeSymbols } from "./rans.js";

function tableCache(datas: CdfTableData[]): CdfTable[] {
  return datas.map((d) => CdfTable.fromJSON(d));
}

function handle(req: any): any {
  switch (req.op) {
    case "ping":
      return { ok: true, coder: "rans16-native" };
    case "encode": {
      const tables = tableCache(req.tables);
      const bytes = encodeSymbols(req.symbols, tables, req.indices);
      return { bytes: Buffer.from(bytes).toString("base64") };
    }
    case "decode": {
      const tables = tableCache(req.tables);
      const data = new Uint8Array(Buffer.from(req.data, "base64"));
      const symbols = decodeSymbols(data, tables, req.indices);
      return { symbols: Array.from(symbols) };
    }
    case "build_cdf": {
      const t = buildCdf(
        req.mean,
        req.scale,
        req.lo,
        req.hi,
        req.precision_bits ?? 16,
      );
      return {
        table: {
          precision_bits: t.precisionBits,
          offset: t.offset,
          cum: Array.from(t.cum),
        },
      };
    }
    default:
      return { error: `unknown op ${req.op}` };
  }
}

const rl = readline.createInterface({ input: process.stdin, terminal: false });
rl.on("line", (line) => {
  if (!line.trim()) return;
  let response: any;
  try {
    response = handle(JSON.parse(line));
  } catch (err) {
    response = { error: String(err) };
  }
  process.stdout.write(JSON.stringify(response) + "\n");
});
