"""Client for the native (Node) rANS coder behind the subprocess protocol.

One long-lived child process serves line-delimited JSON requests (see
frontend/src/server.ts and FORMAT.md).  Given identical CdfTables the native
coder produces streams byte-identical to :mod:`hbvc.rans`, so it is a
drop-in backend for all bitstream payloads.
"""

from __future__ import annotations

import base64
import json
import os
import shutil
import subprocess

import numpy as np

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
SERVER_JS = os.path.join(REPO_ROOT, "frontend", "dist", "server.js")


class NativeCoderUnavailable(RuntimeError):
    pass


def native_available() -> bool:
    return shutil.which("node") is not None and os.path.exists(SERVER_JS)


class NativeCoder:
    """Drop-in replacement backend for ReferenceCoder."""

    name = "native"

    def __init__(self, server_js: str | None = None):
        server = server_js or SERVER_JS
        if shutil.which("node") is None:
            raise NativeCoderUnavailable("node executable not found")
        if not os.path.exists(server):
            raise NativeCoderUnavailable(
                f"{server} missing; build it with `npm run build` in frontend/")
        self._proc = subprocess.Popen(
            ["node", server], stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            text=True, bufsize=1)
        if self._call({"op": "ping"}).get("coder") != "rans16-native":
            raise NativeCoderUnavailable("native coder did not answer ping")

    def _call(self, request: dict) -> dict:
        assert self._proc.stdin and self._proc.stdout
        self._proc.stdin.write(json.dumps(request) + "\n")
        self._proc.stdin.flush()
        line = self._proc.stdout.readline()
        if not line:
            raise RuntimeError("native coder process terminated")
        response = json.loads(line)
        if "error" in response:
            raise RuntimeError(f"native coder error: {response['error']}")
        return response

    @staticmethod
    def _tables_json(tables) -> list:
        return [t.as_dict() for t in tables]

    def encode_with_tables(self, symbols, tables, indices) -> bytes:
        response = self._call({
            "op": "encode",
            "tables": self._tables_json(tables),
            "indices": [int(i) for i in np.asarray(indices).ravel()],
            "symbols": [int(s) for s in np.asarray(symbols).ravel()],
        })
        return base64.b64decode(response["bytes"])

    def decode_with_tables(self, data, tables, indices) -> np.ndarray:
        response = self._call({
            "op": "decode",
            "tables": self._tables_json(tables),
            "indices": [int(i) for i in np.asarray(indices).ravel()],
            "data": base64.b64encode(bytes(data)).decode(),
        })
        return np.asarray(response["symbols"], dtype=np.int64)

    def build_cdf(self, mean, scale, lo, hi, precision_bits=16):
        from .rans import CdfTable
        response = self._call({
            "op": "build_cdf", "mean": float(mean), "scale": float(scale),
            "lo": int(lo), "hi": int(hi), "precision_bits": precision_bits,
        })
        return CdfTable.from_dict(response["table"])

    def close(self):
        if self._proc.poll() is None:
            self._proc.terminate()
            self._proc.wait(timeout=5)

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass
