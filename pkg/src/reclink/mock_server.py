"""Deterministic mock of an OpenAI-compatible embeddings endpoint.

Used by the test suite and runnable standalone for manual experiments.
Embeddings are derived from a hash of the text, so they are stable across
runs and platforms; vectors are intentionally NOT unit-norm so clients must
re-normalize. A failure mode serves malformed bodies to exercise the
client's error path.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

MODES = ("ok", "malformed", "http_error")


def deterministic_embedding(text: str, dim: int) -> list[float]:
    """Non-normalized vector seeded by the text's hash (scaled 3-4-5 style)."""
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "little"))
    v = rng.normal(size=dim)
    return list(v * 5.0)


class _Handler(BaseHTTPRequestHandler):
    server: "MockEmbeddingsServer"

    def log_message(self, *args) -> None:  # keep test output quiet
        pass

    def _reply(self, code: int, body: bytes, content_type: str = "application/json") -> None:
        self.send_response(code)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_POST(self) -> None:  # noqa: N802 (http.server API)
        srv = self.server
        if not self.path.endswith("/embeddings"):
            self._reply(404, b'{"error": "not found"}')
            return
        if srv.require_auth and not self.headers.get("Authorization", "").startswith("Bearer "):
            self._reply(401, b'{"error": "missing bearer token"}')
            return
        length = int(self.headers.get("Content-Length", "0"))
        try:
            payload = json.loads(self.rfile.read(length))
            texts = payload["input"]
        except (json.JSONDecodeError, KeyError):
            self._reply(400, b'{"error": "bad request"}')
            return
        srv.request_count += 1
        if srv.mode == "http_error":
            self._reply(500, b'{"error": "simulated failure"}')
            return
        if srv.mode == "malformed":
            self._reply(200, b'{"data": "oops, not a list"}')
            return
        data = [
            {"index": i, "embedding": deterministic_embedding(t, srv.dim)}
            for i, t in enumerate(texts)
        ]
        # serve rows in reverse so clients must reorder by "index"
        data.reverse()
        self._reply(200, json.dumps({"data": data, "model": payload.get("model")}).encode("utf-8"))


class MockEmbeddingsServer(ThreadingHTTPServer):
    def __init__(self, port: int = 0, dim: int = 16, mode: str = "ok", require_auth: bool = True):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        super().__init__(("127.0.0.1", port), _Handler)
        self.dim = dim
        self.mode = mode
        self.require_auth = require_auth
        self.request_count = 0
        self._thread: threading.Thread | None = None

    @property
    def endpoint(self) -> str:
        return f"http://127.0.0.1:{self.server_address[1]}"

    def start(self) -> "MockEmbeddingsServer":
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.shutdown()
        if self._thread:
            self._thread.join(timeout=5)
        self.server_close()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Run the mock embeddings server")
    parser.add_argument("--port", type=int, default=8765)
    parser.add_argument("--dim", type=int, default=16)
    parser.add_argument("--mode", choices=MODES, default="ok")
    parser.add_argument("--no-auth", action="store_true", help="skip the bearer-token check")
    args = parser.parse_args(argv)
    server = MockEmbeddingsServer(
        port=args.port, dim=args.dim, mode=args.mode, require_auth=not args.no_auth)
    print(f"mock embeddings server at {server.endpoint} (dim={args.dim}, mode={args.mode})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
