"""Minimal threaded HTTP service around a saved model.

Routes:
    GET  /health   -> {"status": "ok", "classes": <count>}
    POST /predict  -> body {"keywords": "<text>", "top_k": 3}

Inference mutates nothing on the model, so one loaded model serves all
threads without locking. The /predict response body is payload_json
output, which is exactly what the predict CLI prints.
"""

from __future__ import annotations

import json
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from . import __version__
from .errors import DataError
from .inference import payload_json, predict_ranked

MAX_BODY_BYTES = 1 << 20  # 1 MiB is far beyond any real transcription


class _Handler(BaseHTTPRequestHandler):
    server_version = "medspecialty/" + __version__
    protocol_version = "HTTP/1.1"

    def log_message(self, format, *args):  # noqa: A002 - stdlib signature
        pass  # tests and batch callers do not want per-request stderr noise

    def _send(self, status: int, body: str) -> None:
        data = body.encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _send_error_json(self, status: int, message: str) -> None:
        self._send(status, json.dumps({"error": message}))

    def do_GET(self):
        if self.path != "/health":
            self._send_error_json(404, "unknown path")
            return
        body = json.dumps({"status": "ok", "classes": len(self.server.model.catalog)})
        self._send(200, body)

    def do_POST(self):
        if self.path != "/predict":
            self._send_error_json(404, "unknown path")
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
        except ValueError:
            self._send_error_json(400, "bad Content-Length")
            return
        if length <= 0 or length > MAX_BODY_BYTES:
            self._send_error_json(400, "missing or oversized request body")
            return
        raw = self.rfile.read(length)
        try:
            payload = json.loads(raw)
        except (UnicodeDecodeError, json.JSONDecodeError):
            self._send_error_json(400, "request body is not valid json")
            return
        if not isinstance(payload, dict) or not isinstance(payload.get("keywords"), str):
            self._send_error_json(400, "expected a json object with a string 'keywords' field")
            return
        top_k = payload.get("top_k", 3)
        if isinstance(top_k, bool) or not isinstance(top_k, int) or top_k < 1:
            self._send_error_json(400, "'top_k' must be a positive integer")
            return
        try:
            ranked = predict_ranked(self.server.model, payload["keywords"], top_k=top_k)
        except DataError as exc:
            self._send_error_json(422, str(exc))
            return
        except Exception:
            self._send_error_json(500, "internal error")
            return
        self._send(200, payload_json(ranked))


class _Server(ThreadingHTTPServer):
    daemon_threads = True
    request_queue_size = 128  # the default backlog of 5 resets concurrent bursts


def make_server(model, host: str = "127.0.0.1", port: int = 0) -> _Server:
    """Build (but do not start) the server; port 0 picks a free port."""
    server = _Server((host, port), _Handler)
    server.model = model
    return server
