"""Serve a trained artifact over the student wire contract.

Requests are JSON objects {"id": str, "text": str}. Replies are
{"id", "label_code", "confidence"} with confidence the maximum class
probability, or {"id", "error"} for items that cannot be answered. A bad
item never takes the server down; it gets its own error object.

Two transports: stdio (one object per line each way, strictly one reply
per request line, in order) and HTTP (POST /predict with a JSON array
body, JSON array reply). The model runs in eval mode with gradients off,
so a fixed artifact answers a fixed request stream identically every
time.
"""

import json
import logging
import sys
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import IO

import torch

from .model import Artifact, load_artifact, predict_batch

logger = logging.getLogger(__name__)


def answer_one(artifact: Artifact, obj) -> dict:
    """One reply object for one request object; errors stay per-item."""
    if not isinstance(obj, dict):
        return {"id": "", "error": "request is not a JSON object"}
    speech_id = obj.get("id")
    if not isinstance(speech_id, str):
        return {"id": "", "error": "missing or non-string id"}
    text = obj.get("text")
    if not isinstance(text, str):
        return {"id": speech_id, "error": "missing or non-string text"}
    code, confidence = predict_batch(artifact, [text])[0]
    return {"id": speech_id, "label_code": code, "confidence": confidence}


def answer_batch(artifact: Artifact, items) -> list[dict]:
    """Replies for a request array, order preserved, one per item."""
    return [answer_one(artifact, obj) for obj in items]


def serve_stdio(
    artifact_dir: str, stdin: IO[str] | None = None, stdout: IO[str] | None = None
) -> None:
    """Blocking loop: one request line in, one reply line out, until EOF."""
    torch.set_num_threads(1)
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    artifact = load_artifact(artifact_dir)
    for line in stdin:
        line = line.strip()
        if not line:
            reply = {"id": "", "error": "empty request line"}
        else:
            try:
                reply = answer_one(artifact, json.loads(line))
            except json.JSONDecodeError as exc:
                reply = {"id": "", "error": f"malformed JSON: {exc.msg}"}
        stdout.write(json.dumps(reply) + "\n")
        stdout.flush()


class _Handler(BaseHTTPRequestHandler):
    artifact: Artifact  # set by make_http_server

    def do_POST(self):  # noqa: N802 (stdlib naming)
        if self.path.rstrip("/") != "/predict":
            self.send_error(404)
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            payload = json.loads(self.rfile.read(length).decode("utf-8"))
        except (ValueError, UnicodeDecodeError):
            self._send(400, {"error": "body is not valid JSON"})
            return
        if not isinstance(payload, list):
            self._send(400, {"error": "body must be a JSON array"})
            return
        self._send(200, answer_batch(self.artifact, payload))

    def _send(self, status: int, body) -> None:
        data = json.dumps(body).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, fmt, *args):
        logger.debug("http: " + fmt, *args)


def make_http_server(artifact_dir: str, host: str, port: int) -> ThreadingHTTPServer:
    """An HTTP server ready for serve_forever(); port 0 picks a free port."""
    torch.set_num_threads(1)
    artifact = load_artifact(artifact_dir)
    handler = type("BoundHandler", (_Handler,), {"artifact": artifact})
    return ThreadingHTTPServer((host, port), handler)


def serve_http(artifact_dir: str, host: str = "127.0.0.1", port: int = 8400) -> None:
    server = make_http_server(artifact_dir, host, port)
    logger.info("serving on http://%s:%d/predict", *server.server_address)
    try:
        server.serve_forever()
    finally:
        server.server_close()
