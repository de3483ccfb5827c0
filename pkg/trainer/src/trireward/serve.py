"""Serving the scoring protocol.

Requests carry {"query", "context", "step_text", "code", "variables"};
replies carry {"relevance", "logic", "attribute"} floats in [0, 1] (raw
scores squashed by a logistic). Two transports share one request handler:
HTTP POST /score, and line-delimited JSON over stdio. A malformed request
produces an error reply and the service keeps going.
"""

from __future__ import annotations

import json
import math
from http.server import BaseHTTPRequestHandler, HTTPServer

import torch

from .data import build_input_text
from .model import DIMENSIONS, TriHeadRewardModel
from .tokenizer import encode_batch


def squash(value: float) -> float:
    return 1.0 / (1.0 + math.exp(-value))


def score_reply(model: TriHeadRewardModel, payload: dict) -> dict:
    if not isinstance(payload, dict):
        raise ValueError("request must be a JSON object")
    try:
        query = payload["query"]
        context = payload["context"]
        step_text = payload["step_text"]
    except KeyError as exc:
        raise ValueError(f"request missing field {exc}") from None
    if not isinstance(context, list):
        raise ValueError("context must be a list")
    text = build_input_text(str(query), [str(part) for part in context], str(step_text))
    if not text.strip():
        raise ValueError("request text is empty")
    ids, mask = encode_batch([text])
    model.eval()
    with torch.no_grad():
        raw = model(ids, mask)[0]
    return {name: squash(float(raw[dim])) for dim, name in enumerate(DIMENSIONS)}


def serve_stdio(model: TriHeadRewardModel, stdin, stdout) -> None:
    """One reply line per request line, errors included, until EOF."""
    for line in stdin:
        if not line.strip():
            continue
        try:
            reply = score_reply(model, json.loads(line))
        except (json.JSONDecodeError, ValueError) as exc:
            reply = {"error": str(exc)}
        stdout.write(json.dumps(reply) + "\n")
        stdout.flush()


def make_http_server(model: TriHeadRewardModel, host: str = "127.0.0.1",
                     port: int = 0) -> HTTPServer:
    class ScoringHandler(BaseHTTPRequestHandler):
        def do_POST(self):  # noqa: N802 (http.server API)
            if self.path != "/score":
                self._reply(404, {"error": f"unknown route {self.path}"})
                return
            length = int(self.headers.get("Content-Length", 0))
            try:
                payload = json.loads(self.rfile.read(length))
                reply = score_reply(model, payload)
            except (json.JSONDecodeError, ValueError) as exc:
                self._reply(400, {"error": str(exc)})
                return
            self._reply(200, reply)

        def _reply(self, status: int, body: dict) -> None:
            encoded = json.dumps(body).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(encoded)))
            self.end_headers()
            self.wfile.write(encoded)

        def log_message(self, *args) -> None:
            pass

    return HTTPServer((host, port), ScoringHandler)
