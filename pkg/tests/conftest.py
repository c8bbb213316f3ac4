"""Shared fixtures: a scriptable local HTTP endpoint and tiny datasets."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from hilite.data import Instance


class _ScriptedHandler(BaseHTTPRequestHandler):
    """Serves queued (status, payload) entries, one per request."""

    script: list = []
    requests_seen: list = []

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = self.rfile.read(length)
        type(self).requests_seen.append(json.loads(body) if body else None)
        if type(self).script:
            status, payload = type(self).script.pop(0)
        else:
            status, payload = 200, {"text": "<answer>ok</answer>"}
        if status is None:  # simulate a dropped connection
            self.connection.close()
            return
        data = json.dumps(payload).encode() if not isinstance(payload, bytes) else payload
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def scripted_server():
    """Yields (url, handler_class); tests fill handler_class.script."""
    _ScriptedHandler.script = []
    _ScriptedHandler.requests_seen = []
    server = HTTPServer(("127.0.0.1", 0), _ScriptedHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    url = f"http://127.0.0.1:{server.server_address[1]}/"
    yield url, _ScriptedHandler
    server.shutdown()
    thread.join(timeout=5)


def make_instance(
    context: str = "alpha beta gamma delta epsilon",
    query: str = "find beta",
    gold: str = "beta",
    evidence_spans=None,
    inst_id: str = "t-0",
) -> Instance:
    return Instance(
        id=inst_id,
        query=query,
        context=context,
        gold=gold,
        evidence_spans=evidence_spans,
    )
