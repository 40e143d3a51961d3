import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from types import SimpleNamespace

import pytest

from promptscreen.dataset import GoldLabel, LabeledCorpus, LabeledRecord, Transcript


def make_corpus(rows):
    """Build a LabeledCorpus from (id, text, 'positive'|'negative') tuples."""
    return LabeledCorpus(tuple(
        LabeledRecord(Transcript(id=rid, text=text), GoldLabel(label))
        for rid, text, label in rows
    ))


def balanced_corpus(n_pos, n_neg, prefix="t"):
    rows = [(f"{prefix}p{i:03d}", f"positive sample text number {i}", "positive")
            for i in range(n_pos)]
    rows += [(f"{prefix}n{i:03d}", f"negative sample text number {i}", "negative")
             for i in range(n_neg)]
    return make_corpus(rows)


class _StubState:
    """Scripted responses for the chat-completions stub.

    Each script entry is either an int HTTP status (error response) or a
    string (successful completion content). When the script is exhausted the
    default action applies.
    """

    def __init__(self):
        self.script = []
        self.default = "LABEL: DEPRESSED"
        self.calls = 0
        self._lock = threading.Lock()

    def next_action(self):
        with self._lock:
            self.calls += 1
            if self.script:
                return self.script.pop(0)
            return self.default


class _StubHandler(BaseHTTPRequestHandler):
    state = None

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        self.rfile.read(length)
        action = self.state.next_action()
        if isinstance(action, int):
            self.send_response(action)
            self.send_header("Content-Length", "0")
            self.end_headers()
            return
        body = json.dumps({
            "choices": [{
                "message": {"role": "assistant", "content": action},
                "finish_reason": "stop",
            }]
        }).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_llm():
    state = _StubState()
    handler = type("Handler", (_StubHandler,), {"state": state})
    server = ThreadingHTTPServer(("127.0.0.1", 0), handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield SimpleNamespace(
            url=f"http://127.0.0.1:{server.server_port}/v1/chat/completions",
            state=state,
        )
    finally:
        server.shutdown()
