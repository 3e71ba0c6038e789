import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from mtcascade import kernels
from mtcascade.core import Batch, TranslationRecord


@pytest.fixture(params=sorted(kernels.BACKENDS))
def backend(request):
    return request.param


def make_batch(**columns):
    """Batch from parallel column lists, ids ``r0, r1, ...``."""
    n = len(next(iter(columns.values())))
    rows = []
    for i in range(n):
        row = {"id": f"r{i}", "source": f"src {i}"}
        for name, values in columns.items():
            if values[i] is not None:
                row[name] = values[i]
        rows.append(TranslationRecord.from_dict(row))
    return Batch(tuple(rows), name="fixture")


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


class MockService:
    """In-process translation + QE server.

    Translation returns the upper-cased prompt (use prompt_template
    ``"{source}"``); scoring returns ``qe_scores[hypothesis]`` when given,
    else ``len(hypothesis) / 100``.  ``fail`` holds hypotheses / sources that
    always answer HTTP 503.
    """

    def __init__(self):
        self.calls = {"/small/chat/completions": [], "/large/chat/completions": [], "/qe/score": []}
        self.qe_scores = {}
        self.fail = set()
        self.delay = 0.0
        self.in_flight = 0
        self.max_in_flight = 0
        self.lock = threading.Lock()
        service = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                with service.lock:
                    service.in_flight += 1
                    service.max_in_flight = max(service.max_in_flight, service.in_flight)
                    service.calls.setdefault(self.path, []).append(body)
                try:
                    if service.delay:
                        time.sleep(service.delay)
                    status, out = service.handle(self.path, body, self.headers)
                finally:
                    with service.lock:
                        service.in_flight -= 1
                data = json.dumps(out).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.server.server_address[1]}"
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    def handle(self, path, body, headers):
        if path.endswith("/chat/completions"):
            text = body["messages"][0]["content"]
            if text in self.fail:
                return 503, {"error": "down"}
            return 200, {"choices": [{"message": {"role": "assistant", "content": text.upper()}}]}
        if path.endswith("/score"):
            hyp = body["hypothesis"]
            if hyp in self.fail:
                return 503, {"error": "down"}
            return 200, {"score": self.qe_scores.get(hyp, len(hyp) / 100)}
        return 404, {"error": "not found"}

    def count(self, path=None):
        if path is None:
            return sum(len(v) for v in self.calls.values())
        return len(self.calls.get(path, []))

    def reset_counts(self):
        for v in self.calls.values():
            v.clear()

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def mock_service():
    svc = MockService()
    yield svc
    svc.close()


@pytest.fixture
def endpoints(mock_service):
    from mtcascade.gateway import EndpointConfig

    def ep(role, **kw):
        kw.setdefault("backoff", 0.0)
        kw.setdefault("max_retries", 1)
        return EndpointConfig(f"{mock_service.url}/{role}", f"{role}-model", prompt_template="{source}", **kw)

    return {"small": ep("small"), "qe": ep("qe"), "large": ep("large"), "make": ep}


# Filled by test_acceptance; one line per criterion.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
