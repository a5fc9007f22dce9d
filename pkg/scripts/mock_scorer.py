#!/usr/bin/env python3
"""
Bundled stand-in for a remote aesthetic/alignment scorer.

Answers ``POST /score`` with fixed scores, or with a configured HTTP status for
the first ``fail_first`` requests. Used by the tests and for local smoke runs:

    python scripts/mock_scorer.py --port 8765 --aesthetic 6.5 --alignment 7.0
"""

import json
import logging
import sys
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Annotated

import typer

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from constants import ScorerKeys  # noqa: E402


class MockScorerState:
    """What the server answers; mutable between requests, guarded by a lock."""

    def __init__(
        self,
        aesthetic: float = 5.0,
        alignment: float = 5.0,
        blip: float | None = None,
        fail_first: int = 0,
        fail_status: int = 503,
        raw_body: str | None = None,
    ) -> None:
        self.aesthetic = aesthetic
        self.alignment = alignment
        self.blip = blip
        self.fail_first = fail_first
        self.fail_status = fail_status
        self.raw_body = raw_body
        self.requests = 0
        self.concepts: list[str] = []
        self.lock = threading.Lock()


def make_handler(state: MockScorerState) -> type[BaseHTTPRequestHandler]:
    class ScoreHandler(BaseHTTPRequestHandler):
        def do_POST(self) -> None:  # noqa: N802
            length = int(self.headers.get("Content-Length", 0))
            body = json.loads(self.rfile.read(length) or b"{}")
            with state.lock:
                state.requests += 1
                state.concepts.append(str(body.get(ScorerKeys.CONCEPT, "")))
                failing = state.requests <= state.fail_first
            if self.path != ScorerKeys.ROUTE:
                self._send(404, {"error": "not found"})
            elif failing:
                self._send(state.fail_status, {"error": "unavailable"})
            elif state.raw_body is not None:
                self._send_raw(200, state.raw_body.encode())
            else:
                answer: dict[str, float] = {
                    ScorerKeys.AESTHETIC: state.aesthetic,
                    ScorerKeys.ALIGNMENT: state.alignment,
                }
                if state.blip is not None:
                    answer[ScorerKeys.BLIP] = state.blip
                self._send(200, answer)

        def _send(self, status: int, payload: dict) -> None:
            self._send_raw(status, json.dumps(payload).encode())

        def _send_raw(self, status: int, raw: bytes) -> None:
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(raw)))
            self.end_headers()
            self.wfile.write(raw)

        def log_message(self, format: str, *args: object) -> None:  # noqa: A002
            logging.getLogger("mock_scorer").debug(format, *args)

    return ScoreHandler


def start_server(state: MockScorerState, port: int = 0) -> tuple[ThreadingHTTPServer, str]:
    """Serves in a daemon thread; returns the server and its base URL."""
    server = ThreadingHTTPServer(("127.0.0.1", port), make_handler(state))
    threading.Thread(target=server.serve_forever, daemon=True).start()
    host, bound = server.server_address[:2]
    return server, f"http://{host}:{bound}"


app = typer.Typer(name="mock-scorer", add_completion=False)


def serve(state: MockScorerState, port: int) -> None:
    """Blocks until interrupted."""
    server = ThreadingHTTPServer(("127.0.0.1", port), make_handler(state))
    logging.info("Mock scorer listening on http://127.0.0.1:%d%s", port, ScorerKeys.ROUTE)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


@app.command()
def main(
    port: Annotated[int, typer.Option(help="Port to listen on.")] = 8765,
    aesthetic: Annotated[float, typer.Option(help="Aesthetic score to answer with.")] = 5.0,
    alignment: Annotated[float, typer.Option(help="Alignment score to answer with.")] = 5.0,
    blip: Annotated[float | None, typer.Option(help="Optional blip score.")] = None,
    fail_first: Annotated[int, typer.Option("--fail-first", min=0, help="Answer 503 to this many requests first.")] = 0,
) -> None:
    logging.basicConfig(level=logging.INFO)
    serve(MockScorerState(aesthetic, alignment, blip, fail_first), port)


if __name__ == "__main__":
    app()
