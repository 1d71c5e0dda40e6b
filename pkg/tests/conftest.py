"""Shared fixtures: golden excerpt texts, the reference bundle, HTTP stubs."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Iterator

import pytest

from casedraft.ingest import (
    parse_device_profile,
    parse_lablog_locations,
    parse_lablog_messages,
    parse_mandate,
    parse_method_steps,
)
from casedraft.model import CaseBundle, EvidenceItem, ItemKind

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA_DIR


def read_fixture(name: str) -> str:
    return DATA_DIR.joinpath(name).read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def golden_bundle() -> CaseBundle:
    """The reference case: two devices, three locations, three messages."""
    mandate, _ = parse_mandate(read_fixture("full_mandate.txt"))
    profile, _ = parse_device_profile(read_fixture("device_lablog.txt"))
    locations, _ = parse_lablog_locations(read_fixture("lablog_locations.txt"))
    messages, _ = parse_lablog_messages(read_fixture("lablog_messages.txt"))
    steps, _ = parse_method_steps(read_fixture("method_steps.txt"))
    return CaseBundle(
        mandate=mandate,
        items=(
            EvidenceItem(
                item_id="S1",
                kind=ItemKind.PHYSICAL_DEVICE,
                vendor="Samsung",
                model="Galaxy S6 Edge",
                storage_size=32000000000,
                acquisition_methods=("logical", "physical"),
            ),
            EvidenceItem(
                item_id="IP6",
                kind=ItemKind.PHYSICAL_DEVICE,
                vendor="Apple",
                model="iPhone 6",
                acquisition_methods=("logical", "file system"),
            ),
        ),
        device_profiles={"S1": profile},
        locations={"S1": tuple(locations)},
        messages={"IP6": tuple(messages)},
        method_steps=tuple(steps),
    )


class StubHandler(BaseHTTPRequestHandler):
    """Records every request; serves canned generate/chat responses."""

    server_version = "stub/0"

    def do_POST(self) -> None:  # noqa: N802 (http.server API)
        state = self.server.state  # type: ignore[attr-defined]
        state["counter"] += 1
        n = state["counter"]
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length)
        state["requests"].append(
            {
                "path": self.path,
                "headers": {k.lower(): v for k, v in self.headers.items()},
                "body": json.loads(raw) if raw else None,
            }
        )
        if n in state["fail_on"]:
            self.send_response(503)
            self.end_headers()
            self.wfile.write(b"backend overloaded")
            return
        if state["raw_response"] is not None:
            data = state["raw_response"]
        elif "chat/completions" in self.path:
            data = json.dumps(
                {
                    "choices": [
                        {"message": {"role": "assistant", "content": f"hosted draft {n}"}}
                    ],
                    "usage": {"completion_tokens": 7},
                }
            ).encode()
        else:
            data = json.dumps({"results": [{"text": f"local draft {n}"}]}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args) -> None:
        pass


class StubServer:
    def __init__(self) -> None:
        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), StubHandler)
        self._httpd.state = {  # type: ignore[attr-defined]
            "counter": 0,
            "requests": [],
            "fail_on": set(),
            "raw_response": None,
        }
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    @property
    def state(self) -> dict:
        return self._httpd.state  # type: ignore[attr-defined]

    @property
    def requests(self) -> list[dict]:
        return self.state["requests"]

    def shutdown(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()


@pytest.fixture()
def stub_server() -> Iterator[StubServer]:
    server = StubServer()
    yield server
    server.shutdown()
