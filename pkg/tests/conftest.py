from __future__ import annotations

import json
from pathlib import Path

import httpx
import pytest

from anx.core import Core, ui_channel
from anx.hub import Hub

FIXTURES = Path(__file__).parent / "fixtures"

INDUSTRIES = [
    {"id": "it", "name": "Information Technology"},
    {"id": "finance", "name": "Finance"},
]


def load_fixture(name: str) -> str:
    return (FIXTURES / name).read_text(encoding="utf-8")


def load_fixture_json(name: str) -> dict:
    return json.loads(load_fixture(name))


@pytest.fixture
def fetch_counter() -> list[str]:
    return []


@pytest.fixture
def dataset_client(fetch_counter: list[str]) -> httpx.Client:
    def handler(request: httpx.Request) -> httpx.Response:
        fetch_counter.append(request.url.path)
        if request.url.path == "/dataset/industries":
            return httpx.Response(200, json=INDUSTRIES)
        if request.url.path == "/dataset/empty":
            return httpx.Response(200, json=[])
        if request.url.path == "/dataset/badshape":
            return httpx.Response(200, json=[{"label": "no id here"}])
        if request.url.path == "/dataset/notarray":
            return httpx.Response(200, json={"oops": True})
        if request.url.path == "/dataset/boom":
            return httpx.Response(500, text="server error")
        return httpx.Response(404, text="not found")

    return httpx.Client(transport=httpx.MockTransport(handler), base_url="http://data.local")


@pytest.fixture
def hub() -> Hub:
    return Hub()


@pytest.fixture
def core(hub: Hub, dataset_client: httpx.Client) -> Core:
    return Core(http_client=dataset_client, token_verifier=hub.is_valid_token)


@pytest.fixture
def ui(hub: Hub):
    token = hub.issue_user_token("test-session", "human_ui")
    return ui_channel(token.token)
