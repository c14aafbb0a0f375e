"""Tests for the run-status webhook client."""

import asyncio
import hashlib
import hmac
import json

import pytest
from aiohttp import web
from aiohttp import test_utils

from config import Config
from webhook_client import SIGNATURE_HEADER, WebhookClient


def test_constructor_validation():
    with pytest.raises(ValueError):
        WebhookClient("")
    with pytest.raises(ValueError):
        WebhookClient("http://localhost/hook", max_retries=0)


def test_payload_shape():
    client = WebhookClient("http://localhost/hook")
    payload = client.generate_payload("run-7", "started", {"sweep": [1, 2]})
    assert set(payload) == {"run_id", "status", "timestamp", "data"}
    assert payload["run_id"] == "run-7"
    assert payload["data"] == {"sweep": [1, 2]}


def test_signature_is_hmac_sha256():
    body = b'{"status": "completed"}'
    client = WebhookClient("http://localhost/hook", "s3cret")
    assert client.sign(body) == hmac.new(b"s3cret", body, hashlib.sha256).hexdigest()
    assert WebhookClient("http://localhost/hook").sign(body) is None


def test_from_config(monkeypatch):
    monkeypatch.setattr(Config, "WEBHOOK_URL", None)
    assert WebhookClient.from_config() is None
    monkeypatch.setattr(Config, "WEBHOOK_SECRET", "abc")
    client = WebhookClient.from_config("http://localhost/hook")
    assert client.webhook_url == "http://localhost/hook"
    assert client.secret == "abc"


async def _serve(responses):
    received = []

    async def handler(request):
        body = await request.read()
        received.append((dict(request.headers), body))
        return web.Response(status=responses[min(len(received), len(responses)) - 1], text="nope")

    app = web.Application()
    app.router.add_post("/hook", handler)
    server = test_utils.TestServer(app)
    await server.start_server()
    return server, received


def test_delivery_is_signed_and_retried():
    async def scenario():
        server, received = await _serve([500, 200])
        try:
            client = WebhookClient(str(server.make_url("/hook")), "key", backoff=0.0)
            ok = await client.send_status_update("run-1", "completed", {"slope": -1.0})
        finally:
            await server.close()
        return ok, received

    ok, received = asyncio.run(scenario())
    assert ok is True
    assert len(received) == 2
    headers, body = received[-1]
    assert headers[SIGNATURE_HEADER] == hmac.new(b"key", body, hashlib.sha256).hexdigest()
    assert json.loads(body)["data"] == {"slope": -1.0}


def test_persistent_errors_raise_after_retries():
    async def scenario():
        server, received = await _serve([503])
        try:
            client = WebhookClient(str(server.make_url("/hook")), max_retries=2, backoff=0.0)
            with pytest.raises(RuntimeError):
                await client.send_status_update("run-2", "failed", {})
        finally:
            await server.close()
        return received

    received = asyncio.run(scenario())
    assert len(received) == 2
    assert SIGNATURE_HEADER not in received[0][0]
