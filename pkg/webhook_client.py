"""Webhook client that publishes run-status updates of long scaling studies."""

from __future__ import annotations

import asyncio
import hashlib
import hmac
import json
import logging
from datetime import datetime, timezone
from typing import Any, Dict

import aiohttp

from config import Config

logger = logging.getLogger(__name__)

SIGNATURE_HEADER = "X-Webhook-Signature"


class WebhookClient:
    """POST JSON status updates (``started``, ``dimension_completed``, …) for a run."""

    def __init__(
        self,
        webhook_url: str | None,
        secret: str | None = None,
        *,
        timeout: int = 10,
        max_retries: int = 3,
        backoff: float = 1.0,
    ) -> None:
        if not webhook_url:
            raise ValueError("A webhook URL is required")
        if max_retries < 1:
            raise ValueError("max_retries must be at least 1")
        self.webhook_url = webhook_url
        self.secret = secret
        self.timeout = aiohttp.ClientTimeout(total=timeout)
        self.max_retries = max_retries
        self.backoff = backoff

    @classmethod
    def from_config(cls, webhook_url: str | None = None) -> "WebhookClient | None":
        """Client for ``webhook_url`` or ``Config.WEBHOOK_URL``; ``None`` when neither is set."""

        url = webhook_url or Config.WEBHOOK_URL
        if not url:
            return None
        return cls(url, Config.WEBHOOK_SECRET)

    def sign(self, body: bytes) -> str | None:
        if not self.secret:
            return None
        return hmac.new(self.secret.encode("utf-8"), body, hashlib.sha256).hexdigest()

    async def send_status_update(self, run_id: str, status: str, data: Dict[str, Any]) -> bool:
        """Send one update, retrying with exponential backoff.

        Raises:
            RuntimeError: If the endpoint keeps answering with an error status.
            aiohttp.ClientError: If the endpoint stays unreachable.
        """

        body = json.dumps(self.generate_payload(run_id, status, data), ensure_ascii=False).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        signature = self.sign(body)
        if signature:
            headers[SIGNATURE_HEADER] = signature

        async with aiohttp.ClientSession(timeout=self.timeout) as session:
            for attempt in range(1, self.max_retries + 1):
                try:
                    async with session.post(self.webhook_url, data=body, headers=headers) as response:
                        if response.status < 400:
                            return True
                        detail = await response.text()
                        raise RuntimeError(f"Webhook responded with status {response.status}: {detail}")
                except (aiohttp.ClientError, asyncio.TimeoutError, RuntimeError) as exc:
                    if attempt >= self.max_retries:
                        raise
                    logger.debug("webhook attempt %d for run %s failed: %s", attempt, run_id, exc)
                    await asyncio.sleep(self.backoff * 2 ** (attempt - 1))
        return False

    def generate_payload(self, run_id: str, status: str, data: Dict[str, Any]) -> Dict[str, Any]:
        return {
            "run_id": run_id,
            "status": status,
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "data": data,
        }
