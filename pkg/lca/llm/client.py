from __future__ import annotations

import logging
from typing import Optional

import httpx
from langchain_core.prompt_values import PromptValue

from lca.config import EndpointConfig


logger = logging.getLogger(__name__)


class CompletionClient:
    """Async HTTP client for a text-completion endpoint.

    Protocol: ``POST {"prompt": str}`` answered by ``200 {"text": str}``.
    """

    def __init__(self, config: EndpointConfig, transport: Optional[httpx.AsyncBaseTransport] = None) -> None:
        if not config.url:
            raise ValueError("completion endpoint url is required")
        self._config = config
        self._transport = transport
        self._client: Optional[httpx.AsyncClient] = None

    @property
    def url(self) -> str:
        return self._config.url or ""

    async def _get_client(self) -> httpx.AsyncClient:
        if self._client is None:
            self._client = httpx.AsyncClient(
                headers={"Accept": "application/json", "Content-Type": "application/json"},
                timeout=httpx.Timeout(self._config.timeout, connect=min(self._config.timeout, 15.0)),
                transport=self._transport,
            )
        return self._client

    async def close(self) -> None:
        client = self._client
        if client is not None:
            await client.aclose()
            self._client = None

    async def complete(self, prompt: str) -> str:
        client = await self._get_client()
        logger.debug("POST %s (%d prompt chars)", self.url, len(prompt))
        try:
            resp = await client.post(self.url, json={"prompt": prompt})
        except httpx.HTTPError as e:
            raise RuntimeError(f"HTTP error calling completion endpoint {self.url}: {e}") from e

        if resp.status_code >= 400:
            raise RuntimeError(f"completion endpoint error {resp.status_code} for POST {self.url}: {resp.text}")
        try:
            data = resp.json()
        except ValueError as e:
            raise RuntimeError(f"completion endpoint returned non-JSON body: {resp.text[:200]!r}") from e
        text = data.get("text") if isinstance(data, dict) else None
        if not isinstance(text, str):
            raise RuntimeError(f"completion endpoint response lacks a 'text' string: {str(data)[:200]}")
        logger.debug("completion: %s", text[:400])
        return text

    async def complete_prompt(self, prompt: PromptValue) -> str:
        return await self.complete(prompt.to_string())
