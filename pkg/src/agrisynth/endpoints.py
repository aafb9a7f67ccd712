"""HTTP clients for the chat-completions and embedding endpoints.

Both speak the de facto hosted-model wire format: chat requests POST
{model, messages, temperature, max_tokens} and read
choices[0].message.content; embedding requests POST {model, input} and
read data[i].embedding. Bearer tokens come from environment variables
named in config so secrets never land in config files or artifacts.
"""

from __future__ import annotations

import os
import time
from typing import Callable, Protocol, Sequence

import requests

RETRYABLE_STATUS = (429, 500, 502, 503, 504)


class EndpointError(RuntimeError):
    pass


class ChatClient(Protocol):
    def complete(
        self, messages: list[dict], *, model: str, temperature: float, max_tokens: int
    ) -> str: ...


class EmbeddingClient(Protocol):
    def embed_batch(self, texts: Sequence[str], *, model: str) -> list[list[float]]: ...


def with_retries(fn: Callable[[], object], attempts: int, base_delay: float = 1.0):
    """Run fn with exponential backoff on retryable endpoint errors."""
    last: Exception | None = None
    for attempt in range(max(1, attempts)):
        try:
            return fn()
        except (requests.ConnectionError, requests.Timeout, _RetryableStatus) as exc:
            last = exc
            if attempt + 1 < attempts:
                time.sleep(base_delay * (2**attempt))
    raise EndpointError(f"endpoint unavailable after {attempts} attempts: {last}") from last


class _RetryableStatus(requests.RequestException):
    pass


def _bearer_headers(auth_env: str) -> dict[str, str]:
    token = os.environ.get(auth_env, "")
    return {"Authorization": f"Bearer {token}"} if token else {}


def _post_json(url: str, payload: dict, headers: dict, timeout: float) -> dict:
    response = requests.post(url, json=payload, headers=headers, timeout=timeout)
    if response.status_code in RETRYABLE_STATUS:
        raise _RetryableStatus(f"HTTP {response.status_code} from {url}")
    if response.status_code != 200:
        raise EndpointError(f"HTTP {response.status_code} from {url}: {response.text[:200]}")
    try:
        return response.json()
    except ValueError as exc:
        raise EndpointError(f"non-JSON response from {url}") from exc


class HttpChatClient:
    def __init__(
        self,
        url: str,
        auth_env: str = "CHAT_API_KEY",
        timeout: float = 60.0,
        max_retries: int = 3,
        base_delay: float = 1.0,
    ):
        self.url = url
        self.auth_env = auth_env
        self.timeout = timeout
        self.max_retries = max_retries
        self.base_delay = base_delay

    def complete(
        self, messages: list[dict], *, model: str, temperature: float, max_tokens: int
    ) -> str:
        payload = {
            "model": model,
            "messages": messages,
            "temperature": temperature,
            "max_tokens": max_tokens,
        }

        def call():
            data = _post_json(self.url, payload, _bearer_headers(self.auth_env), self.timeout)
            try:
                return data["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError) as exc:
                raise EndpointError(f"malformed chat response: {data!r:.200}") from exc

        return with_retries(call, self.max_retries, self.base_delay)


class HttpEmbeddingClient:
    def __init__(
        self,
        url: str,
        auth_env: str = "EMBED_API_KEY",
        timeout: float = 60.0,
        max_retries: int = 3,
        base_delay: float = 1.0,
    ):
        self.url = url
        self.auth_env = auth_env
        self.timeout = timeout
        self.max_retries = max_retries
        self.base_delay = base_delay

    def embed_batch(self, texts: Sequence[str], *, model: str) -> list[list[float]]:
        payload = {"model": model, "input": list(texts)}

        def call():
            data = _post_json(self.url, payload, _bearer_headers(self.auth_env), self.timeout)
            try:
                return [[float(x) for x in item["embedding"]] for item in data["data"]]
            except (KeyError, TypeError, ValueError) as exc:
                raise EndpointError(f"malformed embedding response: {data!r:.200}") from exc

        return with_retries(call, self.max_retries, self.base_delay)
