"""Shared plumbing for JSON-over-HTTP model services: retry, auth, file cache."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import time
from pathlib import Path
from typing import Any, Callable

API_KEY_ENV = "XLRAG_API_KEY"

# (url, payload) -> parsed JSON response
Transport = Callable[[str, dict], dict]


class RemoteCallError(RuntimeError):
    """A remote call failed after exhausting its retry budget."""


def bearer_headers(api_key_env: str = API_KEY_ENV) -> dict[str, str]:
    token = os.environ.get(api_key_env, "")
    headers = {"Content-Type": "application/json"}
    if token:
        headers["Authorization"] = f"Bearer {token}"
    return headers


def default_transport(timeout: float = 30.0, api_key_env: str = API_KEY_ENV) -> Transport:
    def post(url: str, payload: dict) -> dict:
        import requests

        resp = requests.post(url, json=payload, headers=bearer_headers(api_key_env), timeout=timeout)
        resp.raise_for_status()
        return resp.json()

    return post


def call_with_retry(fn: Callable[[], Any], attempts: int = 3, backoff: float = 0.5) -> Any:
    """Run fn with exponential backoff; raise RemoteCallError after the last attempt."""
    if attempts < 1:
        raise ValueError("attempts must be >= 1")
    last: Exception | None = None
    for attempt in range(attempts):
        try:
            return fn()
        except Exception as exc:  # transport errors vary by backend
            last = exc
            if attempt + 1 < attempts and backoff > 0:
                time.sleep(backoff * (2**attempt))
    raise RemoteCallError(f"remote call failed after {attempts} attempts: {last}") from last


def content_key(*parts: str) -> str:
    h = hashlib.sha256()
    for part in parts:
        h.update(part.encode("utf-8"))
        h.update(b"\x1f")
    return h.hexdigest()


class FileCache:
    """One JSON file per content hash.

    Writes are atomic (temp file + rename) so concurrent writers of the same
    key converge to one stored value; torn or missing files read as misses.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, key: str) -> dict | None:
        try:
            return json.loads(self._path(key).read_text(encoding="utf-8"))
        except (FileNotFoundError, json.JSONDecodeError):
            return None

    def put(self, key: str, value: dict) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(value, fh, ensure_ascii=False)
            os.replace(tmp, self._path(key))
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)
