"""Handles caching of remote scorer responses and detects endpoint changes."""

import hashlib
import logging
from pathlib import Path
from typing import Any

import diskcache

from constants import LogMsg, PathName
from log_utils import ScorerPayload, log_with_payload

ENDPOINT_KEY = "__scorer_endpoint__"


def score_cache_key(endpoint: str, concept: str, payload: bytes) -> str:
    """Builds the cache key for one remote scoring request."""
    digest = hashlib.sha256(payload).hexdigest()
    return f"{endpoint}|{concept}|{digest}"


class CacheManager:
    """Manages a persistent disk cache and invalidates it when the scorer endpoint changes."""

    def __init__(
        self, cache_dir: str | Path = PathName.CACHE_DIR, endpoint: str | None = None
    ) -> None:
        """
        Initializes the disk cache.

        Args:
            cache_dir: Directory where diskcache stores data.
            endpoint: Remote scorer URL the cached scores belong to.
        """
        self._cache = diskcache.Cache(str(cache_dir))
        if endpoint is not None:
            self.check_endpoint_and_invalidate(endpoint)

    def check_endpoint_and_invalidate(self, endpoint: str) -> None:
        """
        Clears the cache if it was filled against a different scorer endpoint.

        Args:
            endpoint: The scorer URL now in use.

        Returns:
            None
        """
        previous = self._cache.get(ENDPOINT_KEY)
        if previous is not None and previous != endpoint:
            log_with_payload(
                logging.INFO,
                LogMsg.CACHE_CLEARED,
                payload=ScorerPayload(endpoint=endpoint),
                old=previous,
                new=endpoint,
            )
            self._cache.clear()
        self._cache[ENDPOINT_KEY] = endpoint

    @property
    def directory(self) -> str:
        return self._cache.directory

    def get(self, key: str) -> Any | None:
        """Cached score record for ``key``, or ``None`` on a miss."""
        return self._cache.get(key)

    def set(self, key: str, value: Any) -> None:
        self._cache[key] = value

    def close(self) -> None:
        self._cache.close()
