"""Content-addressed score cache backed by an append-only JSON-lines file.

A cache key is the SHA-256 of (model id, temperature, rendered prompt), so
hits require byte-identical prompts under the same sampling settings. The
file is append-only; replaying it in order makes the last write win. A
torn final line (interrupted append) is skipped with a warning and does
not poison earlier entries.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

logger = logging.getLogger(__name__)

__all__ = ["cache_key", "CacheEntry", "ScoreCache"]


def cache_key(model_id: str, temperature: float, prompt: str) -> str:
    """Hex digest identifying one (model, temperature, prompt) request.

    Temperature is canonicalized to six decimal places before hashing so
    equal settings written by different callers collide as intended.
    """
    material = f"{model_id}\n{temperature:.6f}\n{prompt}"
    return hashlib.sha256(material.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CacheEntry:
    key_hex: str
    score: float
    raw_reply: str
    created_at: str

    def __post_init__(self) -> None:
        if not self.key_hex:
            raise ValueError("key_hex must be non-empty")
        if math.isnan(self.score) or not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score!r}")

    @classmethod
    def create(cls, key_hex: str, score: float, raw_reply: str) -> "CacheEntry":
        return cls(
            key_hex=key_hex,
            score=score,
            raw_reply=raw_reply,
            created_at=datetime.now(timezone.utc).isoformat(),
        )


_REQUIRED_FIELDS = ("key_hex", "score", "raw_reply", "created_at")


class ScoreCache:
    """Single-writer, multi-reader score store.

    All mutation funnels through one internal lock, so a ScoreCache
    instance may be shared by concurrent scoring workers. Opening a path
    loads every well-formed line; get is an in-memory lookup and put
    appends one line and flushes.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[str, CacheEntry] = {}
        self._fh = None
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        with open(self.path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    doc = json.loads(line)
                    entry = CacheEntry(
                        key_hex=doc["key_hex"],
                        score=doc["score"],
                        raw_reply=doc["raw_reply"],
                        created_at=doc["created_at"],
                    )
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    logger.warning("skipping unreadable cache line %d in %s: %s", lineno, self.path, exc)
                    continue
                self._entries[entry.key_hex] = entry

    def get(self, key_hex: str) -> CacheEntry | None:
        with self._lock:
            return self._entries.get(key_hex)

    def put(self, entry: CacheEntry) -> None:
        line = json.dumps(
            {
                "key_hex": entry.key_hex,
                "score": entry.score,
                "raw_reply": entry.raw_reply,
                "created_at": entry.created_at,
            },
            ensure_ascii=False,
        )
        with self._lock:
            if self._fh is None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                self._fh = open(self.path, "a", encoding="utf-8")
            self._fh.write(line + "\n")
            self._fh.flush()
            self._entries[entry.key_hex] = entry

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def __contains__(self, key_hex: str) -> bool:
        return self.get(key_hex) is not None

    def close(self) -> None:
        with self._lock:
            if self._fh is not None:
                self._fh.close()
                self._fh = None

    def __enter__(self) -> "ScoreCache":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
