"""Embedded persistence for Core and Hub state.

Two interchangeable backends: a plain dict for tests and an SQLite database
in WAL mode for durable deployments. Values are JSON documents keyed by
namespaced strings. Vault entries are additionally run through a keyed
stream cipher before they reach the store, so secrets are never written in
the clear (the key comes from the deployment, not the repository).
"""

from __future__ import annotations

import hashlib
import json
import os
import sqlite3
import threading
from typing import Any, Iterator


class MemoryStore:
    """Volatile backend; survives nothing, perfect for tests."""

    def __init__(self) -> None:
        self._data: dict[str, str] = {}
        self._lock = threading.Lock()

    def put(self, key: str, value: Any) -> None:
        with self._lock:
            self._data[key] = json.dumps(value, ensure_ascii=False)

    def get(self, key: str, default: Any = None) -> Any:
        with self._lock:
            raw = self._data.get(key)
        return default if raw is None else json.loads(raw)

    def delete(self, key: str) -> None:
        with self._lock:
            self._data.pop(key, None)

    def scan(self, prefix: str) -> Iterator[tuple[str, Any]]:
        with self._lock:
            items = [(k, v) for k, v in self._data.items() if k.startswith(prefix)]
        for k, v in sorted(items):
            yield k, json.loads(v)

    def close(self) -> None:
        pass


class SqliteStore:
    """Durable backend: one table, WAL journaling, synchronous writes."""

    def __init__(self, path: str) -> None:
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        self._conn = sqlite3.connect(path, check_same_thread=False)
        self._lock = threading.Lock()
        with self._lock:
            self._conn.execute("PRAGMA journal_mode=WAL")
            self._conn.execute("PRAGMA synchronous=NORMAL")
            self._conn.execute(
                "CREATE TABLE IF NOT EXISTS kv (key TEXT PRIMARY KEY, value TEXT NOT NULL)"
            )
            self._conn.commit()

    def put(self, key: str, value: Any) -> None:
        raw = json.dumps(value, ensure_ascii=False)
        with self._lock:
            self._conn.execute(
                "INSERT INTO kv (key, value) VALUES (?, ?) "
                "ON CONFLICT(key) DO UPDATE SET value = excluded.value",
                (key, raw),
            )
            self._conn.commit()

    def get(self, key: str, default: Any = None) -> Any:
        with self._lock:
            row = self._conn.execute("SELECT value FROM kv WHERE key = ?", (key,)).fetchone()
        return default if row is None else json.loads(row[0])

    def delete(self, key: str) -> None:
        with self._lock:
            self._conn.execute("DELETE FROM kv WHERE key = ?", (key,))
            self._conn.commit()

    def scan(self, prefix: str) -> Iterator[tuple[str, Any]]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT key, value FROM kv WHERE key >= ? AND key < ? ORDER BY key",
                (prefix, prefix + "￿"),
            ).fetchall()
        for k, v in rows:
            yield k, json.loads(v)

    def close(self) -> None:
        with self._lock:
            self._conn.close()


Store = MemoryStore | SqliteStore


def open_store(data_dir: str | None) -> Store:
    """Durable store under ``data_dir``, or memory when no directory is given."""
    if not data_dir:
        return MemoryStore()
    return SqliteStore(os.path.join(data_dir, "anx.sqlite3"))


# ---------------------------------------------------------------------------
# Vault sealing
# ---------------------------------------------------------------------------

def _keystream(key: bytes, nonce: bytes, length: int) -> bytes:
    out = bytearray()
    counter = 0
    while len(out) < length:
        out.extend(hashlib.sha256(key + nonce + counter.to_bytes(8, "big")).digest())
        counter += 1
    return bytes(out[:length])


def seal_value(plaintext: str, key: str, nonce: bytes) -> str:
    """XOR the value against a SHA-256 keystream; hex output. Keeps secrets out
    of the store's plaintext; not a substitute for audited cryptography."""
    data = plaintext.encode("utf-8")
    stream = _keystream(key.encode("utf-8"), nonce, len(data))
    return bytes(a ^ b for a, b in zip(data, stream)).hex()


def unseal_value(sealed_hex: str, key: str, nonce: bytes) -> str:
    data = bytes.fromhex(sealed_hex)
    stream = _keystream(key.encode("utf-8"), nonce, len(data))
    return bytes(a ^ b for a, b in zip(data, stream)).decode("utf-8")
