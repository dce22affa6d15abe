"""ANXHub: the Exchange layer.

Publishes application manifests into a live index, answers top-k semantic
discovery queries, mints and verifies user tokens for the UI channel, and
tracks per-step assignments so several agents can share one workflow run.

Discovery embeds title+description+tags as a TF-IDF bag of lowercased
alphanumeric tokens and ranks by cosine similarity. That choice is
deterministic and dependency-free; the ``DiscoveryIndex`` seam exists so a
learned embedder can replace it without touching callers. Responses carry
only identities and scores — full configs travel via ``get_manifest`` on
demand, which keeps discovery payloads bounded by ``k`` no matter how large
the index grows.
"""

from __future__ import annotations

import math
import re
import secrets
import threading
import time
from dataclasses import dataclass
from typing import Any, Callable

from .config import AnxConfig, parse_config
from .errors import (
    AlreadyAssigned,
    ChannelViolation,
    IllegalStatusRegression,
    InvalidUserToken,
    SchemaError,
    UnknownApp,
    UnknownRun,
    UnknownStep,
    VersionRegression,
)
from .storage import Store, open_store

_TOKEN_RE = re.compile(r"[a-z0-9]+")

DEFAULT_TOKEN_TTL_S = 3600.0

ASSIGNMENT_ORDER = ("assigned", "accepted", "done")


def _tokens(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class AppManifest:
    app_id: str
    title: str
    description: str
    tags: tuple[str, ...]
    config: AnxConfig
    version: str
    published_at: float = 0.0

    def index_text(self) -> str:
        return " ".join([self.title, self.description, *self.tags])

    def to_dict(self) -> dict[str, Any]:
        return {
            "app_id": self.app_id,
            "title": self.title,
            "description": self.description,
            "tags": list(self.tags),
            "config": self.config.to_dict(),
            "version": self.version,
            "published_at": self.published_at,
        }


def parse_manifest(doc: dict[str, Any], published_at: float = 0.0) -> AppManifest:
    app_id = doc.get("app_id")
    if not isinstance(app_id, str) or not app_id:
        raise SchemaError("app_id", "app_id required")
    title = doc.get("title")
    if not isinstance(title, str) or not title:
        raise SchemaError("title", "title required")
    version = doc.get("version")
    if not isinstance(version, str) or not re.match(r"^\d+\.\d+\.\d+$", version):
        raise SchemaError("version", f"version must be semver, got {version!r}")
    tags_raw = doc.get("tags", [])
    if not isinstance(tags_raw, list) or not all(isinstance(t, str) for t in tags_raw):
        raise SchemaError("tags", "tags must be a list of strings")
    config = parse_config(doc.get("config", {}))
    return AppManifest(
        app_id=app_id,
        title=title,
        description=str(doc.get("description", "")),
        tags=tuple(tags_raw),
        config=config,
        version=version,
        published_at=doc.get("published_at", published_at),
    )


@dataclass(frozen=True)
class DiscoveryEntry:
    app_id: str
    title: str
    score: float


@dataclass(frozen=True)
class DiscoveryResult:
    entries: tuple[DiscoveryEntry, ...]
    k: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "k": self.k,
            "entries": [
                {"app_id": e.app_id, "title": e.title, "score": round(e.score, 4)}
                for e in self.entries
            ],
        }


@dataclass(frozen=True)
class UserToken:
    token: str
    session_id: str
    issued_at: float
    ttl: float

    def to_dict(self) -> dict[str, Any]:
        return {"token": self.token, "session_id": self.session_id,
                "issued_at": self.issued_at, "ttl": self.ttl}


@dataclass
class RoutingAssignment:
    sop_run_id: str
    step_uuid: str
    agent_id: str
    status: str = "assigned"

    def to_dict(self) -> dict[str, Any]:
        return {"sop_run_id": self.sop_run_id, "step_uuid": self.step_uuid,
                "agent_id": self.agent_id, "status": self.status}


class DiscoveryIndex:
    """TF-IDF vectors over manifest text; cosine ranking, app_id tie order."""

    def __init__(self) -> None:
        self._docs: dict[str, list[str]] = {}

    def put(self, app_id: str, text: str) -> None:
        self._docs[app_id] = _tokens(text)

    def remove(self, app_id: str) -> None:
        self._docs.pop(app_id, None)

    def _idf(self) -> dict[str, float]:
        n = len(self._docs)
        df: dict[str, int] = {}
        for toks in self._docs.values():
            for t in set(toks):
                df[t] = df.get(t, 0) + 1
        return {t: math.log((1 + n) / (1 + d)) + 1.0 for t, d in df.items()}

    @staticmethod
    def _vector(tokens: list[str], idf: dict[str, float]) -> dict[str, float]:
        tf: dict[str, int] = {}
        for t in tokens:
            tf[t] = tf.get(t, 0) + 1
        return {t: c * idf[t] for t, c in tf.items() if t in idf}

    @staticmethod
    def _cosine(a: dict[str, float], b: dict[str, float]) -> float:
        if not a or not b:
            return 0.0
        dot = sum(w * b[t] for t, w in a.items() if t in b)
        na = math.sqrt(sum(w * w for w in a.values()))
        nb = math.sqrt(sum(w * w for w in b.values()))
        if na == 0.0 or nb == 0.0:
            return 0.0
        return min(1.0, max(0.0, dot / (na * nb)))

    def rank(self, query: str, k: int) -> list[tuple[str, float]]:
        idf = self._idf()
        qvec = self._vector(_tokens(query), idf)
        scored = [
            (app_id, self._cosine(qvec, self._vector(toks, idf)))
            for app_id, toks in self._docs.items()
        ]
        scored.sort(key=lambda pair: (-pair[1], pair[0]))
        return scored[:k]


class Hub:
    """Marketplace, token authority, and cross-agent step router."""

    def __init__(
        self,
        store: Store | None = None,
        data_dir: str | None = None,
        clock: Callable[[], float] = time.time,
        token_ttl: float = DEFAULT_TOKEN_TTL_S,
    ) -> None:
        self._store = store if store is not None else open_store(data_dir)
        self._clock = clock
        self._token_ttl = token_ttl
        self._lock = threading.Lock()
        self._manifests: dict[str, AppManifest] = {}
        self._index = DiscoveryIndex()
        self._tokens: dict[str, UserToken] = {}
        self._revoked: set[str] = set()
        self._runs: dict[str, set[str]] = {}
        self._assignments: dict[tuple[str, str], RoutingAssignment] = {}
        self._load()

    # -- marketplace ------------------------------------------------------------

    def publish(self, manifest: AppManifest | dict[str, Any]) -> str:
        if not isinstance(manifest, AppManifest):
            manifest = parse_manifest(manifest, published_at=self._clock())
        if manifest.published_at == 0.0:
            manifest = AppManifest(**{**manifest.__dict__, "published_at": self._clock()})
        with self._lock:
            existing = self._manifests.get(manifest.app_id)
            if existing is not None and _semver(manifest.version) < _semver(existing.version):
                raise VersionRegression(
                    f"{manifest.app_id}: {manifest.version} < indexed {existing.version}"
                )
            self._manifests[manifest.app_id] = manifest
            self._index.put(manifest.app_id, manifest.index_text())
            self._store.put(f"app:{manifest.app_id}", manifest.to_dict())
        return manifest.app_id

    def discover(self, query: str, k: int) -> DiscoveryResult:
        if k < 1:
            raise ValueError("k must be >= 1")
        with self._lock:
            ranked = self._index.rank(query, k)
            entries = tuple(
                DiscoveryEntry(app_id=app_id, title=self._manifests[app_id].title, score=score)
                for app_id, score in ranked
            )
        return DiscoveryResult(entries=entries, k=k)

    def get_manifest(self, app_id: str) -> AppManifest:
        with self._lock:
            manifest = self._manifests.get(app_id)
        if manifest is None:
            raise UnknownApp(f"no app {app_id!r}")
        return manifest

    def app_count(self) -> int:
        with self._lock:
            return len(self._manifests)

    # -- user tokens -------------------------------------------------------------

    def issue_user_token(self, session_id: str, channel: Any) -> UserToken:
        channel_name = getattr(channel, "channel", channel)
        if channel_name != "human_ui":
            raise ChannelViolation("user tokens are issued to the UI channel only")
        token = UserToken(
            token="ut_" + secrets.token_hex(16),
            session_id=session_id,
            issued_at=self._clock(),
            ttl=self._token_ttl,
        )
        with self._lock:
            self._tokens[token.token] = token
        return token

    def verify_user_token(self, token: str) -> dict[str, Any]:
        with self._lock:
            rec = self._tokens.get(token)
            revoked = token in self._revoked
        if rec is None or revoked:
            return {"valid": False}
        if self._clock() > rec.issued_at + rec.ttl:
            return {"valid": False}
        return {"valid": True, "session_id": rec.session_id}

    def is_valid_token(self, token: str) -> bool:
        return bool(self.verify_user_token(token)["valid"])

    def revoke_user_token(self, token: str) -> None:
        with self._lock:
            self._revoked.add(token)

    # -- step routing --------------------------------------------------------------

    def register_run(self, sop_run_id: str, step_uuids: list[str]) -> None:
        with self._lock:
            self._runs[sop_run_id] = set(step_uuids)

    def assign_step(self, sop_run_id: str, step_uuid: str, agent_id: str) -> RoutingAssignment:
        with self._lock:
            self._check_step(sop_run_id, step_uuid)
            key = (sop_run_id, step_uuid)
            existing = self._assignments.get(key)
            if existing is not None and existing.status != "done":
                raise AlreadyAssigned(
                    f"step {step_uuid} of run {sop_run_id} already assigned to {existing.agent_id}"
                )
            assignment = RoutingAssignment(sop_run_id, step_uuid, agent_id)
            self._assignments[key] = assignment
            return RoutingAssignment(**assignment.to_dict())

    def report_step(
        self, sop_run_id: str, step_uuid: str, agent_id: str, status: str
    ) -> RoutingAssignment:
        if status not in ASSIGNMENT_ORDER:
            raise IllegalStatusRegression(f"unknown status {status!r}")
        with self._lock:
            self._check_step(sop_run_id, step_uuid)
            assignment = self._assignments.get((sop_run_id, step_uuid))
            if assignment is None:
                raise UnknownStep(f"step {step_uuid} of run {sop_run_id} has no assignment")
            if ASSIGNMENT_ORDER.index(status) <= ASSIGNMENT_ORDER.index(assignment.status):
                raise IllegalStatusRegression(
                    f"cannot move {assignment.status} -> {status}"
                )
            if ASSIGNMENT_ORDER.index(status) - ASSIGNMENT_ORDER.index(assignment.status) > 1:
                raise IllegalStatusRegression(
                    f"cannot skip from {assignment.status} to {status}"
                )
            assignment.status = status
            assignment.agent_id = agent_id or assignment.agent_id
            return RoutingAssignment(**assignment.to_dict())

    def get_assignment(self, sop_run_id: str, step_uuid: str) -> RoutingAssignment | None:
        with self._lock:
            a = self._assignments.get((sop_run_id, step_uuid))
            return RoutingAssignment(**a.to_dict()) if a else None

    def _check_step(self, sop_run_id: str, step_uuid: str) -> None:
        steps = self._runs.get(sop_run_id)
        if steps is None:
            raise UnknownRun(f"run {sop_run_id!r} not registered")
        if step_uuid not in steps:
            raise UnknownStep(f"run {sop_run_id!r} has no step {step_uuid!r}")

    # -- persistence ------------------------------------------------------------------

    def _load(self) -> None:
        for _, doc in self._store.scan("app:"):
            manifest = parse_manifest(doc)
            self._manifests[manifest.app_id] = manifest
            self._index.put(manifest.app_id, manifest.index_text())


def _semver(version: str) -> tuple[int, int, int]:
    major, minor, patch = version.split(".")
    return int(major), int(minor), int(patch)
