"""ANX Core: card registry, lifecycle state machine, and execution engine.

A card is one registered config instance. Commands arrive over two channels
that are distinguished by API surface, not network identity:

* ``agent`` — may execute commands and read markup/state, but every byte it
  receives is redacted against the card's vault, and it can never supply a
  sensitive value, confirm a gated action, or mint a user token.
* ``human_ui`` — carries a Hub-issued user token; it alone may feed the vault,
  confirm, cancel, and resolve gates.

Lifecycle moves happen only through the published ``TRANSITIONS`` table below
(docs/state-machine.md reproduces it with commentary). ``CONFIRMING`` has no
agent-reachable exit by construction: no agent event row leaves it.
"""

from __future__ import annotations

import json
import re
import secrets
import threading
import time
from dataclasses import dataclass, field as dc_field
from enum import Enum
from typing import Any, Callable

import httpx

from .cli import CliCommand, parse_command
from .config import OPTION_VALUE_RE, AnxConfig, Option, OptionsSet, parse_config
from .errors import (
    AnxError,
    ChannelViolation,
    DatasetShapeError,
    DatasetUnreachable,
    InvalidUserToken,
    SensitiveViaAgentChannel,
    UnknownAction,
    UnknownCard,
    UnknownGate,
    UnknownNick,
    UnknownNode,
    ValidationError,
    WrongState,
)
from .markup import MASK, ViewerRole, render_markup
from .storage import Store, open_store, seal_value, unseal_value

CARD_KEY_RE = re.compile(r"^c_\d{4,}$")

DATASET_TIMEOUT_S = 5.0
DATASET_RETRIES = 1


class LifecycleState(str, Enum):
    CREATED = "CREATED"
    READY = "READY"
    EXECUTING = "EXECUTING"
    WAITING_UI = "WAITING_UI"
    CONFIRMING = "CONFIRMING"
    COMPLETED = "COMPLETED"
    FAILED = "FAILED"


S = LifecycleState

# The complete transition table. Anything not listed is rejected without a
# state change. EXECUTING is transient: it exists only while a mutating
# command holds the card's serialization lock.
TRANSITIONS: dict[tuple[LifecycleState, str], LifecycleState] = {
    (S.CREATED, "register"): S.READY,
    (S.READY, "command_begin"): S.EXECUTING,
    (S.WAITING_UI, "command_begin"): S.EXECUTING,
    (S.EXECUTING, "command_ready"): S.READY,
    (S.EXECUTING, "command_waiting_ui"): S.WAITING_UI,
    (S.EXECUTING, "command_confirming"): S.CONFIRMING,
    (S.EXECUTING, "command_completed"): S.COMPLETED,
    (S.EXECUTING, "command_failed"): S.FAILED,
    (S.READY, "sensitive_ingress"): S.READY,
    (S.WAITING_UI, "sensitive_ingress_complete"): S.READY,
    (S.WAITING_UI, "sensitive_ingress_partial"): S.WAITING_UI,
    (S.CONFIRMING, "confirm"): S.COMPLETED,
    (S.CONFIRMING, "cancel"): S.FAILED,
}

# Actions an agent may carry in a CLI command. ``confirm`` is grammatical but
# structurally rejected on the agent channel. Further mutating actions (e.g.
# the SOP engine's run_step) plug in through ``Core.action_handlers``.
BUILTIN_MUTATIONS = ("set_form", "submit")
READ_ACTIONS = ("get_markup", "get_state")


@dataclass(frozen=True)
class ChannelIdentity:
    channel: str  # "agent" | "human_ui"
    user_token: str | None = None

    def __post_init__(self) -> None:
        if self.channel not in ("agent", "human_ui"):
            raise ValueError(f"unknown channel {self.channel!r}")
        if self.channel == "agent" and self.user_token is not None:
            raise ChannelViolation("agent channel never carries a user token")

    @property
    def is_agent(self) -> bool:
        return self.channel == "agent"


AGENT = ChannelIdentity("agent")


def ui_channel(token: str) -> ChannelIdentity:
    return ChannelIdentity("human_ui", token)


@dataclass(frozen=True)
class SensitiveEntry:
    nick: str
    value: str  # plaintext only in memory; sealed before it reaches the store
    ref_token: str


@dataclass(frozen=True)
class ConfirmationGate:
    gate_id: str
    description: str
    created_at: float
    kind: str = "confirm"  # "confirm" (lifecycle gate) | "sop" (workflow gate)
    required_channel: str = "human_ui"


@dataclass(frozen=True)
class AuditEvent:
    ts: float
    card_key: str
    event: str
    channel: str
    detail: dict[str, Any] = dc_field(default_factory=dict)

    def export_record(self) -> dict[str, Any]:
        return {"ts": self.ts, "card_key": self.card_key, "event": self.event, "channel": self.channel}


@dataclass(frozen=True)
class ExecResult:
    status: str  # ok | waiting_ui | confirming | error
    body: dict[str, Any]
    new_state: LifecycleState

    def to_dict(self) -> dict[str, Any]:
        return {"status": self.status, "body": self.body, "new_state": self.new_state.value}


class _Card:
    """Mutable per-card state; every access goes through ``lock``."""

    def __init__(self, card_key: str, config: AnxConfig) -> None:
        self.card_key = card_key
        self.config = config
        self.values: dict[str, str] = {}
        self.vault: dict[str, SensitiveEntry] = {}
        self.lifecycle = LifecycleState.CREATED
        self.gates: dict[str, ConfirmationGate] = {}
        self.pending_confirmation: str | None = None  # gate_id of the lifecycle gate
        self.deferred_action: dict[str, Any] | None = None
        self.nodes: dict[str, dict[str, Any]] = {}  # node_id -> {payload, version}
        self.audit: list[AuditEvent] = []
        self.option_cache: dict[str, list[Option]] = {}
        self.lock = threading.RLock()

    def sensitive_nicks(self) -> set[str]:
        return self.config.sensitive_nicks()

    def vault_values(self) -> list[str]:
        return [e.value for e in self.vault.values()]


class Core:
    """Parser, execution engine, and state store for registered cards.

    ``token_verifier`` decides whether a human-channel user token is valid;
    wire it to a Hub. The default rejects everything (fail closed).
    """

    def __init__(
        self,
        store: Store | None = None,
        data_dir: str | None = None,
        http_client: httpx.Client | None = None,
        token_verifier: Callable[[str], bool] | None = None,
        vault_key: str = "anx-dev-vault-key",
        clock: Callable[[], float] = time.time,
    ) -> None:
        self._store = store if store is not None else open_store(data_dir)
        self._http = http_client
        self._verify_token = token_verifier
        self._vault_key = vault_key
        self._clock = clock
        self._cards: dict[str, _Card] = {}
        self._registry_lock = threading.Lock()
        self.action_handlers: dict[str, Callable[[str, str, ChannelIdentity], tuple[str, dict[str, Any]]]] = {}
        self._load()

    # -- registry ------------------------------------------------------------

    def register_card(self, config: AnxConfig | dict[str, Any] | str) -> str:
        if not isinstance(config, AnxConfig):
            config = parse_config(config)
        with self._registry_lock:
            while True:
                card_key = f"c_{secrets.randbelow(10**8):04d}"
                if CARD_KEY_RE.match(card_key) and card_key not in self._cards:
                    break
            card = _Card(card_key, config)
            self._cards[card_key] = card
        with card.lock:
            self._audit(card, "registered", "agent", title=config.title, kind=config.kind)
            self._transition(card, "register", "agent")
            self._save(card)
        return card_key

    def card_keys(self) -> list[str]:
        with self._registry_lock:
            return sorted(self._cards)

    def _card(self, card_key: str) -> _Card:
        with self._registry_lock:
            card = self._cards.get(card_key)
        if card is None:
            raise UnknownCard(f"no card {card_key!r}")
        return card

    def get_config(self, card_key: str) -> AnxConfig:
        return self._card(card_key).config

    # -- reads ----------------------------------------------------------------

    def get_markup(self, card_key: str, who: ChannelIdentity) -> str:
        card = self._card(card_key)
        with card.lock:
            if not who.is_agent:
                self._require_ui(who)
            options = self._resolve_all_options(card)
            values = dict(card.values)
            for nick, entry in card.vault.items():
                values[nick] = entry.value
            if who.is_agent:
                text = render_markup(card.config, values, card.card_key, ViewerRole.AGENT, options)
                return self._sweep_text(text, card)
            return render_markup(card.config, values, card.card_key, ViewerRole.HUMAN_UI, options)

    def get_state(self, card_key: str, who: ChannelIdentity) -> dict[str, Any]:
        card = self._card(card_key)
        with card.lock:
            if not who.is_agent:
                self._require_ui(who)
            snapshot: dict[str, Any] = {
                "card_key": card.card_key,
                "title": card.config.title,
                "kind": card.config.kind,
                "lifecycle": card.lifecycle.value,
                "values": dict(card.values),
                "sensitive": {
                    nick: {"masked": MASK, "has_ref": nick in card.vault}
                    for nick in sorted(card.sensitive_nicks())
                },
                "gates": [
                    {"gate_id": g.gate_id, "description": g.description, "kind": g.kind}
                    for g in card.gates.values()
                ],
                "audit_length": len(card.audit),
            }
            if who.is_agent:
                return self._sweep(snapshot, card)
            return snapshot

    # -- command execution ------------------------------------------------------

    def execute(self, cmd: CliCommand | str, who: ChannelIdentity) -> ExecResult:
        """Apply one CLI command. Total: protocol failures come back as
        ``status="error"`` results, never exceptions."""
        try:
            if isinstance(cmd, str):
                cmd = parse_command(cmd)
            card = self._card(cmd.card_key)
        except AnxError as exc:
            return ExecResult("error", {"error": exc.to_payload()}, LifecycleState.FAILED)

        with card.lock:
            try:
                result = self._execute_locked(card, cmd, who)
            except AnxError as exc:
                result = ExecResult("error", {"error": exc.to_payload()}, card.lifecycle)
            if who.is_agent:
                result = ExecResult(result.status, self._sweep(result.body, card), result.new_state)
            return result

    def _execute_locked(self, card: _Card, cmd: CliCommand, who: ChannelIdentity) -> ExecResult:
        action = cmd.action
        if action == "get_markup":
            return ExecResult("ok", {"markup": self.get_markup(card.card_key, who)}, card.lifecycle)
        if action == "get_state":
            return ExecResult("ok", {"state": self.get_state(card.card_key, who)}, card.lifecycle)
        if action == "confirm":
            if who.is_agent:
                raise ChannelViolation("confirmation is human-only")
            params = _params_dict(cmd.params)
            return self.confirm(card.card_key, str(params.get("gate_id", "")), who)

        if action in BUILTIN_MUTATIONS or action in self.action_handlers:
            return self._run_mutation(card, cmd, who)
        raise UnknownAction(f"unknown action {action!r}", action=action)

    def _run_mutation(self, card: _Card, cmd: CliCommand, who: ChannelIdentity) -> ExecResult:
        if card.lifecycle not in (LifecycleState.READY, LifecycleState.WAITING_UI):
            raise WrongState(card.lifecycle.value, cmd.action)
        prior = card.lifecycle
        self._transition(card, "command_begin", who.channel)
        try:
            status, body = self._apply_action(card, cmd, who)
        except AnxError as exc:
            if isinstance(exc, SensitiveViaAgentChannel):
                self._settle(card, LifecycleState.WAITING_UI, who.channel)
            else:
                self._settle(card, prior, who.channel)
            self._save(card)
            return ExecResult("error", {"error": exc.to_payload()}, card.lifecycle)

        if status == "ok":
            self._settle(card, prior, who.channel)
        elif status == "waiting_ui":
            self._settle(card, LifecycleState.WAITING_UI, who.channel)
        elif status == "confirming":
            self._settle(card, LifecycleState.CONFIRMING, who.channel)
        elif status == "completed":
            self._settle(card, LifecycleState.COMPLETED, who.channel)
            status = "ok"
        else:  # pragma: no cover - handler contract violation
            raise RuntimeError(f"handler returned unknown status {status!r}")
        self._save(card)
        return ExecResult(status, body, card.lifecycle)

    def _settle(self, card: _Card, target: LifecycleState, channel: str) -> None:
        event = {
            LifecycleState.READY: "command_ready",
            LifecycleState.WAITING_UI: "command_waiting_ui",
            LifecycleState.CONFIRMING: "command_confirming",
            LifecycleState.COMPLETED: "command_completed",
            LifecycleState.FAILED: "command_failed",
        }[target]
        self._transition(card, event, channel)

    def _apply_action(
        self, card: _Card, cmd: CliCommand, who: ChannelIdentity
    ) -> tuple[str, dict[str, Any]]:
        if cmd.action == "set_form":
            return self._action_set_form(card, cmd.params, who)
        if cmd.action == "submit":
            return self._action_submit(card, cmd.params, who)
        handler = self.action_handlers.get(cmd.action)
        if handler is None:
            raise AnxError(f"no handler for action {cmd.action!r}")
        return handler(card.card_key, cmd.params, who)

    def _action_set_form(
        self, card: _Card, params: str, who: ChannelIdentity
    ) -> tuple[str, dict[str, Any]]:
        fields = _params_dict(params)
        sensitive = card.sensitive_nicks()
        cleaned: dict[str, str] = {}
        for nick, value in fields.items():
            item = card.config.item(nick)
            if item is None:
                raise ValidationError(nick, "no such item")
            if nick in sensitive:
                if who.is_agent:
                    raise SensitiveViaAgentChannel(nick)
                raise ValidationError(nick, "sensitive values enter via the sensitive ingress")
            if item.kind == "button":
                raise ValidationError(nick, "buttons carry no value")
            value = "" if value is None else str(value)
            if item.kind == "options" and value:
                allowed = {o.value for o in self._options_for(card, item.options_set)}
                if value not in allowed:
                    raise ValidationError(nick, f"value {value!r} not in option set")
            cleaned[nick] = value
        card.values.update(cleaned)
        self._audit(card, "set_form", who.channel, nicks=sorted(cleaned))
        return "ok", {"stored": sorted(cleaned)}

    def _action_submit(
        self, card: _Card, params: str, who: ChannelIdentity
    ) -> tuple[str, dict[str, Any]]:
        action_name = str(_params_dict(params).get("action", "submit")) if params else "submit"
        missing = sorted(n for n in card.sensitive_nicks() if n not in card.vault)
        if missing:
            self._audit(card, "submit_blocked", who.channel, missing=missing)
            return "waiting_ui", {"missing_sensitive": missing}

        for item in card.config.items:
            if item.kind == "options" and card.values.get(item.nick):
                allowed = {o.value for o in self._options_for(card, item.options_set)}
                if card.values[item.nick] not in allowed:
                    raise ValidationError(item.nick, "stored value no longer in option set")

        if self._confirm_required(card.config, action_name) and card.pending_confirmation is None:
            gate = self._open_gate_locked(
                card, f"Confirm {action_name} of {card.config.title!r}", kind="confirm"
            )
            card.pending_confirmation = gate.gate_id
            card.deferred_action = {"action": action_name}
            self._audit(card, "submit_gated", who.channel, gate_id=gate.gate_id)
            return "confirming", {"gate_id": gate.gate_id, "description": gate.description}

        body = self._finalize_submission(card, action_name, who)
        return "completed", body

    @staticmethod
    def _confirm_required(config: AnxConfig, action_name: str) -> bool:
        return any(it.kind == "button" and it.tap == action_name and it.confirm for it in config.items)

    def _finalize_submission(self, card: _Card, action_name: str, who: ChannelIdentity) -> dict[str, Any]:
        record: dict[str, str] = dict(card.values)
        for nick, entry in card.vault.items():
            record[nick] = entry.ref_token
        version = self._write_node_locked(card, "submission", {"action": action_name, "fields": record})
        self._audit(card, "submit", who.channel, action=action_name, version=version)
        return {"submitted": sorted(record), "node": "submission", "version": version}

    # -- sensitive ingress (UI channel only) -------------------------------------

    def submit_sensitive(
        self, card_key: str, fields: dict[str, str], who: ChannelIdentity
    ) -> dict[str, str]:
        if who.is_agent:
            raise ChannelViolation("sensitive ingress is unreachable from the agent surface")
        self._require_ui(who)
        card = self._card(card_key)
        with card.lock:
            if card.lifecycle not in (LifecycleState.READY, LifecycleState.WAITING_UI):
                raise WrongState(card.lifecycle.value, "submit_sensitive")
            sensitive = card.sensitive_nicks()
            for nick in fields:
                item = card.config.item(nick)
                if item is None:
                    raise UnknownNick(f"no item named {nick!r}")
                if nick not in sensitive:
                    raise ValidationError(nick, "item is not sensitive")
            if not fields:
                return {}
            refs: dict[str, str] = {}
            for nick, value in fields.items():
                ref = "ref_" + secrets.token_hex(16)
                card.vault[nick] = SensitiveEntry(nick=nick, value=str(value), ref_token=ref)
                refs[nick] = ref
            self._audit(card, "sensitive_ingress", who.channel, nicks=sorted(fields))
            if card.lifecycle is LifecycleState.WAITING_UI:
                still_missing = [n for n in sensitive if n not in card.vault]
                event = "sensitive_ingress_partial" if still_missing else "sensitive_ingress_complete"
                self._transition(card, event, who.channel)
            else:
                self._transition(card, "sensitive_ingress", who.channel)
            self._save(card)
            return refs

    # -- confirmation gates --------------------------------------------------------

    def confirm(self, card_key: str, gate_id: str, who: ChannelIdentity) -> ExecResult:
        card = self._card(card_key)
        with card.lock:
            if who.is_agent:
                raise ChannelViolation("confirmation is human-only")
            self._require_ui(who)
            if card.lifecycle is not LifecycleState.CONFIRMING:
                raise WrongState(card.lifecycle.value, "confirm")
            if gate_id not in card.gates or gate_id != card.pending_confirmation:
                raise UnknownGate(f"no open lifecycle gate {gate_id!r}")
            card.gates.pop(gate_id)
            card.pending_confirmation = None
            deferred = card.deferred_action or {"action": "submit"}
            card.deferred_action = None
            self._audit(card, "confirm", who.channel, gate_id=gate_id)
            body = self._finalize_submission(card, str(deferred.get("action", "submit")), who)
            self._transition(card, "confirm", who.channel)
            self._save(card)
            return ExecResult("ok", body, card.lifecycle)

    def cancel(self, card_key: str, gate_id: str, who: ChannelIdentity) -> ExecResult:
        card = self._card(card_key)
        with card.lock:
            if who.is_agent:
                raise ChannelViolation("administrative cancel is human-only")
            self._require_ui(who)
            if card.lifecycle is not LifecycleState.CONFIRMING:
                raise WrongState(card.lifecycle.value, "cancel")
            if gate_id not in card.gates or gate_id != card.pending_confirmation:
                raise UnknownGate(f"no open lifecycle gate {gate_id!r}")
            card.gates.pop(gate_id)
            card.pending_confirmation = None
            card.deferred_action = None
            self._audit(card, "cancel", who.channel, gate_id=gate_id)
            self._transition(card, "cancel", who.channel)
            self._save(card)
            return ExecResult("ok", {"cancelled": gate_id}, card.lifecycle)

    def open_gate(self, card_key: str, description: str, kind: str = "sop") -> ConfirmationGate:
        """Attach a workflow gate to a card. Workflow gates do not move the
        card lifecycle; their channel rules match lifecycle gates."""
        card = self._card(card_key)
        with card.lock:
            gate = self._open_gate_locked(card, description, kind)
            self._save(card)
            return gate

    def _open_gate_locked(self, card: _Card, description: str, kind: str) -> ConfirmationGate:
        gate = ConfirmationGate(
            gate_id="g_" + secrets.token_hex(8),
            description=description,
            created_at=self._clock(),
            kind=kind,
        )
        card.gates[gate.gate_id] = gate
        self._audit(card, "gate_opened", "human_ui" if kind == "confirm" else "agent", gate_id=gate.gate_id, gate_kind=kind)
        return gate

    def resolve_gate(self, card_key: str, gate_id: str, who: ChannelIdentity) -> None:
        """Close a workflow gate. Human-only; token verified against the Hub."""
        card = self._card(card_key)
        with card.lock:
            if who.is_agent:
                raise ChannelViolation("gates are human-only")
            self._require_ui(who)
            gate = card.gates.get(gate_id)
            if gate is None or gate.kind != "sop":
                raise UnknownGate(f"no open workflow gate {gate_id!r}")
            card.gates.pop(gate_id)
            self._audit(card, "gate_resolved", who.channel, gate_id=gate_id)
            self._save(card)

    # -- options ----------------------------------------------------------------

    def resolve_options(self, options_set: OptionsSet, card_key: str | None = None) -> list[Option]:
        if options_set.inline is not None:
            return list(options_set.inline)
        card = self._card(card_key) if card_key else None
        if card is not None and options_set.url_dataset in card.option_cache:
            return card.option_cache[options_set.url_dataset]
        options = self._fetch_options(options_set)
        if card is not None and options_set.url_dataset is not None:
            card.option_cache[options_set.url_dataset] = options
            self._audit(card, "dataset_fetch", "agent", url=options_set.url_dataset, count=len(options))
        return options

    def _options_for(self, card: _Card, options_set: OptionsSet | None) -> list[Option]:
        if options_set is None:
            return []
        if options_set.inline is not None:
            return list(options_set.inline)
        url = options_set.url_dataset or ""
        if url in card.option_cache:
            return card.option_cache[url]
        options = self._fetch_options(options_set)
        card.option_cache[url] = options
        self._audit(card, "dataset_fetch", "agent", url=url, count=len(options))
        return options

    def _resolve_all_options(self, card: _Card) -> dict[str, list[Option]]:
        resolved: dict[str, list[Option]] = {}
        for item in card.config.items:
            if item.kind != "options" or item.options_set is None:
                continue
            if item.options_set.inline is not None:
                resolved[item.nick] = list(item.options_set.inline)
                continue
            try:
                resolved[item.nick] = self._options_for(card, item.options_set)
            except AnxError:
                pass  # leave unresolved: markup keeps the url reference
        return resolved

    def _fetch_options(self, options_set: OptionsSet) -> list[Option]:
        url = options_set.url_dataset
        assert url is not None
        client = self._http
        last_error: Exception | None = None
        for _ in range(DATASET_RETRIES + 1):
            try:
                if client is not None:
                    resp = client.get(url, timeout=DATASET_TIMEOUT_S)
                else:
                    resp = httpx.get(url, timeout=DATASET_TIMEOUT_S)
                resp.raise_for_status()
                records = resp.json()
                break
            except (httpx.HTTPError, ValueError) as exc:
                last_error = exc
        else:
            raise DatasetUnreachable(url, f"dataset fetch failed: {last_error}")
        if not isinstance(records, list):
            raise DatasetShapeError(f"dataset at {url} is not an array")
        options: list[Option] = []
        for i, rec in enumerate(records):
            if not isinstance(rec, dict) or options_set.value_nick not in rec or options_set.title_nick not in rec:
                raise DatasetShapeError(
                    f"record {i} lacks {options_set.value_nick!r}/{options_set.title_nick!r}"
                )
            value = str(rec[options_set.value_nick])
            if not OPTION_VALUE_RE.match(value):
                raise DatasetShapeError(f"record {i} value {value!r} is not attribute-safe")
            options.append(Option(value=value, title=str(rec[options_set.title_nick])))
        return options

    # -- nodes -------------------------------------------------------------------

    def write_node(self, card_key: str, node_id: str, payload: Any) -> int:
        card = self._card(card_key)
        with card.lock:
            version = self._write_node_locked(card, node_id, payload)
            self._save(card)
            return version

    def _write_node_locked(self, card: _Card, node_id: str, payload: Any) -> int:
        node = card.nodes.get(node_id)
        version = (node["version"] if node else 0) + 1
        card.nodes[node_id] = {"payload": payload, "version": version}
        self._audit(card, "node_write", "agent", node=node_id, version=version)
        return version

    def read_node(self, card_key: str, node_id: str, who: ChannelIdentity = AGENT) -> dict[str, Any]:
        card = self._card(card_key)
        with card.lock:
            node = card.nodes.get(node_id)
            if node is None:
                raise UnknownNode(f"node {node_id!r} never written")
            out = {"node": node_id, "payload": node["payload"], "version": node["version"]}
            if who.is_agent:
                return self._sweep(out, card)
            return out

    def node_snapshot(self, card_key: str) -> dict[str, Any]:
        """Latest payload per node, for decision providers (internal view)."""
        card = self._card(card_key)
        with card.lock:
            return {node_id: dict(node["payload"]) if isinstance(node["payload"], dict) else node["payload"]
                    for node_id, node in card.nodes.items()}

    # -- audit ---------------------------------------------------------------------

    def _audit(self, card: _Card, event: str, channel: str, **detail: Any) -> None:
        card.audit.append(
            AuditEvent(ts=self._clock(), card_key=card.card_key, event=event, channel=channel, detail=detail)
        )

    def audit_events(self, card_key: str) -> list[AuditEvent]:
        card = self._card(card_key)
        with card.lock:
            return list(card.audit)

    def export_audit(self, card_key: str | None = None) -> str:
        keys = [card_key] if card_key else self.card_keys()
        records: list[AuditEvent] = []
        for key in keys:
            records.extend(self.audit_events(key))
        records.sort(key=lambda e: e.ts)
        return "\n".join(json.dumps(e.export_record(), ensure_ascii=False) for e in records) + ("\n" if records else "")

    # -- lifecycle -----------------------------------------------------------------

    def _transition(self, card: _Card, event: str, channel: str) -> None:
        target = TRANSITIONS.get((card.lifecycle, event))
        if target is None:  # pragma: no cover - internal invariant
            raise RuntimeError(f"transition ({card.lifecycle}, {event}) not in table")
        if target is not card.lifecycle:
            self._audit(card, "state_change", channel,
                        **{"from": card.lifecycle.value, "to": target.value, "via": event})
        card.lifecycle = target

    # -- channel / token -------------------------------------------------------------

    def _require_ui(self, who: ChannelIdentity) -> None:
        if who.channel != "human_ui":
            raise ChannelViolation("endpoint requires the UI channel")
        if not who.user_token:
            raise InvalidUserToken("UI channel requests must carry a user token")
        if self._verify_token is None or not self._verify_token(who.user_token):
            raise InvalidUserToken("user token rejected")

    # -- redaction sweep ---------------------------------------------------------------

    def _sweep_text(self, text: str, card: _Card) -> str:
        for value in card.vault_values():
            if value:
                text = text.replace(value, MASK)
        return text

    def _sweep(self, body: dict[str, Any], card: _Card) -> dict[str, Any]:
        values = [v for v in card.vault_values() if v]
        if not values:
            return body
        blob = json.dumps(body, ensure_ascii=False)
        for value in values:
            blob = blob.replace(json.dumps(value, ensure_ascii=False)[1:-1], MASK)
        return json.loads(blob)

    # -- persistence ----------------------------------------------------------------

    def _save(self, card: _Card) -> None:
        doc = {
            "card_key": card.card_key,
            "config": card.config.to_dict(),
            "values": card.values,
            "lifecycle": card.lifecycle.value,
            "pending_confirmation": card.pending_confirmation,
            "deferred_action": card.deferred_action,
            "gates": [
                {"gate_id": g.gate_id, "description": g.description,
                 "created_at": g.created_at, "kind": g.kind}
                for g in card.gates.values()
            ],
            "nodes": card.nodes,
            "audit": [
                {"ts": e.ts, "card_key": e.card_key, "event": e.event,
                 "channel": e.channel, "detail": e.detail}
                for e in card.audit
            ],
            "vault": {
                nick: {
                    "nonce": (nonce := secrets.token_bytes(16)).hex(),
                    "sealed": seal_value(entry.value, self._vault_key, nonce),
                    "ref_token": entry.ref_token,
                }
                for nick, entry in card.vault.items()
            },
        }
        self._store.put(f"card:{card.card_key}", doc)

    def _load(self) -> None:
        for _, doc in self._store.scan("card:"):
            config = parse_config(doc["config"])
            card = _Card(doc["card_key"], config)
            card.values = dict(doc.get("values", {}))
            card.lifecycle = LifecycleState(doc.get("lifecycle", "READY"))
            card.pending_confirmation = doc.get("pending_confirmation")
            card.deferred_action = doc.get("deferred_action")
            for g in doc.get("gates", []):
                card.gates[g["gate_id"]] = ConfirmationGate(
                    gate_id=g["gate_id"], description=g["description"],
                    created_at=g["created_at"], kind=g.get("kind", "sop"),
                )
            card.nodes = {k: dict(v) for k, v in doc.get("nodes", {}).items()}
            card.audit = [
                AuditEvent(ts=e["ts"], card_key=e["card_key"], event=e["event"],
                           channel=e["channel"], detail=e.get("detail", {}))
                for e in doc.get("audit", [])
            ]
            for nick, entry in doc.get("vault", {}).items():
                value = unseal_value(entry["sealed"], self._vault_key, bytes.fromhex(entry["nonce"]))
                card.vault[nick] = SensitiveEntry(nick=nick, value=value, ref_token=entry["ref_token"])
            self._cards[card.card_key] = card


def _params_dict(params: str) -> dict[str, Any]:
    if not params.strip():
        return {}
    try:
        data = json.loads(params)
    except json.JSONDecodeError as exc:
        raise ValidationError("params", f"params must be JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError("params", "params must be a JSON object")
    return data
