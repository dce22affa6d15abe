"""Declarative application definitions: the Expression layer's canonical source.

A config document is JSON-shaped, carries ``protocol: "ANX"`` and a semver
``version``, and is either a ``form`` (ordered field items) or a ``sop``
(ordered workflow steps). Unknown fields are preserved in an extensions bag:
the protocol is open, so we round-trip what we do not understand.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any

from .errors import ConfigSyntaxError, SchemaError

PROTOCOL_NAME = "ANX"

SEMVER_RE = re.compile(r"^\d+\.\d+\.\d+$")
IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
# option values become bare markup attribute tokens; keep them tag-safe
OPTION_VALUE_RE = re.compile(r'^[^\s"<>]+$')

ITEM_KINDS = ("input", "textarea", "options", "button")
VALUE_KINDS = ("input", "textarea", "options")
STEP_KINDS = ("form", "condition", "action", "human_gate")


@dataclass(frozen=True)
class Option:
    """One selectable choice. ``value`` is the stable key, ``title`` the label."""

    value: str
    title: str


@dataclass(frozen=True)
class OptionsSet:
    """Either an inline option list or a URL the runtime resolves on demand."""

    value_nick: str
    title_nick: str
    inline: tuple[Option, ...] | None = None
    url_dataset: str | None = None

    @property
    def is_dynamic(self) -> bool:
        return self.url_dataset is not None


@dataclass(frozen=True)
class ItemDef:
    nick: str
    kind: str
    sensitive: bool = False
    options_set: OptionsSet | None = None
    tap: str | None = None
    label: str | None = None
    confirm: bool = False
    extensions: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class CaseArm:
    when: str
    targets: tuple[str, ...]


@dataclass(frozen=True)
class StepDef:
    uuid: str
    nick: str
    kind: str = "action"
    start: bool = False
    sources: tuple[str, ...] = ()
    sources_join: str = "all"
    case: tuple[CaseArm, ...] = ()
    targets: tuple[str, ...] = ()
    items: tuple[ItemDef, ...] = ()
    extensions: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class AnxConfig:
    protocol: str
    version: str
    kind: str
    title: str
    items: tuple[ItemDef, ...] = ()
    steps: tuple[StepDef, ...] = ()
    extensions: dict[str, Any] = field(default_factory=dict)

    def item(self, nick: str) -> ItemDef | None:
        for it in self.items:
            if it.nick == nick:
                return it
        return None

    def step(self, uuid: str) -> StepDef | None:
        for st in self.steps:
            if st.uuid == uuid:
                return st
        return None

    def sensitive_nicks(self) -> set[str]:
        return {it.nick for it in self.items if it.sensitive}

    def to_dict(self) -> dict[str, Any]:
        """Re-emit a JSON-shaped document equivalent to the parsed input."""
        doc: dict[str, Any] = {
            "protocol": self.protocol,
            "version": self.version,
            "kind": self.kind,
            "title": self.title,
        }
        doc.update(self.extensions)
        if self.kind == "form":
            doc["items"] = [_item_to_dict(it) for it in self.items]
        else:
            doc["steps"] = [_step_to_dict(st) for st in self.steps]
        return doc


def _item_to_dict(it: ItemDef) -> dict[str, Any]:
    d: dict[str, Any] = {"nick": it.nick, "kind": it.kind}
    if it.sensitive:
        d["sensitive"] = True
    if it.options_set is not None:
        os_: dict[str, Any] = {
            "valueNick": it.options_set.value_nick,
            "titleNick": it.options_set.title_nick,
        }
        if it.options_set.url_dataset is not None:
            os_["dataset"] = {"url_dataset": it.options_set.url_dataset}
        else:
            os_["dataset"] = [
                {"value": o.value, "title": o.title} for o in it.options_set.inline or ()
            ]
        d["optionsSet"] = os_
    if it.tap is not None:
        d["tap"] = it.tap
    if it.label is not None:
        d["label"] = it.label
    if it.confirm:
        d["confirm"] = True
    d.update(it.extensions)
    return d


def _step_to_dict(st: StepDef) -> dict[str, Any]:
    d: dict[str, Any] = {"uuid": st.uuid, "nick": st.nick, "kind": st.kind}
    if st.start:
        d["start"] = True
    if st.sources:
        d["sources"] = list(st.sources)
    if st.sources_join != "all":
        d["sources_join"] = st.sources_join
    if st.case:
        d["case"] = [{"when": a.when, "targets": list(a.targets)} for a in st.case]
    if st.targets:
        d["targets"] = list(st.targets)
    if st.items:
        d["items"] = [_item_to_dict(it) for it in st.items]
    d.update(st.extensions)
    return d


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_CONFIG_KEYS = {"protocol", "version", "kind", "title", "items", "steps"}
_ITEM_KEYS = {"nick", "name", "kind", "sensitive", "type", "optionsSet", "tap", "label", "confirm"}
_STEP_KEYS = {"uuid", "nick", "kind", "start", "sources", "sources_join", "case", "targets", "items"}


def parse_config(text: str | bytes | dict[str, Any]) -> AnxConfig:
    """Parse and validate a config document.

    Accepts raw JSON text or an already-decoded mapping. Raises
    :class:`ConfigSyntaxError` for malformed text and :class:`SchemaError`
    (with a dotted field path) for structural violations.
    """
    if isinstance(text, (str, bytes)):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigSyntaxError(f"not valid JSON: {exc}") from exc
    else:
        raw = text
    if not isinstance(raw, dict):
        raise SchemaError("$", "document must be an object")

    protocol = raw.get("protocol")
    if protocol != PROTOCOL_NAME:
        raise SchemaError("protocol", f"protocol must be {PROTOCOL_NAME!r}, got {protocol!r}")
    version = raw.get("version")
    if not isinstance(version, str) or not SEMVER_RE.match(version):
        raise SchemaError("version", f"version must be MAJOR.MINOR.PATCH, got {version!r}")
    kind = raw.get("kind")
    if kind not in ("form", "sop"):
        raise SchemaError("kind", f"kind must be 'form' or 'sop', got {kind!r}")
    title = raw.get("title")
    if not isinstance(title, str) or not title:
        raise SchemaError("title", "title must be a non-empty string")

    extensions = {k: v for k, v in raw.items() if k not in _CONFIG_KEYS}

    if kind == "form":
        if raw.get("steps"):
            raise SchemaError("steps", "kind=form must not define steps")
        items_raw = raw.get("items")
        if not isinstance(items_raw, list) or not items_raw:
            raise SchemaError("items", "kind=form requires a non-empty items list")
        items = tuple(
            _parse_item(d, f"items[{i}]") for i, d in enumerate(items_raw)
        )
        _check_unique([it.nick for it in items], "items")
        return AnxConfig(protocol, version, kind, title, items=items, extensions=extensions)

    if raw.get("items"):
        raise SchemaError("items", "kind=sop must not define top-level items")
    steps_raw = raw.get("steps")
    if not isinstance(steps_raw, list) or not steps_raw:
        raise SchemaError("steps", "kind=sop requires a non-empty steps list")
    steps = tuple(_parse_step(d, f"steps[{i}]") for i, d in enumerate(steps_raw))
    _check_unique([st.uuid for st in steps], "steps", what="uuid")
    _check_unique([st.nick for st in steps], "steps")
    return AnxConfig(protocol, version, kind, title, steps=steps, extensions=extensions)


def _check_unique(values: list[str], path: str, what: str = "nick") -> None:
    seen: set[str] = set()
    for i, v in enumerate(values):
        if v in seen:
            raise SchemaError(f"{path}[{i}].{what}", f"duplicate {what} {v!r}")
        seen.add(v)


def _parse_item(d: Any, path: str) -> ItemDef:
    if not isinstance(d, dict):
        raise SchemaError(path, "item must be an object")
    # "name" is accepted as an alias for "nick" on items.
    nick = d.get("nick", d.get("name"))
    if not isinstance(nick, str) or not IDENT_RE.match(nick):
        raise SchemaError(f"{path}.nick", f"nick must be an identifier, got {nick!r}")
    kind = d.get("kind")
    if kind not in ITEM_KINDS:
        raise SchemaError(f"{path}.kind", f"kind must be one of {ITEM_KINDS}, got {kind!r}")

    sensitive = bool(d.get("sensitive", False))
    if d.get("type") == "sensitive":  # legacy marking style
        sensitive = True
    if sensitive and kind not in VALUE_KINDS:
        raise SchemaError(f"{path}.sensitive", f"sensitive not allowed on kind={kind!r}")

    options_set: OptionsSet | None = None
    if kind == "options":
        if "optionsSet" not in d:
            raise SchemaError(f"{path}.optionsSet", "kind=options requires optionsSet")
        options_set = _parse_options_set(d["optionsSet"], f"{path}.optionsSet")
    elif "optionsSet" in d:
        raise SchemaError(f"{path}.optionsSet", f"optionsSet not allowed on kind={kind!r}")

    tap = d.get("tap")
    if tap is not None:
        if kind != "button":
            raise SchemaError(f"{path}.tap", "tap is only allowed on buttons")
        if not isinstance(tap, str) or not IDENT_RE.match(tap):
            raise SchemaError(f"{path}.tap", f"tap must be an identifier, got {tap!r}")

    label = d.get("label")
    if label is not None and not isinstance(label, str):
        raise SchemaError(f"{path}.label", "label must be a string")

    confirm = bool(d.get("confirm", False))
    extensions = {k: v for k, v in d.items() if k not in _ITEM_KEYS}
    return ItemDef(
        nick=nick, kind=kind, sensitive=sensitive, options_set=options_set,
        tap=tap, label=label, confirm=confirm, extensions=extensions,
    )


def _parse_options_set(d: Any, path: str) -> OptionsSet:
    if not isinstance(d, dict):
        raise SchemaError(path, "optionsSet must be an object")
    value_nick = d.get("valueNick")
    title_nick = d.get("titleNick")
    if not isinstance(value_nick, str) or not value_nick:
        raise SchemaError(f"{path}.valueNick", "valueNick required")
    if not isinstance(title_nick, str) or not title_nick:
        raise SchemaError(f"{path}.titleNick", "titleNick required")
    if value_nick == title_nick:
        raise SchemaError(f"{path}.titleNick", "valueNick and titleNick must differ")

    dataset = d.get("dataset")
    url = d.get("url_dataset")
    if isinstance(dataset, dict) and "url_dataset" in dataset:
        if url is not None:
            raise SchemaError(f"{path}.url_dataset", "url_dataset given twice")
        url = dataset["url_dataset"]
        dataset = None

    if url is not None and dataset is not None:
        raise SchemaError(path, "exactly one of inline dataset or url_dataset allowed")
    if url is not None:
        if not isinstance(url, str) or not url.startswith(("http://", "https://")):
            raise SchemaError(f"{path}.url_dataset", f"not a URL: {url!r}")
        return OptionsSet(value_nick=value_nick, title_nick=title_nick, url_dataset=url)

    if not isinstance(dataset, list):
        raise SchemaError(f"{path}.dataset", "inline dataset must be a list")
    options: list[Option] = []
    seen: set[str] = set()
    for i, rec in enumerate(dataset):
        if not isinstance(rec, dict) or "value" not in rec or "title" not in rec:
            raise SchemaError(f"{path}.dataset[{i}]", "inline option needs value and title")
        value = str(rec["value"])
        if not OPTION_VALUE_RE.match(value):
            raise SchemaError(
                f"{path}.dataset[{i}].value",
                f"option value {value!r} must be attribute-safe (no spaces, quotes, '<' or '>')",
            )
        if value in seen:
            raise SchemaError(f"{path}.dataset[{i}].value", f"duplicate option value {value!r}")
        seen.add(value)
        options.append(Option(value=value, title=str(rec["title"])))
    return OptionsSet(value_nick=value_nick, title_nick=title_nick, inline=tuple(options))


def _parse_step(d: Any, path: str) -> StepDef:
    if not isinstance(d, dict):
        raise SchemaError(path, "step must be an object")
    uuid = d.get("uuid")
    if not isinstance(uuid, str) or not IDENT_RE.match(uuid):
        raise SchemaError(f"{path}.uuid", f"uuid must be an identifier, got {uuid!r}")
    nick = d.get("nick", uuid)
    if not isinstance(nick, str) or not nick:
        raise SchemaError(f"{path}.nick", "nick must be a non-empty string")

    kind = d.get("kind", "action")
    if kind not in STEP_KINDS:
        raise SchemaError(f"{path}.kind", f"kind must be one of {STEP_KINDS}, got {kind!r}")

    start = bool(d.get("start", False))
    sources = _parse_uuid_list(d.get("sources", []), f"{path}.sources")
    join = d.get("sources_join", "all")
    if join not in ("all", "any"):
        raise SchemaError(f"{path}.sources_join", f"sources_join must be all|any, got {join!r}")
    targets = _parse_uuid_list(d.get("targets", []), f"{path}.targets")

    case_raw = d.get("case", [])
    if kind == "condition":
        if not isinstance(case_raw, list) or not case_raw:
            raise SchemaError(f"{path}.case", "condition steps require a non-empty case list")
    elif case_raw:
        raise SchemaError(f"{path}.case", f"case not allowed on kind={kind!r}")
    arms: list[CaseArm] = []
    for i, arm in enumerate(case_raw):
        if not isinstance(arm, dict) or not isinstance(arm.get("when"), str):
            raise SchemaError(f"{path}.case[{i}].when", "case arm requires a when predicate")
        arm_targets = _parse_uuid_list(arm.get("targets", []), f"{path}.case[{i}].targets")
        if not arm_targets:
            raise SchemaError(f"{path}.case[{i}].targets", "case arm targets must be non-empty")
        arms.append(CaseArm(when=arm["when"], targets=arm_targets))

    items_raw = d.get("items", [])
    items = tuple(
        _parse_item(it, f"{path}.items[{i}]") for i, it in enumerate(items_raw)
    )
    if items:
        _check_unique([it.nick for it in items], f"{path}.items")

    extensions = {k: v for k, v in d.items() if k not in _STEP_KEYS}
    return StepDef(
        uuid=uuid, nick=nick, kind=kind, start=start, sources=sources,
        sources_join=join, case=tuple(arms), targets=targets, items=items,
        extensions=extensions,
    )


def _parse_uuid_list(raw: Any, path: str) -> tuple[str, ...]:
    if not isinstance(raw, list):
        raise SchemaError(path, "must be a list of step uuids")
    out: list[str] = []
    for i, u in enumerate(raw):
        if not isinstance(u, str) or not IDENT_RE.match(u):
            raise SchemaError(f"{path}[{i}]", f"not a step uuid: {u!r}")
        out.append(u)
    return tuple(out)
