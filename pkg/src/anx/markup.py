"""Compact tagged text encoding for cards: parse, render, redact.

The grammar (published in docs/markup-grammar.md) is line-oriented:

    <x KIND TOKEN... name="value"...>      block element, closed by </x>
    <x KIND ...>inline text</x>            inline element, one line
    anything else                          text line

``KIND`` is one of form/sop/input/textarea/options/option/button; a leading
integer token marks an option row (its render-order ordinal). Text content is
opaque Markdown-flavored prose; a literal ``<`` is escaped as ``\\<`` and a
literal backslash as ``\\\\`` so canonical serialization round-trips
byte-exactly. Values bind to field nicks through the ``**nick:** value``
convention, which is what redaction keys on.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum

from .config import AnxConfig, ItemDef, Option
from .errors import BadCardKey, UnbalancedTag, UnknownNick, UnknownTagKind

MASK = "▒▒▒"  # ▒▒▒ — never appears in legitimate values

CARD_KEY_RE = re.compile(r"^c_\d+$")
KEY_RE = re.compile(r"^[a-z]+_\d+$")

NODE_KINDS = ("form", "sop", "input", "textarea", "options", "option", "button", "text")
_WORD_KINDS = ("form", "sop", "input", "textarea", "options", "button")

_OPEN_RE = re.compile(r"^<x((?: [^ >]+)*)>$")
_INLINE_RE = re.compile(r"^<x((?: [^ >]+)*)>(.*)</x>$")
_CLOSE = "</x>"
_NAMED_ATTR_RE = re.compile(r'^([A-Za-z_][A-Za-z0-9_-]*)="([^"]*)"$')
_BOLD_NICK_RE = re.compile(r"^\*\*([A-Za-z_][A-Za-z0-9_]*):\*\*(.*)$", re.S)


class ViewerRole(Enum):
    """Who the serialized document is for. Agent views are post-redaction."""

    AGENT = "agent"
    HUMAN_UI = "human_ui"


Attr = str | tuple[str, str]


@dataclass(frozen=True)
class MarkupNode:
    """One element or text run. ``head`` holds open-tag tokens after the kind
    (for option nodes it holds all tokens, starting with the ordinal)."""

    kind: str
    head: tuple[Attr, ...] = ()
    text: str = ""
    children: tuple["MarkupNode", ...] = ()
    inline: bool = True

    @property
    def key(self) -> str | None:
        for tok in self.head:
            if isinstance(tok, str) and KEY_RE.match(tok):
                return tok
        return None

    def attr(self, name: str) -> str | None:
        for tok in self.head:
            if isinstance(tok, tuple) and tok[0] == name:
                return tok[1]
        return None


@dataclass(frozen=True)
class AnxMarkupDoc:
    root: MarkupNode

    @property
    def card_key(self) -> str:
        return self.root.key or ""


def text_node(text: str) -> MarkupNode:
    return MarkupNode(kind="text", text=text)


# ---------------------------------------------------------------------------
# Escaping
# ---------------------------------------------------------------------------

def escape_text(s: str) -> str:
    return s.replace("\\", "\\\\").replace("<", "\\<")


def unescape_text(s: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(s):
        c = s[i]
        if c == "\\" and i + 1 < len(s) and s[i + 1] in ("\\", "<"):
            out.append(s[i + 1])
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


# ---------------------------------------------------------------------------
# Serialization (the one canonical writer)
# ---------------------------------------------------------------------------

def serialize(doc: AnxMarkupDoc) -> str:
    """Emit canonical text: LF line endings, single-space attribute separation,
    trailing newline. ``parse_markup(serialize(d))`` reproduces ``d``."""
    lines: list[str] = []
    _emit(doc.root, lines)
    return "\n".join(lines) + "\n"


def _emit(node: MarkupNode, lines: list[str]) -> None:
    if node.kind == "text":
        for line in node.text.split("\n"):
            lines.append(escape_text(line))
        return
    open_tag = "<x" + "".join(" " + _attr_token(a) for a in _head_tokens(node)) + ">"
    if node.inline:
        lines.append(open_tag + escape_text(node.text) + _CLOSE)
    else:
        lines.append(open_tag)
        for child in node.children:
            _emit(child, lines)
        lines.append(_CLOSE)


def _head_tokens(node: MarkupNode) -> tuple[Attr, ...]:
    if node.kind == "option":
        return node.head
    return (node.kind, *node.head)


def _attr_token(a: Attr) -> str:
    if isinstance(a, tuple):
        return f'{a[0]}="{a[1]}"'
    return a


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def parse_markup(text: str) -> AnxMarkupDoc:
    """Parse a document into a node tree.

    Total over arbitrary input: returns a document or raises a positioned
    :class:`UnbalancedTag` / :class:`UnknownTagKind`, never anything else.
    """
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()  # canonical trailing newline

    root: MarkupNode | None = None
    # stack of (kind, head, children, open_line)
    stack: list[tuple[str, tuple[Attr, ...], list[MarkupNode], int]] = []
    pending_text: list[str] = []

    def flush_text() -> None:
        if pending_text:
            node = text_node("\n".join(pending_text))
            pending_text.clear()
            _append_child(node)

    def _append_child(node: MarkupNode) -> None:
        nonlocal root
        if stack:
            stack[-1][2].append(node)
        elif root is None and node.kind != "text":
            root = node
        else:
            raise UnbalancedTag("content outside the root element", lineno, 1)

    lineno = 0
    for lineno, raw in enumerate(lines, start=1):
        if raw == _CLOSE:
            flush_text()
            if not stack:
                raise UnbalancedTag("closing tag without an open element", lineno, 1)
            kind, head, children, _ = stack.pop()
            _append_child(MarkupNode(kind=kind, head=head, children=tuple(children), inline=False))
            continue
        m = _INLINE_RE.match(raw)
        if m:
            flush_text()
            kind, head = _parse_attrs(m.group(1), lineno, in_options=_in_options(stack))
            _append_child(MarkupNode(kind=kind, head=head, text=unescape_text(m.group(2)), inline=True))
            continue
        m = _OPEN_RE.match(raw)
        if m:
            flush_text()
            kind, head = _parse_attrs(m.group(1), lineno, in_options=_in_options(stack))
            stack.append((kind, head, [], lineno))
            continue
        if stack:
            pending_text.append(unescape_text(raw))
        elif raw == "" and root is not None:
            continue  # stray blank after the document
        elif root is None and raw == "":
            continue
        else:
            raise UnbalancedTag("text outside the root element", lineno, 1)

    if stack:
        raise UnbalancedTag(
            f"element opened on line {stack[-1][3]} never closed", lineno + 1, 1
        )
    if root is None:
        raise UnbalancedTag("no root element", max(lineno, 1), 1)
    if root.kind not in ("form", "sop"):
        raise UnknownTagKind(f"root must be a form or sop element, got {root.kind!r}", 1, 4)
    return AnxMarkupDoc(root=root)


def _in_options(stack: list[tuple[str, tuple[Attr, ...], list[MarkupNode], int]]) -> bool:
    return bool(stack) and stack[-1][0] == "options"


def _parse_attrs(blob: str, lineno: int, in_options: bool) -> tuple[str, tuple[Attr, ...]]:
    tokens = blob.split(" ")[1:] if blob else []
    if not tokens:
        raise UnknownTagKind("tag has no kind token", lineno, 3)
    parsed: list[Attr] = []
    for tok in tokens:
        m = _NAMED_ATTR_RE.match(tok)
        parsed.append((m.group(1), m.group(2)) if m else tok)

    first = parsed[0]
    if isinstance(first, str) and first.isdigit():
        if not in_options:
            raise UnknownTagKind("option row outside an options element", lineno, 4)
        return "option", tuple(parsed)
    if not isinstance(first, str) or first not in _WORD_KINDS:
        raise UnknownTagKind(f"unknown tag kind {first!r}", lineno, 4)
    return first, tuple(parsed[1:])


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def render_markup(
    config: AnxConfig,
    values: dict[str, str],
    card_key: str,
    viewer: ViewerRole,
    options: dict[str, list[Option]] | None = None,
) -> str:
    """Render a config (plus current values) to canonical markup.

    ``options`` supplies resolved option lists for dynamic sets; a dynamic set
    left unresolved renders as a bare ``url=".."`` reference. Agent viewers get
    sensitive values replaced by the mask token during construction.
    """
    doc = build_doc(config, values, card_key, viewer, options)
    return serialize(doc)


def build_doc(
    config: AnxConfig,
    values: dict[str, str],
    card_key: str,
    viewer: ViewerRole,
    options: dict[str, list[Option]] | None = None,
) -> AnxMarkupDoc:
    if not CARD_KEY_RE.match(card_key):
        raise BadCardKey(f"card key must match c_<digits>, got {card_key!r}")
    nicks = {it.nick for it in config.items}
    for nick in values:
        if nick not in nicks:
            raise UnknownNick(f"no item named {nick!r}")

    children: list[MarkupNode] = []
    header = f"## {config.title}"
    description = config.extensions.get("description")
    if isinstance(description, str) and description:
        header += "\n" + description
    children.append(text_node(header))

    if config.kind == "sop":
        for step in config.steps:
            line = f"- {step.uuid} {step.nick} [{step.kind}]"
            if step.start:
                line += " start"
            if step.sources:
                line += " after " + ",".join(step.sources)
            children.append(text_node(line))
        root = MarkupNode(kind="sop", head=(card_key,), children=tuple(children), inline=False)
        return AnxMarkupDoc(root=root)

    digits = card_key[2:]
    for idx, item in enumerate(config.items):
        item_key = f"i_{digits}{idx:02d}"
        children.append(_render_item(item, item_key, values.get(item.nick), viewer, options))
    root = MarkupNode(kind="form", head=(card_key,), children=tuple(children), inline=False)
    return AnxMarkupDoc(root=root)


def _shown_value(item: ItemDef, value: str | None, viewer: ViewerRole) -> str:
    if value is None or value == "":
        return ""
    if item.sensitive and viewer is ViewerRole.AGENT:
        return " " + MASK
    return " " + value


def _render_item(
    item: ItemDef,
    item_key: str,
    value: str | None,
    viewer: ViewerRole,
    options: dict[str, list[Option]] | None,
) -> MarkupNode:
    if item.kind in ("input", "textarea"):
        return MarkupNode(
            kind=item.kind, head=(item_key,),
            text=f"**{item.nick}:**{_shown_value(item, value, viewer)}", inline=True,
        )
    if item.kind == "options":
        oset = item.options_set
        resolved: list[Option] | None = None
        if options is not None and item.nick in options:
            resolved = options[item.nick]
        elif oset is not None and oset.inline is not None:
            resolved = list(oset.inline)
        head: tuple[Attr, ...] = (item_key,)
        if resolved is None and oset is not None and oset.url_dataset:
            head = (item_key, ("url", oset.url_dataset))
        kids: list[MarkupNode] = [
            text_node(f"**{item.nick}:**{_shown_value(item, value, viewer)}"),
            MarkupNode(kind="option", head=("0",), text=f" Please select {item.nick}", inline=True),
        ]
        for i, opt in enumerate(resolved or [], start=1):
            kids.append(
                MarkupNode(kind="option", head=(str(i), opt.value), text=f" {opt.title}", inline=True)
            )
        return MarkupNode(kind="options", head=head, children=tuple(kids), inline=False)
    # button
    label = item.label or item.nick
    head = (item_key,) if item.tap is None else (item_key, ("tap", item.tap))
    body = f"[{label}](/{item.tap})" if item.tap else label
    return MarkupNode(kind="button", head=head, children=(text_node(body),), inline=False)


# ---------------------------------------------------------------------------
# Redaction
# ---------------------------------------------------------------------------

def redact(doc: AnxMarkupDoc, sensitive_nicks: set[str]) -> AnxMarkupDoc:
    """Return a copy with every value bound to a sensitive nick replaced by the
    mask token. Structure (tags, keys, order) is unchanged; unknown nicks are
    ignored."""
    if not sensitive_nicks:
        return doc
    return AnxMarkupDoc(root=_redact_node(doc.root, sensitive_nicks))


def _redact_node(node: MarkupNode, nicks: set[str]) -> MarkupNode:
    if node.kind == "text":
        masked = "\n".join(_mask_line(line, nicks) for line in node.text.split("\n"))
        return node if masked == node.text else replace(node, text=masked)
    text = node.text
    if node.inline and node.kind in ("input", "textarea", "options"):
        text = _mask_line(text, nicks)
    children = tuple(_redact_node(c, nicks) for c in node.children)
    if text == node.text and children == node.children:
        return node
    return replace(node, text=text, children=children)


def _mask_line(line: str, nicks: set[str]) -> str:
    m = _BOLD_NICK_RE.match(line)
    if m and m.group(1) in nicks and m.group(2).strip():
        return f"**{m.group(1)}:** {MASK}"
    return line
