"""The command carrier: ``anx <cardKey> <action> params``.

One line of text is the whole instruction format between an agent and a Core,
independent of platform. Parsing and formatting are exact inverses on valid
commands; a single parse/format pass canonicalizes whitespace and quoting.

The module doubles as the ``anx`` executable: it parses its arguments back
into a line, posts it to the Core named by ``ANX_CORE_URL``, and prints the
structured result.
"""

from __future__ import annotations

import json
import os
import re
import sys

from dataclasses import dataclass

from .errors import (
    AnxError,
    BadAction,
    BadCardKey,
    MissingField,
    NotAnxCommand,
    UnterminatedQuote,
)

KEY_RE = re.compile(r"^[a-z]+_\d+$")
ACTION_RE = re.compile(r"^[a-z][a-z0-9_]*$")

# Implementation profile of known actions. The grammar itself is open;
# Core validates against its own registry.
KNOWN_ACTIONS = ("set_form", "submit", "get_markup", "confirm", "get_state", "run_step")


@dataclass(frozen=True)
class CliCommand:
    card_key: str
    action: str
    params: str = ""


def parse_command(line: str) -> CliCommand:
    """Tokenize one command line.

    The params remainder may be grouped in single quotes; embedded quotes are
    escaped as ``\\'``. Quotes are stripped from the parsed value.
    """
    rest = line.strip()
    word, rest = _take_word(rest)
    if word != "anx":
        raise NotAnxCommand(f"command must start with 'anx', got {word!r}")
    card_key, rest = _take_word(rest)
    if not card_key:
        raise MissingField("missing card key")
    if not KEY_RE.match(card_key):
        raise BadCardKey(f"bad card key {card_key!r}")
    action, rest = _take_word(rest)
    if not action:
        raise MissingField("missing action")
    if not ACTION_RE.match(action):
        raise BadAction(f"bad action {action!r}")
    params = _parse_params(rest)
    return CliCommand(card_key=card_key, action=action, params=params)


def format_command(cmd: CliCommand) -> str:
    """Emit the canonical line; params are quoted iff non-empty."""
    line = f"anx {cmd.card_key} {cmd.action}"
    if cmd.params:
        line += " '" + cmd.params.replace("\\", "\\\\").replace("'", "\\'") + "'"
    return line


def _take_word(s: str) -> tuple[str, str]:
    s = s.lstrip()
    if not s:
        return "", ""
    cut = s.find(" ")
    if cut < 0:
        return s, ""
    return s[:cut], s[cut:]


def _parse_params(rest: str) -> str:
    rest = rest.strip()
    if not rest:
        return ""
    if not rest.startswith("'"):
        return rest
    out: list[str] = []
    i = 1
    while i < len(rest):
        c = rest[i]
        if c == "\\" and i + 1 < len(rest) and rest[i + 1] in ("'", "\\"):
            out.append(rest[i + 1])
            i += 2
            continue
        if c == "'":
            trailer = rest[i + 1 :].strip()
            if trailer:
                # anything after the closing quote folds into the params
                return "".join(out) + "'" + rest[i + 1 :]
            return "".join(out)
        out.append(c)
        i += 1
    raise UnterminatedQuote("params quote never closed")


# ---------------------------------------------------------------------------
# Executable entry point
# ---------------------------------------------------------------------------

EXIT_OK = 0
EXIT_PROTOCOL = 2
EXIT_TRANSPORT = 3


def main(argv: list[str] | None = None) -> int:
    args = sys.argv[1:] if argv is None else argv
    line = "anx " + " ".join(args) if args and args[0] != "anx" else " ".join(args)
    try:
        cmd = parse_command(line)
    except AnxError as exc:
        print(json.dumps({"status": "error", "error": exc.to_payload()}))
        return EXIT_PROTOCOL

    core_url = os.environ.get("ANX_CORE_URL", "http://127.0.0.1:7890")
    import httpx

    try:
        resp = httpx.post(
            core_url.rstrip("/") + "/agent/execute",
            json={"line": format_command(cmd)},
            timeout=30.0,
        )
        body = resp.json()
    except (httpx.HTTPError, ValueError) as exc:
        print(json.dumps({"status": "error", "error": {"code": "Transport", "message": str(exc)}}))
        return EXIT_TRANSPORT
    print(json.dumps(body, ensure_ascii=False, sort_keys=True))
    return EXIT_PROTOCOL if body.get("status") == "error" else EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
