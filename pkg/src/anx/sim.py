"""Scripted agent driver and representation-size bench.

``run_script`` replays a declarative step list against the agent-channel HTTP
surface only: its client simply has no way to reach the vault ingress or the
confirmation endpoints (the lone raw ``probe`` op issues bare GETs so channel
rejections can be asserted). Every request/response pair lands in the
transcript.

``compare_representations`` sizes a form twice: once with dynamic option sets
left as URL references (the runtime fetches them at execution time), and once
with the option sets mechanically expanded inline, standing in for a carrier
that must ship option data in-context. The report also prints previously
published task-incremental token figures as non-reproduced reference context;
this harness measures representation sizes only and carries no prompt
baseline of its own.
"""

from __future__ import annotations

import argparse
import json
import re
import time
from dataclasses import dataclass, field
from typing import Any

import httpx

from .config import AnxConfig, ItemDef, Option, OptionsSet, parse_config
from .errors import ExpectFailed, Transport
from .markup import ViewerRole, render_markup
from .sizing import measure_size

# Published end-to-end figures for context (thousands of tokens / seconds).
# These are reference numbers reported elsewhere, NOT reproduced by this tool.
REFERENCE_FIGURES: dict[str, Any] = {
    "note": "reference figures as reported; not reproduced by this harness",
    "prompt_baseline_k": 13.2,
    "local_baseline_tokens": 0,
    "qwen3.5-plus": {
        "task_inc_tokens_k": {"gui": 9.1, "mcp_skill": 7.4, "anx": 3.9},
        "execution_time_s": {"gui": 33.2, "mcp_skill": 30.8, "anx": 12.9},
    },
    "gpt-4o": {
        "task_inc_tokens_k": {"gui": 8.3, "mcp_skill": 6.3, "anx": 2.8},
        "execution_time_s": {"gui": 48.2, "mcp_skill": 39.0, "anx": 16.5},
    },
}

_VAR_RE = re.compile(r"\$([a-z_][a-z0-9_]*)")


class AgentSurface:
    """The only endpoints a script can reach. Sensitive ingress, confirm,
    cancel, and gate resolution do not exist on this surface."""

    def __init__(
        self,
        core_url: str,
        hub_url: str,
        core_client: httpx.Client | None = None,
        hub_client: httpx.Client | None = None,
    ) -> None:
        self.core = core_client or httpx.Client(base_url=core_url, timeout=10.0)
        self.hub = hub_client or httpx.Client(base_url=hub_url, timeout=10.0)

    def discover(self, query: str, k: int) -> httpx.Response:
        return self.hub.get("/discover", params={"q": query, "k": k})

    def manifest(self, app_id: str) -> httpx.Response:
        return self.hub.get(f"/manifest/{app_id}")

    def register(self, config: dict[str, Any]) -> httpx.Response:
        return self.core.post("/agent/register", json={"config": config})

    def get_markup(self, card_key: str) -> httpx.Response:
        return self.core.get(f"/agent/cards/{card_key}/markup")

    def get_state(self, card_key: str) -> httpx.Response:
        return self.core.get(f"/agent/cards/{card_key}/state")

    def cli(self, line: str) -> httpx.Response:
        return self.core.post("/agent/execute", json={"line": line})

    def sop_load(self, config: dict[str, Any]) -> httpx.Response:
        return self.core.post("/agent/sop/load", json={"config": config})

    def sop_status(self, run_id: str) -> httpx.Response:
        return self.core.get(f"/agent/sop/runs/{run_id}")

    def sop_complete(self, run_id: str, uuid: str, outputs: dict[str, Any]) -> httpx.Response:
        return self.core.post(
            f"/agent/sop/runs/{run_id}/complete", json={"uuid": uuid, "outputs": outputs}
        )

    def probe(self, path: str) -> httpx.Response:
        # bare GET, no token header: lets scripts demonstrate channel rejections
        return self.core.get(path)

    def close(self) -> None:
        self.core.close()
        self.hub.close()


@dataclass
class Transcript:
    steps: list[dict[str, Any]] = field(default_factory=list)

    def last_response(self) -> Any:
        return self.steps[-1]["response"] if self.steps else None

    def to_json(self) -> str:
        return json.dumps(self.steps, indent=2, ensure_ascii=False, sort_keys=True)


def run_script(
    script: dict[str, Any] | list[dict[str, Any]] | str,
    core_url: str = "http://127.0.0.1:7890",
    hub_url: str = "http://127.0.0.1:7891",
    core_client: httpx.Client | None = None,
    hub_client: httpx.Client | None = None,
) -> Transcript:
    """Execute a script against the agent surface; abort on the first failed
    expectation with the failing step index."""
    if isinstance(script, str):
        script = json.loads(script)
    steps: list[dict[str, Any]] = script["steps"] if isinstance(script, dict) else script

    surface = AgentSurface(core_url, hub_url, core_client, hub_client)
    transcript = Transcript()
    variables: dict[str, Any] = {}
    try:
        for index, raw_step in enumerate(steps):
            step = _substitute(raw_step, variables)
            op = step.get("op", "")
            record: dict[str, Any] = {"index": index, "op": op, "request": step}
            if op == "expect":
                _check_expect(step, transcript, index)
                record["response"] = {"ok": True}
                transcript.steps.append(record)
                continue
            if op == "sleep":
                time.sleep(float(step.get("ms", 0)) / 1000.0)
                record["response"] = {"slept_ms": step.get("ms", 0)}
                transcript.steps.append(record)
                continue
            try:
                resp = _dispatch(surface, op, step, variables)
            except httpx.HTTPError as exc:
                raise Transport(index, f"{op}: {exc}") from exc
            record["status_code"] = resp.status_code
            try:
                record["response"] = resp.json()
            except ValueError:
                record["response"] = {"text": resp.text}
            transcript.steps.append(record)
            _auto_save(op, record, variables)
            for name, path in (step.get("save") or {}).items():
                variables[name] = _dig(record["response"], path)
    finally:
        if core_client is None or hub_client is None:
            surface.close()
    return transcript


def _dispatch(surface: AgentSurface, op: str, step: dict[str, Any], variables: dict[str, Any]) -> httpx.Response:
    if op == "discover":
        return surface.discover(str(step.get("query", "")), int(step.get("k", 5)))
    if op == "manifest":
        return surface.manifest(str(step["app_id"]))
    if op == "register":
        config = step.get("config")
        if config is None and "app_id" in step:
            manifest = surface.manifest(str(step["app_id"])).json()
            config = manifest.get("config", {})
        return surface.register(config or {})
    if op == "get_markup":
        return surface.get_markup(str(step.get("card", variables.get("card_key", ""))))
    if op == "get_state":
        return surface.get_state(str(step.get("card", variables.get("card_key", ""))))
    if op == "cli":
        return surface.cli(str(step["line"]))
    if op == "sop_load":
        return surface.sop_load(step.get("config", {}))
    if op == "sop_status":
        return surface.sop_status(str(step.get("run_id", variables.get("run_id", ""))))
    if op == "sop_complete":
        return surface.sop_complete(
            str(step.get("run_id", variables.get("run_id", ""))),
            str(step.get("uuid", "")),
            step.get("outputs") or {},
        )
    if op == "probe":
        return surface.probe(str(step["path"]))
    raise ExpectFailed(-1, f"unknown op {op!r}")


def _auto_save(op: str, record: dict[str, Any], variables: dict[str, Any]) -> None:
    response = record.get("response")
    if not isinstance(response, dict):
        return
    if op == "register" and "card_key" in response:
        variables["card_key"] = response["card_key"]
    if op == "sop_load":
        if "run_id" in response:
            variables["run_id"] = response["run_id"]
        if "card_key" in response:
            variables["card_key"] = response["card_key"]


def _substitute(value: Any, variables: dict[str, Any]) -> Any:
    if isinstance(value, str):
        return _VAR_RE.sub(lambda m: str(variables.get(m.group(1), m.group(0))), value)
    if isinstance(value, dict):
        return {k: _substitute(v, variables) for k, v in value.items()}
    if isinstance(value, list):
        return [_substitute(v, variables) for v in value]
    return value


def _dig(obj: Any, path: str) -> Any:
    cur = obj
    for part in path.split("."):
        if isinstance(cur, list):
            cur = cur[int(part)]
        elif isinstance(cur, dict):
            cur = cur.get(part)
        else:
            return None
    return cur


def _check_expect(step: dict[str, Any], transcript: Transcript, index: int) -> None:
    response = transcript.last_response()
    path = str(step.get("path", ""))
    actual = _dig(response, path) if path else response
    if "equals" in step and actual != step["equals"]:
        raise ExpectFailed(index, f"{path}: expected {step['equals']!r}, got {actual!r}")
    if "contains" in step:
        if not isinstance(actual, str) or str(step["contains"]) not in actual:
            raise ExpectFailed(index, f"{path}: {step['contains']!r} not found in {actual!r}")
    if "absent" in step:
        blob = json.dumps(response, ensure_ascii=False)
        if str(step["absent"]) in blob:
            raise ExpectFailed(index, f"{step['absent']!r} unexpectedly present")
    if step.get("exists") and actual is None:
        raise ExpectFailed(index, f"{path}: missing")
    if "status_in" in step:
        code = transcript.steps[-1].get("status_code")
        if code not in step["status_in"]:
            raise ExpectFailed(index, f"status {code} not in {step['status_in']}")


# ---------------------------------------------------------------------------
# Representation-size bench
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BenchRow:
    option_count: int
    anx_bytes: int
    anx_tokens: int
    inlined_bytes: int
    inlined_tokens: int

    @property
    def token_delta(self) -> float:
        if self.inlined_tokens == 0:
            return 0.0
        return (self.inlined_tokens - self.anx_tokens) / self.inlined_tokens

    def to_dict(self) -> dict[str, Any]:
        return {
            "option_count": self.option_count,
            "anx": {"bytes": self.anx_bytes, "approx_tokens": self.anx_tokens},
            "inlined": {"bytes": self.inlined_bytes, "approx_tokens": self.inlined_tokens},
            "token_reduction_pct": round(self.token_delta * 100.0, 2),
        }


@dataclass(frozen=True)
class BenchReport:
    form_title: str
    rows: tuple[BenchRow, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "form_title": self.form_title,
            "rows": [r.to_dict() for r in self.rows],
            "reference_figures": REFERENCE_FIGURES,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False, sort_keys=True)


def synthetic_options(n: int) -> list[Option]:
    return [Option(value=f"v{i:03d}", title=f"Option {i:03d}") for i in range(n)]


def inline_expand(config: AnxConfig, n: int) -> AnxConfig:
    """The documented mechanical transformation: replace each URL-referenced
    option set with an inline list of ``n`` options, as a tool-call carrier
    that ships option data in-context would have to."""
    items = []
    for item in config.items:
        oset = item.options_set
        if item.kind == "options" and oset is not None and oset.is_dynamic:
            expanded = OptionsSet(
                value_nick=oset.value_nick,
                title_nick=oset.title_nick,
                inline=tuple(synthetic_options(n)),
            )
            item = ItemDef(
                nick=item.nick, kind=item.kind, sensitive=item.sensitive,
                options_set=expanded, tap=item.tap, label=item.label,
                confirm=item.confirm, extensions=item.extensions,
            )
        items.append(item)
    return AnxConfig(
        protocol=config.protocol, version=config.version, kind=config.kind,
        title=config.title, items=tuple(items), extensions=config.extensions,
    )


def compare_representations(
    form: AnxConfig | dict[str, Any] | str,
    values: dict[str, str] | None = None,
    option_counts: list[int] = [2, 50, 200],
) -> BenchReport:
    if not isinstance(form, AnxConfig):
        form = parse_config(form)
    values = values or {}
    card_key = "c_1000"
    rows = []
    anx_text = render_markup(form, values, card_key, ViewerRole.HUMAN_UI)
    anx_size = measure_size(anx_text)
    for n in option_counts:
        inlined_text = render_markup(inline_expand(form, n), values, card_key, ViewerRole.HUMAN_UI)
        inlined_size = measure_size(inlined_text)
        rows.append(BenchRow(
            option_count=n,
            anx_bytes=anx_size.bytes, anx_tokens=anx_size.approx_tokens,
            inlined_bytes=inlined_size.bytes, inlined_tokens=inlined_size.approx_tokens,
        ))
    return BenchReport(form_title=form.title, rows=tuple(rows))


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="anx-sim")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="replay a script file against live services")
    run_p.add_argument("script")
    run_p.add_argument("--core", default="http://127.0.0.1:7890")
    run_p.add_argument("--hub", default="http://127.0.0.1:7891")

    bench_p = sub.add_parser("bench", help="representation-size comparison")
    bench_p.add_argument("--form", required=True)
    bench_p.add_argument("--options", default="2,50,200")
    bench_p.add_argument("--values", default="")
    bench_p.add_argument("--out", default="")

    args = parser.parse_args(argv)
    if args.command == "run":
        with open(args.script, encoding="utf-8") as fh:
            script = json.load(fh)
        transcript = run_script(script, core_url=args.core, hub_url=args.hub)
        print(transcript.to_json())
        return 0

    with open(args.form, encoding="utf-8") as fh:
        form = parse_config(fh.read())
    values = {}
    if args.values:
        with open(args.values, encoding="utf-8") as fh:
            values = json.load(fh)
    counts = [int(x) for x in args.options.split(",") if x.strip()]
    report = compare_representations(form, values, counts)
    text = report.to_json()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
