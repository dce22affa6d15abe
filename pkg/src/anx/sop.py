"""Deterministic SOP engine: step graphs with static and dynamic control flow.

Control-flow semantics (docs/sop-semantics.md is the normative write-up):

* ``sources`` are static dependencies. For a pending step, each source edge is
  *satisfied* (source completed, and — if the edge is also a routing edge —
  the route selected this step), *skipped* (source skipped, or completed
  without selecting this step), or *pending*. With ``sources_join: all`` the
  step fires when no edge is pending and at least one is satisfied; with
  ``any`` it fires on the first satisfied edge. Skipped edges never block.
* ``targets`` and condition ``case`` arms are dynamic routing. A step without
  sources (other than the start step) fires only when a resolved route selects
  it. Where a routing edge and a source edge coincide, routing wins: the
  source completing is not enough, it must also have selected the step.
* A pending step is marked ``skipped`` as soon as no optimistic future can
  fire it — evaluated to a fixpoint after every completion or resolution.

Condition steps auto-evaluate through the run's decision provider the moment
they become ready. Human-gate steps block the run until a UI-channel
resolution arrives; the backing card's gate machinery enforces the channel
and token rules in one place.
"""

from __future__ import annotations

import json
import re
import secrets
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable

from .config import AnxConfig, StepDef, parse_config
from .core import ChannelIdentity, Core
from .errors import (
    AnxError,
    DanglingRef,
    MultipleStartSteps,
    NoStartStep,
    ProviderMissing,
    ProviderOutOfBounds,
    SourcesCycle,
    UnknownRun,
    UnreachableStep,
    WrongKind,
    WrongStatus,
)


class StepStatus(str, Enum):
    PENDING = "pending"
    READY = "ready"
    RUNNING = "running"
    COMPLETED = "completed"
    SKIPPED = "skipped"
    BLOCKED_ON_HUMAN = "blocked_on_human"
    FAILED = "failed"


TERMINAL = (StepStatus.COMPLETED, StepStatus.SKIPPED)


@dataclass(frozen=True)
class TraceEvent:
    ts: float
    run_id: str
    step: str
    event: str
    actor: str
    channel: str
    detail: dict[str, Any] = field(default_factory=dict)

    def export_record(self) -> dict[str, Any]:
        return {"ts": self.ts, "run_id": self.run_id, "step": self.step,
                "event": self.event, "actor": self.actor, "channel": self.channel}

    def signature(self) -> tuple[str, str, str, str, str]:
        detail = {k: v for k, v in self.detail.items() if k not in ("gate_id",)}
        return (self.step, self.event, self.actor, self.channel,
                json.dumps(detail, sort_keys=True))


@dataclass(frozen=True)
class SopDefinition:
    config: AnxConfig
    start_uuid: str

    @property
    def steps(self) -> tuple[StepDef, ...]:
        return self.config.steps

    def step(self, uuid: str) -> StepDef:
        st = self.config.step(uuid)
        if st is None:
            raise DanglingRef(uuid, "lookup")
        return st

    def routeset(self, uuid: str) -> set[str]:
        """Every step the given step can dynamically route to."""
        st = self.step(uuid)
        out = set(st.targets)
        for arm in st.case:
            out.update(arm.targets)
        return out


def load_sop(config: AnxConfig | dict[str, Any] | str) -> SopDefinition:
    """Validate the step graph: referential integrity, exactly one start,
    acyclic sources, and full reachability from the start step."""
    if not isinstance(config, AnxConfig):
        config = parse_config(config)
    if config.kind != "sop":
        raise WrongKind(f"config kind is {config.kind!r}, expected sop")

    uuids = {st.uuid for st in config.steps}
    for st in config.steps:
        for ref in st.sources:
            if ref not in uuids:
                raise DanglingRef(ref, f"{st.uuid}.sources")
        for ref in st.targets:
            if ref not in uuids:
                raise DanglingRef(ref, f"{st.uuid}.targets")
        for i, arm in enumerate(st.case):
            for ref in arm.targets:
                if ref not in uuids:
                    raise DanglingRef(ref, f"{st.uuid}.case[{i}].targets")

    starts = [st.uuid for st in config.steps if st.start]
    if not starts:
        raise NoStartStep("no step has start=true")
    if len(starts) > 1:
        raise MultipleStartSteps(f"multiple start steps: {starts}")

    _check_sources_acyclic(config.steps)
    _check_reachable(config.steps, starts[0])
    return SopDefinition(config=config, start_uuid=starts[0])


def _check_sources_acyclic(steps: tuple[StepDef, ...]) -> None:
    colors: dict[str, int] = {}  # 0 unseen, 1 in-progress, 2 done
    by_uuid = {st.uuid: st for st in steps}

    def visit(uuid: str, path: list[str]) -> None:
        state = colors.get(uuid, 0)
        if state == 1:
            raise SourcesCycle(path[path.index(uuid):] + [uuid])
        if state == 2:
            return
        colors[uuid] = 1
        for src in by_uuid[uuid].sources:
            visit(src, path + [src])
        colors[uuid] = 2

    for st in steps:
        visit(st.uuid, [st.uuid])


def _check_reachable(steps: tuple[StepDef, ...], start: str) -> None:
    forward: dict[str, set[str]] = {st.uuid: set() for st in steps}
    for st in steps:
        for src in st.sources:
            forward[src].add(st.uuid)
        forward[st.uuid].update(st.targets)
        for arm in st.case:
            forward[st.uuid].update(arm.targets)
    seen = {start}
    frontier = [start]
    while frontier:
        for nxt in forward[frontier.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    for st in steps:
        if st.uuid not in seen:
            raise UnreachableStep(st.uuid)


# ---------------------------------------------------------------------------
# Decision providers
# ---------------------------------------------------------------------------

class DecisionProvider:
    """Arm selection and step outputs. Stands in for the LLM at conditions."""

    def decide(self, step: StepDef, snapshot: dict[str, Any]) -> int:
        raise NotImplementedError

    def produce(self, step: StepDef, snapshot: dict[str, Any]) -> dict[str, Any]:
        return {}


_PREDICATE_RE = re.compile(
    r"([A-Za-z_][A-Za-z0-9_]*)\s*(>=|<=|==|<|>)\s*('[^']*'|[A-Za-z0-9_.]+)"
)


def evaluate_predicate(when: str, snapshot: dict[str, Any]) -> bool:
    """Evaluate the restricted predicate grammar ``<nick> <op> <literal>``.

    The first recognizable comparison in the arm text decides; trailing prose
    is ignored. Numeric comparison when both sides parse as numbers, string
    equality otherwise. Unknown nicks make the predicate false.
    """
    m = _PREDICATE_RE.search(when)
    if not m:
        return False
    nick, op, literal = m.groups()
    value = _flat_lookup(snapshot, nick)
    if value is None:
        return False
    literal = literal.strip("'")
    try:
        left, right = float(value), float(literal)
    except (TypeError, ValueError):
        left, right = str(value), literal  # type: ignore[assignment]
        if op not in ("==",):
            return False
    if op == ">=":
        return left >= right
    if op == "<=":
        return left <= right
    if op == ">":
        return left > right
    if op == "<":
        return left < right
    return left == right


def _flat_lookup(snapshot: dict[str, Any], nick: str) -> Any:
    if nick in snapshot:
        return snapshot[nick]
    for payload in snapshot.values():
        if isinstance(payload, dict) and nick in payload:
            return payload[nick]
    return None


class ReferenceProvider(DecisionProvider):
    """First-true-arm selection over the restricted predicate grammar, plus
    canned outputs per step uuid."""

    def __init__(self, outputs: dict[str, dict[str, Any]] | None = None) -> None:
        self.outputs = outputs or {}

    def decide(self, step: StepDef, snapshot: dict[str, Any]) -> int:
        for i, arm in enumerate(step.case):
            if evaluate_predicate(arm.when, snapshot):
                return i
        raise AnxError(f"no case arm of {step.uuid} matched the snapshot")

    def produce(self, step: StepDef, snapshot: dict[str, Any]) -> dict[str, Any]:
        return dict(self.outputs.get(step.uuid, {}))


class FixedProvider(DecisionProvider):
    """Predetermined arm choices; for tests and scripted agents."""

    def __init__(self, choices: dict[str, int], outputs: dict[str, dict[str, Any]] | None = None) -> None:
        self.choices = choices
        self.outputs = outputs or {}

    def decide(self, step: StepDef, snapshot: dict[str, Any]) -> int:
        return self.choices[step.uuid]

    def produce(self, step: StepDef, snapshot: dict[str, Any]) -> dict[str, Any]:
        return dict(self.outputs.get(step.uuid, {}))


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------

@dataclass
class SopRun:
    run_id: str
    definition: SopDefinition
    card_key: str
    status: dict[str, StepStatus]
    selected_routes: dict[str, tuple[str, ...]] = field(default_factory=dict)
    gates: dict[str, str] = field(default_factory=dict)  # step uuid -> gate_id
    trace: list[TraceEvent] = field(default_factory=list)
    provider: DecisionProvider | None = None

    def is_terminal(self) -> bool:
        return all(st in TERMINAL for st in self.status.values())

    def trace_signature(self) -> list[tuple[str, str, str, str, str]]:
        return [e.signature() for e in self.trace]

    def export_trace(self) -> str:
        return "\n".join(json.dumps(e.export_record(), ensure_ascii=False) for e in self.trace) + (
            "\n" if self.trace else ""
        )


# -- readiness rules (pure over run state; the oracle tests re-derive these) --

def _edge_state(run: SopRun, source: str, target: str) -> str:
    """satisfied | skipped | pending, honoring targets-precedence."""
    st = run.status[source]
    routed = target in run.definition.routeset(source)
    if st is StepStatus.COMPLETED:
        if routed:
            return "satisfied" if target in run.selected_routes.get(source, ()) else "skipped"
        return "satisfied"
    if st is StepStatus.SKIPPED:
        return "skipped"
    return "pending"


def step_eligible(run: SopRun, uuid: str) -> bool:
    """Would this pending step fire right now?"""
    step = run.definition.step(uuid)
    if step.sources:
        edges = [_edge_state(run, src, uuid) for src in step.sources]
        if step.sources_join == "any":
            return "satisfied" in edges
        return "pending" not in edges and "satisfied" in edges
    if uuid == run.definition.start_uuid:
        return True
    for other in run.definition.steps:
        if uuid in run.selected_routes.get(other.uuid, ()):
            return True
    return False


def ready_steps(run: SopRun) -> set[str]:
    """Steps that may execute now: already promoted, or pending and eligible."""
    out = {u for u, st in run.status.items() if st is StepStatus.READY}
    for u, st in run.status.items():
        if st is StepStatus.PENDING and step_eligible(run, u):
            out.add(u)
    return out


_ACTIVE = (StepStatus.READY, StepStatus.RUNNING, StepStatus.BLOCKED_ON_HUMAN)


def _may_fire(run: SopRun, uuid: str, alive: set[str]) -> bool:
    """Could this pending step still fire, given that only steps in ``alive``
    (plus already-active ones) can ever complete? Used as a least fixpoint:
    mutually-waiting pending steps with no live activator stay out."""
    def edge_possible(source: str, target: str) -> bool:
        st = run.status[source]
        routed = target in run.definition.routeset(source)
        if st is StepStatus.COMPLETED:
            return not routed or target in run.selected_routes.get(source, ())
        if st in _ACTIVE:
            return True  # will complete; if routing, the selection is still open
        if st is StepStatus.PENDING:
            return source in alive
        return False  # skipped or failed

    def edge_unblockable(source: str) -> bool:
        # pending sources outside ``alive`` end up skipped (non-blocking);
        # only failed sources block forever
        return run.status[source] is not StepStatus.FAILED

    step = run.definition.step(uuid)
    if step.sources:
        possibles = [edge_possible(src, uuid) for src in step.sources]
        if step.sources_join == "any":
            return any(possibles)
        return all(edge_unblockable(src) for src in step.sources) and any(possibles)
    if uuid == run.definition.start_uuid:
        return True
    for other in run.definition.steps:
        if uuid in run.definition.routeset(other.uuid) and edge_possible(other.uuid, uuid):
            return True
    return False


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------

class SopEngine:
    """Drives runs against a Core (nodes, gates, audit) and optionally a Hub
    (step assignments)."""

    def __init__(
        self,
        core: Core,
        hub: Any = None,
        clock: Callable[[], float] = time.time,
        auto_open_gates: bool = True,
    ) -> None:
        self.core = core
        self.hub = hub
        self._clock = clock
        self.auto_open_gates = auto_open_gates
        self._runs: dict[str, SopRun] = {}
        core.action_handlers.setdefault("run_step", self._cli_run_step)

    # -- lifecycle -------------------------------------------------------------

    def start_run(
        self,
        config: AnxConfig | dict[str, Any] | str | SopDefinition,
        provider: DecisionProvider | None = None,
        card_key: str | None = None,
    ) -> SopRun:
        definition = config if isinstance(config, SopDefinition) else load_sop(config)
        if card_key is None:
            card_key = self.core.register_card(definition.config)
        run = SopRun(
            run_id="r_" + secrets.token_hex(6),
            definition=definition,
            card_key=card_key,
            status={st.uuid: StepStatus.PENDING for st in definition.steps},
            provider=provider,
        )
        self._runs[run.run_id] = run
        self._trace(run, "run", "run_created", "engine", "agent")
        if self.hub is not None:
            self.hub.register_run(run.run_id, [st.uuid for st in definition.steps])
        self._advance(run, provider)
        return run

    def get_run(self, run_id: str) -> SopRun:
        run = self._runs.get(run_id)
        if run is None:
            raise UnknownRun(f"no run {run_id!r}")
        return run

    def run_status(self, run: SopRun) -> dict[str, Any]:
        return {
            "run_id": run.run_id,
            "card_key": run.card_key,
            "terminal": run.is_terminal(),
            "steps": {u: st.value for u, st in run.status.items()},
            "selected_routes": {u: list(t) for u, t in run.selected_routes.items()},
            "open_gates": {u: g for u, g in run.gates.items()
                           if run.status[u] is StepStatus.BLOCKED_ON_HUMAN},
        }

    # -- step completion -----------------------------------------------------------

    def complete_step(
        self,
        run: SopRun,
        uuid: str,
        outputs: dict[str, Any] | None = None,
        provider: DecisionProvider | None = None,
        actor: str = "agent",
        channel: str = "agent",
    ) -> SopRun:
        self._refresh(run)
        step = run.definition.step(uuid)
        if step.kind == "human_gate":
            raise WrongKind(f"step {uuid} is a human gate; resolve it via the UI channel")
        if run.status[uuid] not in (StepStatus.READY, StepStatus.RUNNING):
            raise WrongStatus(f"step {uuid} is {run.status[uuid].value}, not ready")
        self._complete_internal(run, step, outputs or {}, provider, actor, channel)
        self._advance(run, provider)
        return run

    def _complete_internal(
        self,
        run: SopRun,
        step: StepDef,
        outputs: dict[str, Any],
        provider: DecisionProvider | None,
        actor: str,
        channel: str,
    ) -> None:
        if outputs:
            self.core.write_node(run.card_key, step.uuid, outputs)
        run.status[step.uuid] = StepStatus.COMPLETED
        self._trace(run, step.uuid, "step_completed", actor, channel)

        if step.kind == "condition":
            prov = provider or run.provider
            if prov is None:
                raise ProviderMissing("condition")
            snapshot = self.core.node_snapshot(run.card_key)
            index = prov.decide(step, snapshot)
            if not isinstance(index, int) or not (0 <= index < len(step.case)):
                raise ProviderOutOfBounds(f"arm index {index!r} out of range for {step.uuid}")
            chosen = step.case[index].targets
            run.selected_routes[step.uuid] = tuple(chosen)
            self._trace(run, step.uuid, "route_selected", actor, channel,
                        arm=index, targets=list(chosen))
        elif step.targets:
            run.selected_routes[step.uuid] = tuple(step.targets)
            self._trace(run, step.uuid, "route_selected", actor, channel,
                        targets=list(step.targets))

    # -- human gates ------------------------------------------------------------------

    def open_human_gate(self, run: SopRun, uuid: str, description: str = "") -> str:
        self._refresh(run)
        step = run.definition.step(uuid)
        if step.kind != "human_gate":
            raise WrongKind(f"step {uuid} is kind={step.kind}, not human_gate")
        if run.status[uuid] is not StepStatus.READY:
            raise WrongStatus(f"step {uuid} is {run.status[uuid].value}, not ready")
        gate = self.core.open_gate(run.card_key, description or f"Review required: {step.nick}", kind="sop")
        run.gates[uuid] = gate.gate_id
        run.status[uuid] = StepStatus.BLOCKED_ON_HUMAN
        self._trace(run, uuid, "gate_opened", "engine", "agent", gate_id=gate.gate_id)
        return gate.gate_id

    def resolve_human_gate(
        self, run: SopRun, uuid: str, decision: str, who: ChannelIdentity
    ) -> SopRun:
        if run.status[uuid] is not StepStatus.BLOCKED_ON_HUMAN:
            raise WrongStatus(f"step {uuid} is {run.status[uuid].value}, not blocked_on_human")
        gate_id = run.gates[uuid]
        # channel + token rules enforced by the card's gate machinery
        self.core.resolve_gate(run.card_key, gate_id, who)
        step = run.definition.step(uuid)
        self.core.write_node(run.card_key, uuid, {"decision": decision})
        run.status[uuid] = StepStatus.COMPLETED
        self._trace(run, uuid, "gate_resolved", "human", "human_ui", decision=decision)
        if step.targets:
            run.selected_routes[uuid] = tuple(step.targets)
        self._advance(run, None)
        return run

    # -- quiescence ----------------------------------------------------------------------

    def run_to_quiescence(
        self,
        run: SopRun,
        providers: dict[str, DecisionProvider],
        assignments: dict[str, str] | None = None,
    ) -> SopRun:
        assignments = assignments or {}
        while True:
            self._advance(run, None)
            dispatchable = [
                u for u in self._ordered(run, ready_steps(run))
                if run.definition.step(u).kind != "human_gate"
            ]
            if not dispatchable:
                return run
            uuid = dispatchable[0]
            agent_id = assignments.get(uuid, "default")
            provider = providers.get(agent_id)
            if provider is None:
                raise ProviderMissing(agent_id)
            if self.hub is not None:
                if self.hub.get_assignment(run.run_id, uuid) is None:
                    self.hub.assign_step(run.run_id, uuid, agent_id)
                self.hub.report_step(run.run_id, uuid, agent_id, "accepted")
            step = run.definition.step(uuid)
            snapshot = self.core.node_snapshot(run.card_key)
            outputs = {} if step.kind == "condition" else provider.produce(step, snapshot)
            self._complete_internal(run, step, outputs, provider, agent_id, "agent")
            if self.hub is not None:
                self.hub.report_step(run.run_id, uuid, agent_id, "done")

    # -- internals ------------------------------------------------------------------------

    @staticmethod
    def _ordered(run: SopRun, uuids: set[str]) -> list[str]:
        return [st.uuid for st in run.definition.steps if st.uuid in uuids]

    def _advance(self, run: SopRun, provider: DecisionProvider | None) -> None:
        while True:
            self._refresh(run)
            self._mark_skips(run)
            self._refresh(run)
            prov = provider or run.provider
            fired = False
            for step in run.definition.steps:
                if run.status[step.uuid] is not StepStatus.READY:
                    continue
                if step.kind == "condition" and prov is not None:
                    self._complete_internal(run, step, {}, prov, "engine", "agent")
                    fired = True
                    break
                if step.kind == "human_gate" and self.auto_open_gates and step.uuid not in run.gates:
                    self.open_human_gate(run, step.uuid)
                    fired = True
                    break
            if not fired:
                return

    def _refresh(self, run: SopRun) -> None:
        for step in run.definition.steps:
            if run.status[step.uuid] is StepStatus.PENDING and step_eligible(run, step.uuid):
                run.status[step.uuid] = StepStatus.READY
                self._trace(run, step.uuid, "step_ready", "engine", "agent")

    def _mark_skips(self, run: SopRun) -> None:
        # least fixpoint: a pending step stays alive only if some chain of
        # live activators can still reach it
        alive: set[str] = set()
        changed = True
        while changed:
            changed = False
            for step in run.definition.steps:
                uuid = step.uuid
                if uuid in alive or run.status[uuid] is not StepStatus.PENDING:
                    continue
                if _may_fire(run, uuid, alive):
                    alive.add(uuid)
                    changed = True
        condemned = {
            st.uuid for st in run.definition.steps
            if run.status[st.uuid] is StepStatus.PENDING and st.uuid not in alive
        }
        for uuid in self._ordered(run, condemned):
            run.status[uuid] = StepStatus.SKIPPED
            self._trace(run, uuid, "step_skipped", "engine", "agent")

    def _trace(self, run: SopRun, step: str, event: str, actor: str, channel: str, **detail: Any) -> None:
        run.trace.append(TraceEvent(
            ts=self._clock(), run_id=run.run_id, step=step, event=event,
            actor=actor, channel=channel, detail=detail,
        ))

    # -- CLI action -------------------------------------------------------------------------

    def _cli_run_step(self, card_key: str, params: str, who: ChannelIdentity) -> tuple[str, dict[str, Any]]:
        data = json.loads(params) if params.strip() else {}
        run = None
        run_id = data.get("run_id")
        if run_id:
            run = self.get_run(str(run_id))
        else:
            for candidate in self._runs.values():
                if candidate.card_key == card_key:
                    run = candidate
                    break
        if run is None:
            raise UnknownRun(f"no run bound to card {card_key}")
        uuid = str(data.get("uuid", ""))
        outputs = data.get("outputs", {})
        if not isinstance(outputs, dict):
            outputs = {"value": outputs}
        self.complete_step(run, uuid, outputs, actor="agent", channel=who.channel)
        return "ok", {"run": self.run_status(run)}
