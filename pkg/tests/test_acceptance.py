"""Acceptance suite: one test per release criterion, each printing a
pass/fail line. Tolerances and runtime budgets are pinned here and nowhere
else."""

from __future__ import annotations

import json
import random
import time

import pytest

from anx.cli import CliCommand, format_command, parse_command
from anx.config import parse_config
from anx.core import AGENT, Core, ui_channel
from anx.hub import Hub
from anx.markup import ViewerRole, parse_markup, render_markup, serialize
from anx.sim import compare_representations
from anx.sop import ReferenceProvider, SopEngine, StepStatus, ready_steps
from anx.errors import AnxError

from conftest import load_fixture
from genutil import gen_cli_params, gen_form_config, gen_sop_config
from test_hub import manifest as make_manifest
from test_sop import TestReadyOracle, make_run, sop


def report(name: str) -> None:
    print(f"\n[ACCEPTANCE] {name}: PASS")


class TestRedactionCompleteness:
    def test_ten_thousand_randomized_cards_never_leak(self):
        started = time.monotonic()
        rng = random.Random(0xACCE55)
        hub = Hub()
        ui = ui_channel(hub.issue_user_token("acc", "human_ui").token)
        core = Core(token_verifier=hub.is_valid_token)
        checked = 0
        leaks = 0
        cases = 0
        while cases < 10_000:
            if cases % 2000 == 0:
                core = Core(token_verifier=hub.is_valid_token)
            config_doc, values, secrets = gen_form_config(rng)
            cases += 1
            if not secrets:
                continue
            key = core.register_card(json.dumps(config_doc))
            core.submit_sensitive(key, secrets, ui)
            if values:
                core.execute(f"anx {key} set_form '{json.dumps(values)}'", AGENT)
            agent_outputs = (
                core.get_markup(key, AGENT),
                json.dumps(core.get_state(key, AGENT), ensure_ascii=False),
                json.dumps(core.execute(f"anx {key} submit", AGENT).to_dict(), ensure_ascii=False),
                json.dumps(core.execute(f"anx {key} get_markup", AGENT).to_dict(), ensure_ascii=False),
            )
            for secret in secrets.values():
                for out in agent_outputs:
                    if secret in out:
                        leaks += 1
            checked += 1
        elapsed = time.monotonic() - started
        assert leaks == 0
        assert cases == 10_000 and checked > 3000
        assert elapsed < 120.0, f"redaction sweep took {elapsed:.1f}s"
        report(f"redaction completeness ({cases} cases, {checked} with secrets, 0 leaks, {elapsed:.1f}s)")


CONFIRM_FORM = json.dumps({
    "protocol": "ANX", "version": "1.0.0", "kind": "form", "title": "Gated",
    "items": [
        {"nick": "amount", "kind": "input"},
        {"nick": "password", "kind": "input", "sensitive": True},
        {"nick": "send", "kind": "button", "tap": "submit", "confirm": True},
    ],
})

AGENT_ACTION_LINES = [
    "set_form '{\"amount\":\"10\"}'",
    "set_form '{\"password\":\"zq1\"}'",
    "submit",
    "get_markup",
    "get_state",
    "confirm '{\"gate_id\":\"GATE\"}'",
    "run_step '{\"uuid\":\"s1\"}'",
    "frobnicate",
    "confirm",
]


class TestConfirmingNoProgrammaticExit:
    def test_every_agent_action_bounces_then_human_confirms(self):
        started = time.monotonic()
        hub = Hub()
        core = Core(token_verifier=hub.is_valid_token)
        SopEngine(core, hub=hub)  # registers run_step so the enumeration covers it
        ui = ui_channel(hub.issue_user_token("acc", "human_ui").token)

        key = core.register_card(CONFIRM_FORM)
        core.submit_sensitive(key, {"password": "zq1"}, ui)
        gated = core.execute(f"anx {key} submit", AGENT)
        assert gated.status == "confirming"
        gate_id = gated.body["gate_id"]

        audit_before = len(core.audit_events(key))
        for action_line in AGENT_ACTION_LINES:
            line = f"anx {key} " + action_line.replace("GATE", gate_id)
            result = core.execute(line, AGENT)
            state = core.get_state(key, AGENT)["lifecycle"]
            assert state == "CONFIRMING", (action_line, result.to_dict())
            assert result.status in ("ok", "error")  # reads ok, mutations errors
            if result.status == "ok":
                assert action_line in ("get_markup", "get_state")
        # zero state changes recorded while the agent hammered the card
        changes = [e for e in core.audit_events(key)[audit_before:] if e.event == "state_change"]
        assert changes == []

        confirmed = core.confirm(key, gate_id, ui)
        assert confirmed.status == "ok"
        assert core.get_state(key, AGENT)["lifecycle"] == "COMPLETED"
        elapsed = time.monotonic() - started
        assert elapsed < 10.0
        report(f"CONFIRMING no-programmatic-exit ({len(AGENT_ACTION_LINES)} agent actions bounced, {elapsed:.2f}s)")


class TestSopOracleEquivalence:
    def test_five_hundred_graphs_agree_with_bruteforce(self):
        rng = random.Random(0x0A11CE)
        oracle = TestReadyOracle.oracle
        statuses = ["pending", "completed", "skipped", "running", "blocked_on_human", "failed"]
        weights = [40, 28, 14, 6, 6, 6]
        graphs = 0
        comparisons = 0
        saw_any_join = saw_all_join = saw_skip = saw_overlap = 0
        while graphs < 500:
            doc = gen_sop_config(rng)
            definition = sop(doc)
            graphs += 1
            for step in doc["steps"]:
                if step.get("sources_join") == "any":
                    saw_any_join += 1
                elif step.get("sources"):
                    saw_all_join += 1
                routed = set(step.get("targets", []))
                for arm in step.get("case", []):
                    routed |= set(arm["targets"])
                for other in doc["steps"]:
                    if other["uuid"] in routed and step["uuid"] in other.get("sources", []):
                        saw_overlap += 1
            for _ in range(10):
                status = {s["uuid"]: rng.choices(statuses, weights)[0] for s in doc["steps"]}
                saw_skip += sum(1 for v in status.values() if v == "skipped")
                routes = {}
                for s in doc["steps"]:
                    if status[s["uuid"]] != "completed":
                        continue
                    if s.get("case"):
                        routes[s["uuid"]] = tuple(rng.choice(s["case"])["targets"])
                    elif s.get("targets"):
                        routes[s["uuid"]] = tuple(s["targets"])
                run = make_run(definition, status, routes)
                assert ready_steps(run) == oracle(doc, status, routes), (doc, status, routes)
                comparisons += 1
        assert graphs >= 500 and comparisons >= 5000
        assert saw_any_join > 0 and saw_all_join > 0 and saw_skip > 0 and saw_overlap > 0
        report(
            "SOP ready-set oracle equivalence "
            f"({graphs} graphs, {comparisons} states, any={saw_any_join}, "
            f"all={saw_all_join}, skips={saw_skip}, overlaps={saw_overlap})"
        )


class TestResumeScreeningTraces:
    REVIEW = "resume_screening_review.anx.json"

    def run_once(self, score: int, decision: str | None = None):
        hub = Hub()
        core = Core(token_verifier=hub.is_valid_token)
        engine = SopEngine(core, hub=hub)
        provider = ReferenceProvider(outputs={"s1": {"matchingScore": score}})
        run = engine.start_run(load_fixture(self.REVIEW), provider=provider)
        engine.run_to_quiescence(run, {"default": provider})
        if decision is not None and run.status["s2"] is StepStatus.BLOCKED_ON_HUMAN:
            ui = ui_channel(hub.issue_user_token("hr", "human_ui").token)
            engine.resolve_human_gate(run, "s2", decision, ui)
            engine.run_to_quiescence(run, {"default": provider})
        return core, engine, run

    def test_score_85_goes_straight_to_interview(self):
        for _ in range(30):
            sigs = set()
            _, _, run = self.run_once(85)
            assert run.is_terminal()
            assert run.status["s4"] is StepStatus.COMPLETED
            assert run.status["s3"] is StepStatus.SKIPPED
            assert run.status["s2"] is StepStatus.SKIPPED
            sigs.add(tuple(run.trace_signature()))
        assert len(sigs) == 1
        report("resume screening score=85 takes the interview path, 30 identical traces")

    def test_score_50_goes_straight_to_decline(self):
        sigs = set()
        for _ in range(30):
            _, _, run = self.run_once(50)
            assert run.is_terminal()
            assert run.status["s3"] is StepStatus.COMPLETED
            assert run.status["s4"] is StepStatus.SKIPPED
            sigs.add(tuple(run.trace_signature()))
        assert len(sigs) == 1
        report("resume screening score=50 takes the decline path, 30 identical traces")

    def test_score_72_blocks_until_human_decides(self):
        sigs_pass, sigs_reject = set(), set()
        for _ in range(30):
            hub = Hub()
            core = Core(token_verifier=hub.is_valid_token)
            engine = SopEngine(core, hub=hub)
            provider = ReferenceProvider(outputs={"s1": {"matchingScore": 72}})
            run = engine.start_run(load_fixture(self.REVIEW), provider=provider)
            engine.run_to_quiescence(run, {"default": provider})
            assert run.status["s2"] is StepStatus.BLOCKED_ON_HUMAN
            assert not run.is_terminal()

            # the agent channel cannot finish the run
            with pytest.raises(AnxError):
                engine.resolve_human_gate(run, "s2", "pass", AGENT)
            engine.run_to_quiescence(run, {"default": provider})
            assert not run.is_terminal()

            ui = ui_channel(hub.issue_user_token("hr", "human_ui").token)
            engine.resolve_human_gate(run, "s2", "pass", ui)
            engine.run_to_quiescence(run, {"default": provider})
            assert run.is_terminal()
            assert run.status["s4"] is StepStatus.COMPLETED
            sigs_pass.add(tuple(run.trace_signature()))

            _, _, rejected = self.run_once(72, decision="reject")
            assert rejected.status["s3"] is StepStatus.COMPLETED
            assert rejected.status["s4"] is StepStatus.SKIPPED
            sigs_reject.add(tuple(rejected.trace_signature()))
        assert len(sigs_pass) == 1 and len(sigs_reject) == 1
        report("resume screening score=72 completes only after the UI gate (pass->s4, reject->s3)")


class TestRoundTrips:
    def test_ten_thousand_generated_forms(self):
        rng = random.Random(0x10000)
        for _ in range(10_000):
            config_doc, values, secrets = gen_form_config(rng, max_items=5)
            cfg = parse_config(config_doc)
            text = render_markup(cfg, dict(values) | secrets, "c_5150", ViewerRole.HUMAN_UI)
            assert serialize(parse_markup(text)) == text
        report("markup round trip byte-identical on 10000 generated forms")

    def test_ten_thousand_cli_commands(self):
        rng = random.Random(0x20000)
        for _ in range(10_000):
            cmd = CliCommand(
                card_key=f"c_{rng.randint(1, 10**7)}",
                action=rng.choice(["set_form", "submit", "get_state", "run_step", "zz_9"]),
                params=gen_cli_params(rng),
            )
            assert parse_command(format_command(cmd)) == cmd
        report("CLI parse-format identity on 10000 commands")

    def test_published_fixture_documents(self):
        cfg = parse_config(load_fixture("job_seeker_config.anx.json"))
        assert cfg.kind == "form" and len(cfg.items) == 2
        assert cfg.items[1].options_set.url_dataset == "http://localhost:7887/dataset/industries"

        doc = parse_markup(load_fixture("job_seeker_markup.anxm"))
        assert doc.card_key == "c_8193"
        kinds = [c.kind for c in doc.root.children]
        assert kinds == ["text", "input", "options", "button"]
        option_rows = [c for c in doc.root.children[2].children if c.kind == "option"]
        assert [r.head for r in option_rows] == [("0",), ("1", "it"), ("2", "finance")]
        assert doc.root.children[3].attr("tap") == "submit"
        assert serialize(doc) == load_fixture("job_seeker_markup.anxm")

        definition = sop(load_fixture("resume_screening.anx.json"))
        assert [s.uuid for s in definition.steps] == ["s1", "s2", "s3", "s4"]
        assert definition.step("s2").sources == ("s1",)
        assert [arm.targets for arm in definition.step("s2").case] == [("s3",), ("s4",)]
        report("published fixtures parse exactly as documented")


class TestDiscoveryCorrectness:
    def fill(self, n: int) -> tuple[Hub, list[dict]]:
        rng = random.Random(n)
        hub = Hub()
        manifests = []
        for i in range(n):
            words = " ".join(rng.choice(["alpha", "beta", "gamma", "delta", "omega",
                                         "form", "ledger", "travel", "resume"]) for _ in range(4))
            m = make_manifest(f"app.{i:04d}", f"catalog entry {i:04d} {words}")
            manifests.append(m)
            hub.publish(m)
        return hub, manifests

    def test_topk_matches_bruteforce_at_three_sizes(self):
        from test_hub import oracle_rank

        for n in (10, 100, 1000):
            hub, manifests = self.fill(n)
            for query in ("alpha form ledger", "travel resume", "catalog entry 0001"):
                got = [e.app_id for e in hub.discover(query, 10).entries]
                assert got == oracle_rank(manifests, query, 10), (n, query)
        report("discovery top-k equals brute force at index sizes 10/100/1000")

    def test_publish_is_immediately_discoverable(self):
        hub, _ = self.fill(100)
        hub.publish(make_manifest("app.fresh", "freshly published resume screening tool"))
        got = hub.discover("freshly published resume screening tool", 1)
        assert got.entries[0].app_id == "app.fresh"
        report("publish visible to discover in the same session")

    def test_response_size_bounded_by_k_not_index(self):
        sizes = {}
        for n in (10, 100, 500, 1000):
            hub, _ = self.fill(n)
            payload = json.dumps(hub.discover("alpha form", 3).to_dict())
            sizes[n] = len(payload.encode())
        spread = (max(sizes.values()) - min(sizes.values())) / max(sizes.values())
        assert spread <= 0.05, sizes
        report(f"discovery response size varies {spread * 100:.1f}% across index sizes (limit 5%)")


class TestRepresentationSizeProxy:
    def test_url_reference_beats_inlined_options(self, capsys):
        started = time.monotonic()
        form = parse_config(load_fixture("bench_job_form.anx.json"))
        values = {
            "firstName": "Ada", "lastName": "Lovelace", "email": "ada@example.org",
            "phone": "5550100", "city": "London", "position": "Engineer",
            "salary": "100000", "summary": "Ten years of experience.",
            "industry": "v001",
        }
        report_doc = compare_representations(form, values, [50])
        row = report_doc.rows[0]
        assert row.token_delta >= 0.40, row.to_dict()
        printed = report_doc.to_json()
        print(printed)
        figures = report_doc.to_dict()["reference_figures"]
        assert figures["qwen3.5-plus"]["task_inc_tokens_k"] == {"gui": 9.1, "mcp_skill": 7.4, "anx": 3.9}
        assert figures["gpt-4o"]["task_inc_tokens_k"] == {"gui": 8.3, "mcp_skill": 6.3, "anx": 2.8}
        assert "not reproduced" in figures["note"]
        elapsed = time.monotonic() - started
        assert elapsed < 5.0
        report(
            f"representation-size proxy: url-referenced form is {row.token_delta * 100:.1f}% smaller "
            f"(limit >= 40%) in {elapsed:.2f}s"
        )
