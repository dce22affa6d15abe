"""Core: registry, execution, vault, options, nodes, audit, persistence."""

from __future__ import annotations

import json
import random
import re
import threading

import pytest

from anx.config import Option, OptionsSet
from anx.core import AGENT, Core, LifecycleState, ui_channel
from anx.errors import (
    ChannelViolation,
    DatasetShapeError,
    DatasetUnreachable,
    InvalidUserToken,
    UnknownCard,
    UnknownNick,
    UnknownNode,
    ValidationError,
    WrongState,
)
from anx.markup import MASK

from conftest import load_fixture
from genutil import gen_form_config

SENSITIVE_FORM = json.dumps({
    "protocol": "ANX", "version": "1.0.0", "kind": "form", "title": "Account",
    "items": [
        {"nick": "name", "kind": "input"},
        {"nick": "password", "kind": "input", "sensitive": True},
        {"nick": "go", "kind": "button", "tap": "submit"},
    ],
})

CONFIRM_FORM = json.dumps({
    "protocol": "ANX", "version": "1.0.0", "kind": "form", "title": "Wire Transfer",
    "items": [
        {"nick": "amount", "kind": "input"},
        {"nick": "password", "kind": "input", "sensitive": True},
        {"nick": "send", "kind": "button", "tap": "submit", "confirm": True},
    ],
})


def job_form_with_url():
    doc = json.loads(load_fixture("job_seeker_config.anx.json"))
    doc["items"][1]["optionsSet"]["dataset"]["url_dataset"] = "http://data.local/dataset/industries"
    return json.dumps(doc)


class TestRegistry:
    def test_register_returns_patterned_key(self, core):
        key = core.register_card(load_fixture("job_seeker_config.anx.json"))
        assert re.match(r"^c_\d{4,}$", key)
        assert core.get_state(key, AGENT)["lifecycle"] == "READY"

    def test_same_config_twice_distinct_keys(self, core):
        a = core.register_card(SENSITIVE_FORM)
        b = core.register_card(SENSITIVE_FORM)
        assert a != b

    def test_thousand_registrations_distinct(self, core):
        keys = {core.register_card(SENSITIVE_FORM) for _ in range(1000)}
        assert len(keys) == 1000

    def test_unknown_card(self, core):
        with pytest.raises(UnknownCard):
            core.get_state("c_00000000", AGENT)


class TestGetMarkup:
    def test_human_view_shows_resolved_options(self, core, ui):
        key = core.register_card(job_form_with_url())
        text = core.get_markup(key, ui)
        assert "Information Technology" in text
        assert "finance" in text

    def test_agent_view_equals_human_view_without_sensitive(self, core, ui):
        key = core.register_card(job_form_with_url())
        core.execute(f"anx {key} set_form '{{\"lastName\":\"Mingze\"}}'", AGENT)
        assert core.get_markup(key, AGENT) == core.get_markup(key, ui)

    def test_agent_view_scrubs_vaulted_secret(self, core, ui):
        key = core.register_card(SENSITIVE_FORM)
        core.submit_sensitive(key, {"password": "hunter2"}, ui)
        agent_text = core.get_markup(key, AGENT)
        assert "hunter2" not in agent_text
        assert MASK in agent_text
        human_text = core.get_markup(key, ui)
        assert "hunter2" in human_text


class TestExecute:
    def test_set_form_with_dataset_validation(self, core):
        key = core.register_card(job_form_with_url())
        result = core.execute(
            f"anx {key} set_form '{{\"lastName\":\"Mingze\",\"industry\":\"it\"}}'", AGENT
        )
        assert result.status == "ok"
        state = core.get_state(key, AGENT)
        assert state["values"] == {"lastName": "Mingze", "industry": "it"}

    def test_set_form_rejects_nonmember_option(self, core):
        key = core.register_card(job_form_with_url())
        result = core.execute(f"anx {key} set_form '{{\"industry\":\"space\"}}'", AGENT)
        assert result.status == "error"
        assert result.body["error"]["code"] == "ValidationError"
        assert core.get_state(key, AGENT)["values"] == {}

    def test_sensitive_via_agent_channel_blocks(self, core):
        key = core.register_card(SENSITIVE_FORM)
        result = core.execute(f"anx {key} set_form '{{\"password\":\"x\"}}'", AGENT)
        assert result.status == "error"
        assert result.body["error"]["code"] == "SensitiveViaAgentChannel"
        assert result.new_state is LifecycleState.WAITING_UI
        assert core.get_state(key, AGENT)["lifecycle"] == "WAITING_UI"

    def test_unknown_action_leaves_state(self, core):
        key = core.register_card(SENSITIVE_FORM)
        result = core.execute(f"anx {key} frobnicate", AGENT)
        assert result.body["error"]["code"] == "UnknownAction"
        assert core.get_state(key, AGENT)["lifecycle"] == "READY"

    def test_dataset_failure_surfaces_at_validation_time(self, core):
        doc = json.loads(load_fixture("job_seeker_config.anx.json"))
        doc["items"][1]["optionsSet"]["dataset"]["url_dataset"] = "http://data.local/dataset/boom"
        key = core.register_card(json.dumps(doc))  # registration never fetches
        result = core.execute(f"anx {key} set_form '{{\"industry\":\"it\"}}'", AGENT)
        assert result.body["error"]["code"] == "DatasetUnreachable"


class TestSubmitFlow:
    def test_submit_without_vault_waits_for_ui(self, core):
        key = core.register_card(SENSITIVE_FORM)
        result = core.execute(f"anx {key} submit", AGENT)
        assert result.status == "waiting_ui"
        assert result.body["missing_sensitive"] == ["password"]
        assert core.get_state(key, AGENT)["lifecycle"] == "WAITING_UI"

    def test_ingress_then_submit_completes(self, core, ui):
        key = core.register_card(SENSITIVE_FORM)
        core.execute(f"anx {key} submit", AGENT)
        refs = core.submit_sensitive(key, {"password": "hunter2"}, ui)
        assert re.match(r"^ref_[0-9a-f]{32}$", refs["password"])
        assert core.get_state(key, AGENT)["lifecycle"] == "READY"
        result = core.execute(f"anx {key} submit", AGENT)
        assert result.status == "ok"
        assert result.new_state is LifecycleState.COMPLETED
        node = core.read_node(key, "submission", AGENT)
        assert node["payload"]["fields"]["password"] == refs["password"]
        assert "hunter2" not in json.dumps(node)

    def test_confirm_required_submit_gates(self, core, ui, hub):
        key = core.register_card(CONFIRM_FORM)
        core.submit_sensitive(key, {"password": "s3cret"}, ui)
        result = core.execute(f"anx {key} submit", AGENT)
        assert result.status == "confirming"
        gate_id = result.body["gate_id"]
        assert core.get_state(key, AGENT)["lifecycle"] == "CONFIRMING"

        confirmed = core.confirm(key, gate_id, ui)
        assert confirmed.status == "ok"
        assert core.get_state(key, AGENT)["lifecycle"] == "COMPLETED"

    def test_cancel_fails_card(self, core, ui):
        key = core.register_card(CONFIRM_FORM)
        core.submit_sensitive(key, {"password": "s3cret"}, ui)
        gate_id = core.execute(f"anx {key} submit", AGENT).body["gate_id"]
        core.cancel(key, gate_id, ui)
        assert core.get_state(key, AGENT)["lifecycle"] == "FAILED"
        result = core.execute(f"anx {key} submit", AGENT)
        assert result.body["error"]["code"] == "WrongState"


class TestSensitiveIngress:
    def test_agent_channel_structurally_rejected(self, core):
        key = core.register_card(SENSITIVE_FORM)
        with pytest.raises(ChannelViolation):
            core.submit_sensitive(key, {"password": "x"}, AGENT)

    def test_bad_token_rejected(self, core):
        key = core.register_card(SENSITIVE_FORM)
        with pytest.raises(InvalidUserToken):
            core.submit_sensitive(key, {"password": "x"}, ui_channel("ut_forged"))

    def test_unknown_nick(self, core, ui):
        key = core.register_card(SENSITIVE_FORM)
        with pytest.raises(UnknownNick):
            core.submit_sensitive(key, {"nope": "x"}, ui)

    def test_non_sensitive_nick_rejected(self, core, ui):
        key = core.register_card(SENSITIVE_FORM)
        with pytest.raises(ValidationError):
            core.submit_sensitive(key, {"name": "x"}, ui)

    def test_empty_fields_no_state_change(self, core, ui):
        key = core.register_card(SENSITIVE_FORM)
        before = core.get_state(key, AGENT)
        assert core.submit_sensitive(key, {}, ui) == {}
        assert core.get_state(key, AGENT)["audit_length"] == before["audit_length"]

    def test_replay_overwrites_single_vault_entry(self, core, ui):
        key = core.register_card(SENSITIVE_FORM)
        first = core.submit_sensitive(key, {"password": "zqoldvalue"}, ui)
        second = core.submit_sensitive(key, {"password": "zqnewvalue"}, ui)
        assert first["password"] != second["password"]
        state = core.get_state(key, AGENT)
        assert state["sensitive"]["password"] == {"masked": MASK, "has_ref": True}
        # exactly one live entry: the human view shows only the latest value
        human = core.get_markup(key, ui)
        assert "zqnewvalue" in human and "zqoldvalue" not in human

    def test_get_state_masks_and_flags(self, core, ui):
        key = core.register_card(SENSITIVE_FORM)
        state = core.get_state(key, AGENT)
        assert state["sensitive"]["password"] == {"masked": MASK, "has_ref": False}
        core.submit_sensitive(key, {"password": "zq123"}, ui)
        state = core.get_state(key, AGENT)
        assert state["sensitive"]["password"]["has_ref"] is True
        assert "zq123" not in json.dumps(state)


class TestResolveOptions:
    def test_inline_identity(self, core):
        oset = OptionsSet(value_nick="id", title_nick="name",
                          inline=(Option("it", "Information Technology"),))
        assert core.resolve_options(oset) == [Option("it", "Information Technology")]

    def test_url_mapping(self, core):
        oset = OptionsSet(value_nick="id", title_nick="name",
                          url_dataset="http://data.local/dataset/industries")
        options = core.resolve_options(oset)
        assert [o.value for o in options] == ["it", "finance"]
        assert options[0].title == "Information Technology"

    def test_shape_error(self, core):
        oset = OptionsSet(value_nick="id", title_nick="name",
                          url_dataset="http://data.local/dataset/badshape")
        with pytest.raises(DatasetShapeError):
            core.resolve_options(oset)

    def test_not_an_array(self, core):
        oset = OptionsSet(value_nick="id", title_nick="name",
                          url_dataset="http://data.local/dataset/notarray")
        with pytest.raises(DatasetShapeError):
            core.resolve_options(oset)

    def test_unreachable_after_retry(self, core, fetch_counter):
        oset = OptionsSet(value_nick="id", title_nick="name",
                          url_dataset="http://data.local/dataset/boom")
        with pytest.raises(DatasetUnreachable):
            core.resolve_options(oset)
        assert fetch_counter.count("/dataset/boom") == 2  # initial + one retry

    def test_per_card_cache_coherence(self, core, fetch_counter):
        key = core.register_card(job_form_with_url())
        core.execute(f"anx {key} set_form '{{\"industry\":\"it\"}}'", AGENT)
        core.execute(f"anx {key} set_form '{{\"industry\":\"finance\"}}'", AGENT)
        core.get_markup(key, AGENT)
        assert fetch_counter.count("/dataset/industries") == 1


class TestNodes:
    def test_write_then_read(self, core):
        key = core.register_card(SENSITIVE_FORM)
        assert core.write_node(key, "review", {"score": 72}) == 1
        node = core.read_node(key, "review")
        assert node == {"node": "review", "payload": {"score": 72}, "version": 1}

    def test_last_writer_wins(self, core):
        key = core.register_card(SENSITIVE_FORM)
        core.write_node(key, "review", {"score": 10})
        core.write_node(key, "review", {"score": 20})
        node = core.read_node(key, "review")
        assert node["version"] == 2
        assert node["payload"] == {"score": 20}

    def test_never_written_node(self, core):
        key = core.register_card(SENSITIVE_FORM)
        with pytest.raises(UnknownNode):
            core.read_node(key, "ghost")

    def test_interleaved_writers_version_equals_write_count(self, core):
        key = core.register_card(SENSITIVE_FORM)
        per_thread, threads = 50, 4

        def writer(tag: str) -> None:
            for i in range(per_thread):
                core.write_node(key, "shared", {"tag": tag, "i": i})

        workers = [threading.Thread(target=writer, args=(str(t),)) for t in range(threads)]
        for w in workers:
            w.start()
        for w in workers:
            w.join()
        assert core.read_node(key, "shared")["version"] == per_thread * threads


class TestAudit:
    def test_monotonic_and_every_state_change_logged(self, core, ui):
        key = core.register_card(SENSITIVE_FORM)
        lengths = [len(core.audit_events(key))]
        core.execute(f"anx {key} set_form '{{\"name\":\"mz\"}}'", AGENT)
        lengths.append(len(core.audit_events(key)))
        core.submit_sensitive(key, {"password": "zq1"}, ui)
        lengths.append(len(core.audit_events(key)))
        core.execute(f"anx {key} submit", AGENT)
        lengths.append(len(core.audit_events(key)))
        assert lengths == sorted(lengths) and len(set(lengths)) == len(lengths)

        events = core.audit_events(key)
        changes = [e for e in events if e.event == "state_change"]
        seen = [(c.detail["from"], c.detail["to"]) for c in changes]
        assert ("CREATED", "READY") in seen
        # one audit event per state change, never values in the log
        blob = json.dumps([e.detail for e in events])
        assert "zq1" not in blob

    def test_export_shape(self, core):
        key = core.register_card(SENSITIVE_FORM)
        lines = [json.loads(l) for l in core.export_audit(key).splitlines()]
        assert lines
        assert all(set(rec) == {"ts", "card_key", "event", "channel"} for rec in lines)


class TestPersistence:
    def test_cards_survive_restart(self, tmp_path, hub, dataset_client):
        data_dir = str(tmp_path)
        core = Core(data_dir=data_dir, http_client=dataset_client,
                    token_verifier=hub.is_valid_token)
        ui = ui_channel(hub.issue_user_token("s", "human_ui").token)
        key = core.register_card(SENSITIVE_FORM)
        core.execute(f"anx {key} set_form '{{\"name\":\"mz\"}}'", AGENT)
        core.submit_sensitive(key, {"password": "hunter2"}, ui)

        reopened = Core(data_dir=data_dir, http_client=dataset_client,
                        token_verifier=hub.is_valid_token)
        state = reopened.get_state(key, AGENT)
        assert state["values"] == {"name": "mz"}
        assert state["sensitive"]["password"]["has_ref"] is True
        assert "hunter2" in reopened.get_markup(key, ui)

    def test_vault_not_plaintext_at_rest(self, tmp_path, hub, dataset_client):
        core = Core(data_dir=str(tmp_path), http_client=dataset_client,
                    token_verifier=hub.is_valid_token)
        ui = ui_channel(hub.issue_user_token("s", "human_ui").token)
        key = core.register_card(SENSITIVE_FORM)
        core.submit_sensitive(key, {"password": "zq9876543210"}, ui)
        core._store.close()
        raw = b"".join(p.read_bytes() for p in tmp_path.glob("anx.sqlite3*"))
        assert b"zq9876543210" not in raw


class TestIsolationTraces:
    def test_randomized_command_traces_never_leak(self, core, ui):
        rng = random.Random(0x150)
        for _ in range(60):
            config_doc, values, secrets = gen_form_config(rng)
            if not secrets:
                continue
            key = core.register_card(json.dumps(config_doc))
            core.submit_sensitive(key, secrets, ui)
            if values:
                core.execute(f"anx {key} set_form '{json.dumps(values)}'", AGENT)
            outputs = [
                core.get_markup(key, AGENT),
                json.dumps(core.get_state(key, AGENT)),
                json.dumps(core.execute(f"anx {key} submit", AGENT).to_dict()),
                json.dumps(core.execute(f"anx {key} get_state", AGENT).to_dict()),
            ]
            for secret in secrets.values():
                for out in outputs:
                    assert secret not in out
