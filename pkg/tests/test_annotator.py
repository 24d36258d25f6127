import dataclasses
import json
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from t2ijudge.annotator import (
    AnnotationStore,
    ConflictError,
    Step,
    StoreError,
    ValidationFailure,
    load_benchmark,
)
from t2ijudge.annotator.api import TOKEN_HEADER, create_app
from t2ijudge.core import write_records


def _benchmark_records(running_example, n=3):
    records = []
    for i in range(n):
        records.append(
            dataclasses.replace(
                running_example,
                prompt=dataclasses.replace(running_example.prompt, id=f"p{i}"),
                image=dataclasses.replace(running_example.image, id=f"i{i}"),
            )
        )
    return records


@pytest.fixture
def benchmark(running_example, tmp_path):
    path = tmp_path / "benchmark.jsonl"
    write_records(path, _benchmark_records(running_example))
    return load_benchmark(path)


@pytest.fixture
def store(benchmark, tmp_path):
    return AnnotationStore(benchmark, tmp_path / "store")


def _extraction_payload(record):
    return {"schema_version": 1, "extraction": record.extraction.to_dict()}


def _answers_payload(record):
    return {
        "schema_version": 1,
        "captions": [c.to_dict() for c in record.captions],
        "answers": [a.to_dict() for a in record.answers],
    }


def _scoring_payload(record):
    return {
        "schema_version": 1,
        "verdicts": [v.to_dict() for v in record.verdicts],
        "summaries": [s.to_dict() for s in record.summaries],
    }


def _finish_item(store, aid, item_id, record):
    store.submit_step(aid, item_id, Step.EXTRACTION, _extraction_payload(record))
    store.submit_step(aid, item_id, Step.ANSWERS, _answers_payload(record))
    store.submit_step(aid, item_id, Step.SCORING, _scoring_payload(record))


class TestBenchmarkLoading:
    def test_items_and_prefill(self, benchmark):
        assert [item.item_id for item in benchmark] == ["p0:i0", "p1:i1", "p2:i2"]
        assert all(item.prefill is not None for item in benchmark)

    def test_duplicate_ids_rejected(self, running_example, tmp_path):
        path = tmp_path / "dup.jsonl"
        write_records(path, [running_example, running_example])
        with pytest.raises(StoreError, match="duplicate"):
            load_benchmark(path)

    def test_empty_rejected(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        with pytest.raises(StoreError):
            load_benchmark(path)


class TestSessions:
    def test_create_is_idempotent(self, store):
        first = store.create_session("alice")
        second = store.create_session("alice")
        assert first == second
        assert store.annotators() == ["alice"]

    def test_empty_id_rejected(self, store):
        with pytest.raises(StoreError):
            store.create_session("  ")

    def test_item_order_is_stable_per_annotator(self, store):
        store.create_session("alice")
        store.create_session("bob")
        alice = store.item_order("alice")
        bob = store.item_order("bob")
        assert sorted(alice) == sorted(bob) == ["p0:i0", "p1:i1", "p2:i2"]
        assert store.item_order("alice") == alice  # repeatable

    def test_orders_differ_between_annotators(self, benchmark, running_example, tmp_path):
        # With 3 items collisions happen; widen to make distinct orders likely.
        path = tmp_path / "wide.jsonl"
        write_records(path, _benchmark_records(running_example, n=8))
        store = AnnotationStore(load_benchmark(path), tmp_path / "wide-store")
        store.create_session("alice")
        store.create_session("bob")
        assert store.item_order("alice") != store.item_order("bob")


class TestStepFlow:
    def test_walkthrough(self, store, running_example):
        store.create_session("alice")
        item_id = store.item_order("alice")[0]
        view = store.next_item("alice")
        assert view["item_id"] == item_id
        assert view["current_step"] == "extraction"
        assert view["prefill"] is not None

        result = store.submit_step(
            "alice", item_id, Step.EXTRACTION, _extraction_payload(running_example)
        )
        assert result["revision"] == 1
        assert result["current_step"] == "answers"

        store.submit_step("alice", item_id, Step.ANSWERS, _answers_payload(running_example))
        result = store.submit_step(
            "alice", item_id, Step.SCORING, _scoring_payload(running_example)
        )
        assert result["current_step"] == "done"
        assert store.next_item("alice")["item_id"] == store.item_order("alice")[1]

        progress = store.progress("alice")
        assert progress["done"] == 1 and progress["total"] == 3
        assert progress["items"][item_id] == "done"

    def test_steps_are_monotonic(self, store, running_example):
        store.create_session("alice")
        item_id = store.item_order("alice")[0]
        with pytest.raises(ValidationFailure, match="not reached"):
            store.submit_step("alice", item_id, Step.ANSWERS, _answers_payload(running_example))
        with pytest.raises(ValidationFailure, match="not reached"):
            store.submit_step("alice", item_id, Step.SCORING, _scoring_payload(running_example))

    def test_revision_conflicts(self, store, running_example):
        store.create_session("alice")
        item_id = store.item_order("alice")[0]
        store.submit_step("alice", item_id, Step.EXTRACTION, _extraction_payload(running_example))
        with pytest.raises(ConflictError):
            store.submit_step(
                "alice", item_id, Step.EXTRACTION,
                _extraction_payload(running_example), expected_revision=0,
            )
        result = store.submit_step(
            "alice", item_id, Step.EXTRACTION,
            _extraction_payload(running_example), expected_revision=1,
        )
        assert result["revision"] == 2

    def test_correction_must_not_orphan_later_steps(self, store, running_example):
        store.create_session("alice")
        item_id = store.item_order("alice")[0]
        _finish_item(store, "alice", item_id, running_example)
        # Renaming a question id after answers/scoring exist is refused:
        # the submitted later steps would no longer cover the set.
        questions = list(running_example.extraction.questions)
        questions[-1] = dataclasses.replace(questions[-1], qid="qr-9")
        renamed = dataclasses.replace(running_example.extraction, questions=questions)
        with pytest.raises(ValidationFailure) as err:
            store.submit_step(
                "alice", item_id, Step.EXTRACTION,
                {"schema_version": 1, "extraction": renamed.to_dict()},
                expected_revision=1,
            )
        assert any("answers" in v.message or "scoring" in v.message for v in err.value.violations)

    def test_unknown_item_and_session(self, store, running_example):
        store.create_session("alice")
        with pytest.raises(StoreError, match="unknown item"):
            store.submit_step("alice", "nope:nope", Step.EXTRACTION, _extraction_payload(running_example))
        with pytest.raises(StoreError, match="no session"):
            store.next_item("ghost")

    def test_independent_annotators(self, store, running_example):
        store.create_session("alice")
        store.create_session("bob")
        item_id = store.item_order("alice")[0]
        store.submit_step("alice", item_id, Step.EXTRACTION, _extraction_payload(running_example))
        # Bob's copy of the same item is untouched.
        assert store.progress("bob")["items"][item_id] == "extraction"


class TestValidationDetails:
    def _reach_answers(self, store, running_example):
        store.create_session("alice")
        item_id = store.item_order("alice")[0]
        store.submit_step("alice", item_id, Step.EXTRACTION, _extraction_payload(running_example))
        return item_id

    def test_wrong_schema_version(self, store, running_example):
        store.create_session("alice")
        item_id = store.item_order("alice")[0]
        payload = _extraction_payload(running_example)
        payload["schema_version"] = 2
        with pytest.raises(ValidationFailure) as err:
            store.submit_step("alice", item_id, Step.EXTRACTION, payload)
        assert err.value.violations[0].field == "schema_version"

    def test_invalid_extraction_reports_violations(self, store, running_example):
        store.create_session("alice")
        item_id = store.item_order("alice")[0]
        bad = dataclasses.replace(running_example.extraction, questions=[])
        with pytest.raises(ValidationFailure) as err:
            store.submit_step(
                "alice", item_id, Step.EXTRACTION, {"schema_version": 1, "extraction": bad.to_dict()}
            )
        assert err.value.violations

    def test_answers_must_cover_questions(self, store, running_example):
        item_id = self._reach_answers(store, running_example)
        payload = _answers_payload(running_example)
        payload["answers"] = payload["answers"][:-1]
        with pytest.raises(ValidationFailure) as err:
            store.submit_step("alice", item_id, Step.ANSWERS, payload)
        assert any("cover the question set" in v.message for v in err.value.violations)

    def test_caption_for_unknown_entity(self, store, running_example):
        item_id = self._reach_answers(store, running_example)
        payload = _answers_payload(running_example)
        payload["captions"].append({"entity": "dragon", "caption": "a dragon"})
        with pytest.raises(ValidationFailure) as err:
            store.submit_step("alice", item_id, Step.ANSWERS, payload)
        assert any("dragon" in v.message for v in err.value.violations)

    def test_score_out_of_range(self, store, running_example):
        item_id = self._reach_answers(store, running_example)
        store.submit_step("alice", item_id, Step.ANSWERS, _answers_payload(running_example))
        payload = _scoring_payload(running_example)
        payload["verdicts"][0]["score"] = 11
        with pytest.raises(ValidationFailure) as err:
            store.submit_step("alice", item_id, Step.SCORING, payload)
        assert any("out of range" in v.message for v in err.value.violations)

    def test_summaries_must_cover_dimensions(self, store, running_example):
        item_id = self._reach_answers(store, running_example)
        store.submit_step("alice", item_id, Step.ANSWERS, _answers_payload(running_example))
        payload = _scoring_payload(running_example)
        payload["summaries"] = payload["summaries"][:-1]
        with pytest.raises(ValidationFailure) as err:
            store.submit_step("alice", item_id, Step.SCORING, payload)
        assert any("dimension" in v.message for v in err.value.violations)


class TestExportAndReplay:
    def test_export_matches_submissions(self, store, benchmark, running_example):
        store.create_session("alice")
        for item_id in store.item_order("alice"):
            _finish_item(store, "alice", item_id, running_example)
        exported = store.export_records("alice")
        records = exported["alice"]
        # Benchmark order, not annotation order.
        assert [r.record_id for r in records] == [item.item_id for item in benchmark]
        for record in records:
            assert record.provenance.evaluator == "alice"
            assert record.extraction == running_example.extraction
            assert record.answers == running_example.answers
            assert record.verdicts == running_example.verdicts
            assert record.summaries == running_example.summaries

    def test_export_skips_unfinished(self, store, running_example):
        store.create_session("alice")
        items = store.item_order("alice")
        _finish_item(store, "alice", items[0], running_example)
        store.submit_step("alice", items[1], Step.EXTRACTION, _extraction_payload(running_example))
        exported = store.export_records("alice")
        assert [r.record_id for r in exported["alice"]] == [items[0]]

    def test_export_all_annotators(self, store, running_example):
        for aid in ("alice", "bob"):
            store.create_session(aid)
            _finish_item(store, aid, store.item_order(aid)[0], running_example)
        exported = store.export_records()
        assert set(exported) == {"alice", "bob"}

    def test_replay_restores_state(self, benchmark, running_example, tmp_path):
        root = tmp_path / "store"
        store = AnnotationStore(benchmark, root)
        store.create_session("alice")
        items = store.item_order("alice")
        _finish_item(store, "alice", items[0], running_example)
        store.submit_step("alice", items[1], Step.EXTRACTION, _extraction_payload(running_example))

        reopened = AnnotationStore(benchmark, root)
        assert reopened.annotators() == ["alice"]
        assert reopened.item_order("alice") == items
        assert reopened.progress("alice") == store.progress("alice")
        a = store.export_records("alice")["alice"]
        b = reopened.export_records("alice")["alice"]
        assert [r.to_dict() for r in a] == [r.to_dict() for r in b]

    def test_truncated_event_tail_tolerated(self, benchmark, running_example, tmp_path):
        root = tmp_path / "store"
        store = AnnotationStore(benchmark, root)
        store.create_session("alice")
        _finish_item(store, "alice", store.item_order("alice")[0], running_example)
        log = root / "events.jsonl"
        text = log.read_text(encoding="utf-8")
        log.write_text(text + '{"event": "step", "anno', encoding="utf-8")

        reopened = AnnotationStore(benchmark, root)
        assert reopened.progress("alice")["done"] == 1


class TestHttpApi:
    @pytest.fixture
    def client(self, store):
        return TestClient(create_app(store, token="sekrit"))

    def _headers(self):
        return {TOKEN_HEADER: "sekrit"}

    def test_health_is_open(self, client):
        response = client.get("/api/health")
        assert response.status_code == 200
        assert response.json() == {"status": "ok", "items": 3}

    def test_token_required_elsewhere(self, client):
        assert client.post("/api/session", json={"annotator_id": "a"}).status_code == 401
        assert client.get("/api/session/a/next", headers={TOKEN_HEADER: "wrong"}).status_code == 401

    def test_full_item_over_http(self, client, running_example):
        headers = self._headers()
        response = client.post("/api/session", json={"annotator_id": "alice"}, headers=headers)
        assert response.status_code == 200

        view = client.get("/api/session/alice/next", headers=headers).json()
        assert view["done"] is False
        item_id = view["item_id"]

        for step, payload in (
            ("extraction", _extraction_payload(running_example)),
            ("answers", _answers_payload(running_example)),
            ("scoring", _scoring_payload(running_example)),
        ):
            response = client.post(
                f"/api/session/alice/items/{item_id}/steps/{step}",
                json={"expected_revision": 0, "payload": payload},
                headers=headers,
            )
            assert response.status_code == 200, response.text

        progress = client.get("/api/session/alice/progress", headers=headers).json()
        assert progress["done"] == 1

    def test_http_conflict_and_validation_codes(self, client, running_example):
        headers = self._headers()
        client.post("/api/session", json={"annotator_id": "alice"}, headers=headers)
        item_id = client.get("/api/session/alice/next", headers=headers).json()["item_id"]
        url = f"/api/session/alice/items/{item_id}/steps/extraction"
        payload = _extraction_payload(running_example)

        assert client.post(url, json={"expected_revision": 0, "payload": payload}, headers=headers).status_code == 200
        stale = client.post(url, json={"expected_revision": 0, "payload": payload}, headers=headers)
        assert stale.status_code == 409

        bad = dict(payload, schema_version=9)
        response = client.post(url, json={"expected_revision": 1, "payload": bad}, headers=headers)
        assert response.status_code == 422
        detail = response.json()["detail"]
        assert detail[0]["field"] == "schema_version"

    def test_http_unknown_item_404(self, client, running_example):
        headers = self._headers()
        client.post("/api/session", json={"annotator_id": "alice"}, headers=headers)
        response = client.post(
            "/api/session/alice/items/ghost:ghost/steps/extraction",
            json={"expected_revision": 0, "payload": _extraction_payload(running_example)},
            headers=headers,
        )
        assert response.status_code == 404

    def test_image_endpoint_decodes_data_uri(self, client):
        response = client.get("/api/items/p0:i0/image", headers=self._headers())
        assert response.status_code == 200
        assert response.headers["content-type"] == "image/png"
        assert response.content.startswith(b"\x89PNG")

    def test_export_endpoint(self, client, running_example):
        headers = self._headers()
        client.post("/api/session", json={"annotator_id": "alice"}, headers=headers)
        item_id = client.get("/api/session/alice/next", headers=headers).json()["item_id"]
        for step, payload in (
            ("extraction", _extraction_payload(running_example)),
            ("answers", _answers_payload(running_example)),
            ("scoring", _scoring_payload(running_example)),
        ):
            client.post(
                f"/api/session/alice/items/{item_id}/steps/{step}",
                json={"expected_revision": 0, "payload": payload},
                headers=headers,
            )
        response = client.get("/api/export", params={"annotator_id": "alice"}, headers=headers)
        assert response.status_code == 200
        records = response.json()["records"]["alice"]
        assert len(records) == 1
        assert records[0]["provenance"]["evaluator"] == "alice"


class TestPrefillToggle:
    def test_disabled_prefill(self, benchmark, tmp_path):
        store = AnnotationStore(benchmark, tmp_path / "store", prefill=False)
        store.create_session("alice")
        view = store.next_item("alice")
        assert view.get("prefill") is None
