import json

import pytest
from hypothesis import given, settings, strategies as st

from t2ijudge.core import (
    Answer,
    AttributePair,
    Dimension,
    DimensionSummary,
    Entity,
    EvaluationRecord,
    ExtractionResult,
    GeneratorId,
    ImageRef,
    PromptSource,
    Question,
    QuestionKind,
    QuestionVerdict,
    RecordFailure,
    RecordParseError,
    Relationship,
    TextPrompt,
    canonical_name,
    deserialize_record,
    pretty_record,
    read_records,
    serialize_record,
    validate_dataset,
    validate_extraction,
    validate_record,
    write_records,
)

from conftest import build_running_example


class TestCanonicalName:
    def test_case_and_space_folding(self):
        assert canonical_name("  Black Cat ") == canonical_name("black  cat")

    def test_distinct_names_stay_distinct(self):
        assert canonical_name("cat") != canonical_name("car")


class TestValidation:
    def test_running_example_is_clean(self, running_example):
        assert validate_record(running_example) == []

    def test_score_out_of_range(self, running_example):
        running_example.verdicts[0].score = 11
        violations = validate_record(running_example)
        assert any("11" in v.message or "score" in v.field for v in violations)

    def test_entity_without_question_named_in_violation(self, running_example):
        extraction = running_example.extraction
        extraction.entities.append(Entity("dog", [AttributePair("existence", "yes")]))
        violations = validate_extraction(extraction)
        assert any("dog" in v.message for v in violations)

    def test_question_subject_must_exist(self, running_example):
        running_example.extraction.questions[0].subject_entities = ["ghost"]
        assert validate_record(running_example) != []

    def test_verdict_for_unknown_question(self, running_example):
        running_example.verdicts.append(
            QuestionVerdict("q-nope", "answer", "explanation", 5)
        )
        assert validate_record(running_example) != []

    def test_summaries_must_cover_dimensions(self, running_example):
        running_example.summaries.pop()
        assert validate_record(running_example) != []

    def test_dataset_duplicate_record_ids(self, running_example):
        other = build_running_example()
        violations = validate_dataset([running_example, other])
        assert any("duplicate" in v.message.lower() for v in violations)


class TestSerialization:
    def test_round_trip_identity(self, running_example):
        line = serialize_record(running_example)
        again = deserialize_record(line)
        assert serialize_record(again) == line
        assert again == running_example

    def test_serialized_form_is_single_canonical_line(self, running_example):
        line = serialize_record(running_example)
        assert "\n" not in line
        doc = json.loads(line)
        assert list(doc) == sorted(doc)

    def test_pretty_form_parses_to_same_record(self, running_example):
        assert deserialize_record(pretty_record(running_example)) == running_example

    def test_unknown_field_rejected(self, running_example):
        doc = json.loads(serialize_record(running_example))
        doc["surprise"] = 1
        with pytest.raises(RecordParseError, match="unknown field"):
            deserialize_record(json.dumps(doc))

    def test_missing_field_rejected(self, running_example):
        doc = json.loads(serialize_record(running_example))
        del doc["prompt"]
        with pytest.raises(RecordParseError, match="missing field"):
            deserialize_record(json.dumps(doc))

    def test_wrong_schema_version_rejected(self, running_example):
        doc = json.loads(serialize_record(running_example))
        doc["schema_version"] = 99
        with pytest.raises(RecordParseError, match="schema_version"):
            deserialize_record(json.dumps(doc))

    def test_bad_json_reports_line_number(self, tmp_path, running_example):
        path = tmp_path / "data.jsonl"
        path.write_text(serialize_record(running_example) + "\n{broken\n")
        with pytest.raises(RecordParseError, match="line 2"):
            read_records(path)

    def test_file_round_trip(self, tmp_path, running_example):
        path = tmp_path / "data.jsonl"
        failed = build_running_example()
        failed.failure = RecordFailure("answering", "refusal", "judge declined")
        count = write_records(path, [running_example, failed])
        assert count == 2
        back = read_records(path)
        assert back == [running_example, failed]

    def test_equal_records_serialize_to_equal_bytes(self, running_example):
        assert serialize_record(running_example) == serialize_record(
            build_running_example()
        )


_texts = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",), blacklist_characters="\x00"),
    min_size=1,
    max_size=40,
).filter(lambda s: s.strip())


@st.composite
def records(draw) -> EvaluationRecord:
    n_entities = draw(st.integers(1, 3))
    entities = []
    names = []
    for i in range(n_entities):
        name = f"thing{i}"
        names.append(name)
        entities.append(
            Entity(
                name,
                [AttributePair("existence", "yes")]
                + [
                    AttributePair(f"attr{k}", draw(_texts))
                    for k in range(draw(st.integers(0, 2)))
                ],
            )
        )
    questions = []
    for i, name in enumerate(names):
        questions.append(
            Question(f"qa-{i+1}", QuestionKind.APPEARANCE, f"Does the {name} look good?", [name])
        )
        questions.append(
            Question(f"qi-{i+1}", QuestionKind.INTRINSIC, f"Does the {name} exist?", [name])
        )
    relationships = []
    if len(names) >= 2 and draw(st.booleans()):
        relationships.append(Relationship("interaction", names[:2], draw(_texts)))
        questions.append(
            Question(
                "qr-1",
                QuestionKind.RELATIONSHIP,
                f"What is the interaction between the {names[0]} and the {names[1]}?",
                names[:2],
            )
        )
    answers = [
        Answer(
            q.qid,
            draw(_texts),
            score=draw(st.integers(0, 10)) if q.kind is QuestionKind.APPEARANCE else None,
        )
        for q in questions
    ]
    verdicts = [
        QuestionVerdict(q.qid, draw(_texts), draw(_texts), draw(st.integers(0, 10)))
        for q in questions
    ]
    summaries = [
        DimensionSummary(dim, draw(_texts), draw(st.integers(0, 10))) for dim in Dimension
    ]
    return EvaluationRecord(
        prompt=TextPrompt(id="p1", text=draw(_texts), source=draw(st.sampled_from(PromptSource))),
        image=ImageRef(id="i1", uri="data:image/png;base64,QUJD", generator=draw(st.sampled_from(GeneratorId))),
        extraction=ExtractionResult(entities, relationships, questions),
        answers=answers,
        verdicts=verdicts,
        summaries=summaries,
    )


class TestSerializationProperties:
    @settings(max_examples=100, deadline=None)
    @given(records())
    def test_round_trip_any_record(self, record):
        assert deserialize_record(serialize_record(record)) == record
