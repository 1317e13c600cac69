import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from intentkit.errors import (
    DataFormatError,
    DuplicateGoldQuery,
    EmptyQuery,
    OutOfVocabularyLabel,
    QueryTooLong,
)
from intentkit.io import (
    read_gold,
    read_jsonl,
    read_tsv_queries,
    record_to_query,
    write_jsonl,
)
from intentkit.model import (
    LABELS,
    IntentLabel,
    Prediction,
    Provenance,
    Query,
    content_hash,
    normalize,
    parse_label,
    parse_provenance,
)


class TestNormalize:
    def test_whitespace_and_case(self):
        assert normalize("  Facebook   LOGIN ") == "facebook login"

    def test_fixed_point(self):
        assert normalize("how to tie a tie") == "how to tie a tie"

    def test_empty_raises(self):
        with pytest.raises(EmptyQuery):
            normalize("")
        with pytest.raises(EmptyQuery):
            normalize("   \t\n ")

    @given(st.text(max_size=200))
    def test_idempotent(self, text):
        try:
            once = normalize(text)
        except EmptyQuery:
            return
        assert normalize(once) == once

    def test_tabs_and_newlines_collapse(self):
        assert normalize("a\tb\nc") == "a b c"


class TestQuery:
    def test_content_hash_id_when_absent(self):
        q = Query.from_raw("facebook login")
        assert q.query_id == content_hash("facebook login")

    def test_explicit_id_wins(self):
        q = Query.from_raw("facebook login", id="q1")
        assert q.query_id == "q1"

    def test_length_bound(self):
        Query.from_raw("x" * 512)
        with pytest.raises(QueryTooLong):
            Query.from_raw("x" * 513)


class TestParseLabel:
    def test_exact(self):
        assert parse_label("Navigational") is IntentLabel.NAVIGATIONAL

    def test_case_insensitive(self):
        assert parse_label("transactional") is IntentLabel.TRANSACTIONAL
        assert parse_label("INFORMATIONAL") is IntentLabel.INFORMATIONAL

    def test_out_of_vocabulary(self):
        # Oracle: membership check against the closed set.
        closed = {label.value for label in LABELS}
        assert "commercial" not in closed
        with pytest.raises(OutOfVocabularyLabel) as exc_info:
            parse_label("commercial")
        assert exc_info.value.raw == "commercial"

    def test_round_trip_all_labels(self):
        for label in LABELS:
            assert parse_label(label.value) is label

    @given(st.text(max_size=30))
    def test_never_coerces(self, text):
        closed = {label.value for label in LABELS}
        if text.strip().lower() in closed:
            assert parse_label(text) is IntentLabel(text.strip().lower())
        else:
            with pytest.raises(OutOfVocabularyLabel):
                parse_label(text)


class TestPrediction:
    def test_confidence_bounds(self):
        with pytest.raises(DataFormatError):
            Prediction("q1", IntentLabel.INFORMATIONAL, 0.0, Provenance.WEAK)
        with pytest.raises(DataFormatError):
            Prediction("q1", IntentLabel.INFORMATIONAL, 1.2, Provenance.WEAK)

    def test_gold_confidence_exactly_one(self):
        Prediction("q1", IntentLabel.INFORMATIONAL, 1.0, Provenance.GOLD)
        with pytest.raises(DataFormatError):
            Prediction("q1", IntentLabel.INFORMATIONAL, 0.9, Provenance.GOLD)

    def test_provenance_wire_values(self):
        assert parse_provenance("llm-icl") is Provenance.LLM_ICL
        assert parse_provenance("llm_ft") is Provenance.LLM_FT
        with pytest.raises(OutOfVocabularyLabel):
            parse_provenance("oracle")


class TestJsonl:
    def test_round_trip(self, tmp_path):
        records = [
            {"id": "a", "query": "facebook login", "label": "navigational",
             "confidence": 1.0, "provenance": "weak"},
            {"id": "b", "query": "how to tie a tie"},
        ]
        path = tmp_path / "records.jsonl"
        assert write_jsonl(path, records) == 2
        assert list(read_jsonl(path)) == records
        raw = path.read_bytes()
        assert raw.endswith(b"\n") and raw.count(b"\n") == 2

    def test_malformed_line_raises(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"query": "ok"}\nnot json\n', encoding="utf-8")
        with pytest.raises(DataFormatError):
            list(read_jsonl(path))

    def test_record_to_query(self):
        q = record_to_query({"id": "x", "query": "  Mixed   Case "})
        assert q.text == "mixed case"
        assert q.query_id == "x"


class TestTsv:
    def test_orcas_layout(self, tmp_path):
        path = tmp_path / "orcas.tsv"
        path.write_text(
            "q1\tfacebook login\td1\thttp://x\n"
            "q2\tHow To Tie a Tie\td2\thttp://y\n",
            encoding="utf-8",
        )
        rows = list(read_tsv_queries(path, query_col=1, id_col=0))
        assert [(q.query_id, q.text) for _, q, err in rows if err is None] == [
            ("q1", "facebook login"),
            ("q2", "how to tie a tie"),
        ]

    def test_short_row_reported_not_raised(self, tmp_path):
        path = tmp_path / "orcas.tsv"
        path.write_text("only-one-column\nq2\tok query\td\tu\n", encoding="utf-8")
        rows = list(read_tsv_queries(path))
        assert rows[0][1] is None and rows[0][2] is not None
        assert rows[1][1].text == "ok query"

    def test_no_id_column_uses_content_hash(self, tmp_path):
        path = tmp_path / "plain.tsv"
        path.write_text("Facebook Login\n", encoding="utf-8")
        rows = list(read_tsv_queries(path, query_col=0, id_col=None))
        (_, q, err) = rows[0]
        assert err is None
        assert q.query_id == content_hash("facebook login")


class TestGold:
    def test_duplicate_texts_rejected(self, tmp_path):
        path = tmp_path / "gold.jsonl"
        rows = [
            {"id": "a", "query": "facebook login", "label": "navigational"},
            {"id": "b", "query": "Facebook   Login", "label": "navigational"},
        ]
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
        with pytest.raises(DuplicateGoldQuery):
            read_gold(path)

    def test_load(self, tmp_path):
        path = tmp_path / "gold.jsonl"
        path.write_text(
            json.dumps({"id": "a", "query": "buy shoes", "label": "Transactional"}) + "\n",
            encoding="utf-8",
        )
        gold = read_gold(path)
        assert gold[0].label is IntentLabel.TRANSACTIONAL
        assert gold[0].query.text == "buy shoes"
