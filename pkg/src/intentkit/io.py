"""File formats: JSONL records and ORCAS-style TSV ingestion.

The JSONL record is the lingua franca between stages:

    {"id": str?, "query": str, "label": str?, "confidence": float?, "provenance": str?}

one object per line, UTF-8, LF-terminated. Extra keys (e.g. "votes",
"defaulted") are preserved by readers and ignored by consumers that do not
need them.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable, Iterator

from .errors import DataFormatError, DuplicateGoldQuery
from .model import GoldRecord, Query, parse_label


def read_jsonl(path: str | Path) -> Iterator[dict[str, Any]]:
    """Strict JSONL reader; malformed lines raise DataFormatError."""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise DataFormatError(f"{path}:{lineno}: expected an object")
            yield obj


def read_jsonl_lenient(path: str | Path) -> Iterator[tuple[int, dict[str, Any] | None, str | None]]:
    """Yield (lineno, record, error) so streaming callers can count bad lines."""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                yield lineno, None, f"invalid JSON: {exc}"
                continue
            if not isinstance(obj, dict):
                yield lineno, None, "expected an object"
                continue
            yield lineno, obj, None


def write_jsonl(path: str | Path, records: Iterable[dict[str, Any]]) -> int:
    """Write LF-terminated JSONL; returns the record count."""
    count = 0
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False))
            fh.write("\n")
            count += 1
    return count


def dumps_record(rec: dict[str, Any]) -> str:
    return json.dumps(rec, ensure_ascii=False)


def read_tsv_queries(
    path: str | Path,
    query_col: int = 1,
    id_col: int | None = 0,
) -> Iterator[tuple[int, Query | None, str | None]]:
    """ORCAS-compatible TSV: tab-separated, query text in `query_col`.

    Other columns are ignored. Yields (lineno, query, error); rows that are
    too short or normalize to empty are reported, not raised.
    """
    needed = max(query_col, id_col if id_col is not None else 0)
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            row = line.rstrip("\n").rstrip("\r")
            if not row:
                continue
            cols = row.split("\t")
            if len(cols) <= needed:
                yield lineno, None, f"expected at least {needed + 1} columns, got {len(cols)}"
                continue
            qid = cols[id_col].strip() if id_col is not None else None
            try:
                query = Query.from_raw(cols[query_col], id=qid or None)
            except Exception as exc:  # EmptyQuery / QueryTooLong
                yield lineno, None, str(exc)
                continue
            yield lineno, query, None


def query_to_record(q: Query) -> dict[str, Any]:
    return {"id": q.query_id, "query": q.text}


def record_to_query(rec: dict[str, Any]) -> Query:
    if "query" not in rec:
        raise DataFormatError(f"record missing 'query': {rec!r}")
    rid = rec.get("id")
    return Query.from_raw(str(rec["query"]), id=str(rid) if rid is not None else None)


def read_gold(path: str | Path) -> list[GoldRecord]:
    """Load a gold set, rejecting duplicate query texts."""
    records: list[GoldRecord] = []
    seen: set[str] = set()
    for rec in read_jsonl(path):
        query = record_to_query(rec)
        if "label" not in rec or rec["label"] is None:
            raise DataFormatError(f"gold record missing label: {rec!r}")
        label = parse_label(str(rec["label"]))
        if query.text in seen:
            raise DuplicateGoldQuery(f"duplicate gold query text: {query.text!r}")
        seen.add(query.text)
        records.append(GoldRecord(query=query, label=label))
    return records
