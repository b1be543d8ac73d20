"""Corpus records: JSON-lines I/O and a CSV importer."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

from .genderid import Gender

FIELDS = ("id", "title", "abstract", "authors")


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class CorpusRecord:
    id: str
    title: str
    abstract: str
    authors: tuple[str, ...]
    gender: Gender | None = None

    def to_json(self) -> dict:
        row = {"id": self.id, "title": self.title, "abstract": self.abstract, "authors": list(self.authors)}
        if self.gender is not None:
            row["gender"] = self.gender.value
        return row


def _record(row: dict, where: str) -> CorpusRecord:
    missing = [f for f in FIELDS if f not in row]
    if missing:
        raise CorpusError(f"{where}: missing field(s) {', '.join(missing)}")
    authors = row["authors"]
    if isinstance(authors, str):
        authors = [a.strip() for a in authors.split(";") if a.strip()]
    gender = Gender(row["gender"]) if row.get("gender") else None
    return CorpusRecord(str(row["id"]), str(row["title"] or ""), str(row["abstract"] or ""), tuple(authors), gender)


def parse_jsonl(text: str, source: str = "<corpus>") -> list[CorpusRecord]:
    records = []
    seen: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{source}:{lineno}: invalid JSON ({exc.msg})") from None
        rec = _record(row, f"{source}:{lineno}")
        if rec.id in seen:
            raise CorpusError(f"{source}:{lineno}: duplicate id {rec.id!r}")
        seen.add(rec.id)
        records.append(rec)
    return records


def read_corpus(path: str | Path) -> list[CorpusRecord]:
    """Load a ``.jsonl`` corpus, or a ``.csv`` with ``;``-separated authors."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
        records = [_record(row, f"{path}:{i}") for i, row in enumerate(rows, start=2)]
        ids = [r.id for r in records]
        if len(set(ids)) != len(ids):
            raise CorpusError(f"{path}: duplicate ids")
        return records
    return parse_jsonl(path.read_text(encoding="utf-8"), str(path))


def dump_jsonl(records) -> str:
    return "".join(json.dumps(r.to_json(), ensure_ascii=False) + "\n" for r in records)
