"""First-name gender lookup and publication-level gender labels."""

from __future__ import annotations

import csv
import enum
from collections import Counter
from pathlib import Path
from typing import Iterable, Mapping

DEFAULT_THRESHOLD = 0.9

NameLexicon = Mapping[str, tuple[int, int]]


class Gender(str, enum.Enum):
    FEMALE = "Female"
    MALE = "Male"
    MIXED = "MixedGender"
    UNKNOWN = "Unknown"


def load_name_lexicon(path: str | Path) -> dict[str, tuple[int, int]]:
    """Read a ``name,female_count,male_count`` CSV."""
    lexicon: dict[str, tuple[int, int]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"name", "female_count", "male_count"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected header name,female_count,male_count")
        for lineno, row in enumerate(reader, start=2):
            f, m = int(row["female_count"]), int(row["male_count"])
            if f < 0 or m < 0 or f + m == 0:
                raise ValueError(f"{path}:{lineno}: counts must be non-negative with at least one positive")
            lexicon[row["name"].strip().lower()] = (f, m)
    return lexicon


def first_name(name: str) -> str:
    """First given-name token; handles ``"Lastname, Firstname"``."""
    if "," in name:
        name = name.split(",", 1)[1]
    parts = name.split()
    return parts[0].strip(".").lower() if parts else ""


def infer_name_gender(name: str, lexicon: NameLexicon, threshold: float = DEFAULT_THRESHOLD) -> Gender:
    if not 0.5 < threshold <= 1:
        raise ValueError("threshold must lie in (0.5, 1]")
    counts = lexicon.get(first_name(name))
    if counts is None:
        return Gender.UNKNOWN
    female, male = counts
    total = female + male
    if total == 0:
        return Gender.UNKNOWN
    if female / total >= threshold:
        return Gender.FEMALE
    if male / total >= threshold:
        return Gender.MALE
    return Gender.UNKNOWN


def classify_publication(author_genders: Iterable[Gender]) -> Gender:
    resolved = {g for g in author_genders if g in (Gender.FEMALE, Gender.MALE)}
    if resolved == {Gender.FEMALE}:
        return Gender.FEMALE
    if resolved == {Gender.MALE}:
        return Gender.MALE
    if resolved:
        return Gender.MIXED
    return Gender.UNKNOWN


def label_authors(authors: Iterable[str], lexicon: NameLexicon, threshold: float = DEFAULT_THRESHOLD) -> Gender:
    return classify_publication(infer_name_gender(a, lexicon, threshold) for a in authors)


def summarize_gender_distribution(corpus: Iterable) -> dict[Gender, int]:
    """Count labels over records (anything with ``.gender``) or bare labels."""
    counts = Counter(Gender(getattr(item, "gender", item)) for item in corpus)
    return {g: counts.get(g, 0) for g in Gender}
