"""Tokenization and per-document feature vectors."""

from __future__ import annotations

import csv
import io
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import yaml

from .lexicon import Matcher

FEATURES: tuple[str, ...] = (
    "Segment", "WC", "Analytic", "Clout", "Tone",
    "affiliation", "achieve", "power", "insight", "cause", "discrep", "tentat",
    "certitude", "differ", "tone_pos", "tone_neg", "emotion", "emo_pos",
    "emo_neg", "emo_anx", "emo_anger", "emo_sad", "prosocial", "polite",
    "conflict", "moral", "comm", "politic", "ethnicity", "tech", "reward",
    "risk", "curiosity", "allure",
)
COMPUTED = ("Segment", "WC")
COMPOSITES = ("Analytic", "Clout", "Tone")
CATEGORY_FEATURES: tuple[str, ...] = tuple(f for f in FEATURES if f not in COMPUTED + COMPOSITES)

_TOKEN_RE = re.compile(r"[^\W_]+(?:['\-][^\W_]+)*")
# phrases never span one of these
_CLAUSE_RE = re.compile(r"[.!?;:]+")


def tokenize(text: str) -> list[str]:
    """Lowercase word tokens: alphanumeric runs joined by internal ``'`` or ``-``."""
    return [m.group(0) for m in _TOKEN_RE.finditer(_normalize(text))]


def _normalize(text: str) -> str:
    return text.replace("’", "'").replace("‐", "-").replace("‑", "-").lower()


def _clauses(text: str) -> list[list[str]]:
    return [tokenize(part) for part in _CLAUSE_RE.split(text)]


@dataclass(frozen=True)
class CompositeDef:
    name: str
    intercept: float
    terms: tuple[tuple[str, float], ...]
    clamp: tuple[float, float] = (0.0, 100.0)


def load_composites(path: str | Path) -> list[CompositeDef]:
    with open(path, encoding="utf-8") as fh:
        return parse_composites(yaml.safe_load(fh))


def parse_composites(tree) -> list[CompositeDef]:
    """Build definitions from the ``composites:`` tree of a config document."""
    items = tree.get("composites", tree) if isinstance(tree, dict) else tree
    defs = []
    for item in items or []:
        terms = tuple((str(cat), float(w)) for cat, w in (item.get("terms") or {}).items())
        lo, hi = item.get("clamp", [0, 100])
        defs.append(CompositeDef(str(item["name"]), float(item.get("intercept", 0.0)), terms, (float(lo), float(hi))))
    names = [d.name for d in defs]
    if len(set(names)) != len(names):
        raise ValueError("duplicate composite name")
    return defs


def compute_composites(raw: Mapping[str, float], defs: Iterable[CompositeDef]) -> dict[str, float]:
    out = {}
    for d in defs:
        total = d.intercept
        for cat, weight in d.terms:
            if cat not in raw:
                raise KeyError(f"composite {d.name!r} references unknown category {cat!r}")
            total += weight * raw[cat]
        lo, hi = d.clamp
        out[d.name] = min(max(total, lo), hi)
    return out


def validate_composites(defs: Iterable[CompositeDef], categories: Iterable[str]) -> None:
    known = set(categories) | set(FEATURES)
    for d in defs:
        for cat, _ in d.terms:
            if cat not in known:
                raise ValueError(f"composite {d.name!r} references unknown category {cat!r}")


@dataclass(frozen=True)
class FeatureVector:
    record_id: str
    variant: str
    values: tuple[float, ...]
    degenerate: bool = False

    def __getitem__(self, feature: str) -> float:
        return self.values[FEATURES.index(feature)]

    def as_dict(self) -> dict[str, float]:
        return dict(zip(FEATURES, self.values))


def category_counts(matcher: Matcher, text: str) -> tuple[int, dict[int, int]]:
    """Word count and per-category-id hit counts.

    Every token position contributes at most one hit per category: the union
    of its own single-word categories and those of any phrase starting there.
    """
    wc = 0
    counts: dict[int, int] = {}
    plen = matcher.max_phrase_len
    for tokens in _clauses(text):
        wc += len(tokens)
        for i, tok in enumerate(tokens):
            cats = set(matcher.match_token(tok))
            if plen > 1 and i + 1 < len(tokens):
                for _, ids in matcher.match_phrases(tokens[i:i + plen]):
                    cats |= ids
            for cid in cats:
                counts[cid] = counts.get(cid, 0) + 1
    return wc, counts


def extract_features(
    matcher: Matcher,
    composites: Sequence[CompositeDef],
    text: str,
    record_id: str = "",
    variant: str = "human",
) -> FeatureVector:
    wc, counts = category_counts(matcher, text)
    names = matcher.lexicon.names
    raw = {name: 0.0 for name in names.values()}
    if wc:
        for cid, n in counts.items():
            raw[names[cid]] = 100.0 * n / wc
    missing = [f for f in CATEGORY_FEATURES if f not in raw]
    if missing:
        raise ValueError(f"dictionary lacks categories {missing}")
    raw["WC"] = float(wc)
    raw["Segment"] = 1.0
    if wc:
        raw.update(compute_composites(raw, composites))
    else:
        raw.update({d.name: 0.0 for d in composites})
    for name in COMPOSITES:
        raw.setdefault(name, math.nan)
    return FeatureVector(record_id, variant, tuple(raw[f] for f in FEATURES), degenerate=wc == 0)


def _extract_row(args):
    matcher, composites, (record_id, variant, text) = args
    return extract_features(matcher, composites, text, record_id, variant)


def extract_corpus(
    matcher: Matcher,
    composites: Sequence[CompositeDef],
    documents: Iterable[tuple[str, str, str]],
    workers: int = 1,
) -> list[FeatureVector]:
    """One vector per ``(record_id, variant, text)`` row, in input order."""
    docs = list(documents)
    if workers <= 1 or len(docs) < 2:
        return [extract_features(matcher, composites, text, rid, var) for rid, var, text in docs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        chunk = max(1, len(docs) // (workers * 4))
        return list(pool.map(_extract_row, ((matcher, composites, d) for d in docs), chunksize=chunk))


# ---------------------------------------------------------------------------
# CSV persistence

TABLE_HEADER = ("record_id", "variant", *FEATURES, "degenerate")


def format_value(x: float) -> str:
    return "NaN" if math.isnan(x) else repr(float(x))


def dump_feature_table(vectors: Iterable[FeatureVector]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TABLE_HEADER)
    for v in vectors:
        writer.writerow([v.record_id, v.variant, *(format_value(x) for x in v.values), int(v.degenerate)])
    return buf.getvalue()


def load_feature_table(text: str) -> list[FeatureVector]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != TABLE_HEADER:
        raise ValueError("feature table header does not match the feature schema")
    rows = []
    for row in reader:
        values = tuple(float(x) for x in row[2:-1])
        rows.append(FeatureVector(row[0], row[1], values, degenerate=row[-1] == "1"))
    return rows
