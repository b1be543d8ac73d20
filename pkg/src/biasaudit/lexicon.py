"""Percent-delimited category dictionaries and a compiled matcher for them.

File layout::

    %
    1<TAB>insight
    2<TAB>cause
    %
    know*<TAB>1
    because<TAB>2
    in spite* of<TAB>2

Stems end with ``*`` (trailing only).  Phrases are 2-3 tokens joined by single
spaces; each phrase token may itself be a stem.  ``#`` lines and blank lines
are ignored anywhere in the file.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable

MAX_PHRASE_LEN = 3


class DictionaryError(ValueError):
    """Malformed dictionary text; ``line`` is the 1-based source line."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class PatternKind(enum.Enum):
    EXACT = "exact"
    STEM = "stem"
    PHRASE = "phrase"


@dataclass(frozen=True)
class Pattern:
    kind: PatternKind
    text: str

    @classmethod
    def parse(cls, raw: str) -> "Pattern":
        """Classify a pattern field. Raises ValueError on invalid input."""
        text = raw.lower()
        if not text:
            raise ValueError("empty pattern")
        if text != text.strip() or "\t" in text or "\n" in text:
            raise ValueError(f"pattern {raw!r} has surrounding or illegal whitespace")
        tokens = text.split(" ")
        if len(tokens) == 1:
            _check_token(tokens[0])
            if tokens[0].endswith("*"):
                return cls(PatternKind.STEM, tokens[0][:-1])
            return cls(PatternKind.EXACT, tokens[0])
        if len(tokens) > MAX_PHRASE_LEN:
            raise ValueError(f"phrase {raw!r} has {len(tokens)} tokens (max {MAX_PHRASE_LEN})")
        for tok in tokens:
            if not tok:
                raise ValueError(f"phrase {raw!r} must use single spaces")
            _check_token(tok)
        return cls(PatternKind.PHRASE, text)

    @property
    def source(self) -> str:
        """The pattern as it is written in a dictionary file."""
        if self.kind is PatternKind.STEM:
            return self.text + "*"
        return self.text

    @property
    def tokens(self) -> tuple[str, ...]:
        return tuple(self.source.split(" "))


def _check_token(tok: str) -> None:
    if any(ch.isspace() for ch in tok):
        raise ValueError(f"token {tok!r} contains whitespace")
    stem = tok[:-1] if tok.endswith("*") else tok
    if not stem:
        raise ValueError("bare wildcard")
    if "*" in stem:
        raise ValueError(f"wildcard inside {tok!r}; only a trailing '*' is allowed")


@dataclass(frozen=True)
class Entry:
    pattern: Pattern
    category_ids: frozenset[int]


@dataclass(frozen=True)
class Lexicon:
    categories: tuple[tuple[int, str], ...]
    entries: tuple[Entry, ...] = ()

    def __post_init__(self) -> None:
        ids = [cid for cid, _ in self.categories]
        names = [name for _, name in self.categories]
        if any(cid <= 0 for cid in ids):
            raise ValueError("category ids must be positive")
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate category id")
        if len(set(names)) != len(names):
            raise ValueError("duplicate category name")
        known = set(ids)
        seen: set[Pattern] = set()
        for entry in self.entries:
            if not entry.category_ids:
                raise ValueError(f"entry {entry.pattern.source!r} has no categories")
            missing = entry.category_ids - known
            if missing:
                raise ValueError(f"entry {entry.pattern.source!r} references unknown ids {sorted(missing)}")
            if entry.pattern in seen:
                raise ValueError(f"duplicate pattern {entry.pattern.source!r}")
            seen.add(entry.pattern)

    @property
    def names(self) -> dict[int, str]:
        return dict(self.categories)

    @property
    def ids(self) -> dict[str, int]:
        return {name: cid for cid, name in self.categories}


def _significant_lines(source: str) -> Iterable[tuple[int, str]]:
    for lineno, line in enumerate(source.split("\n"), start=1):
        line = line.rstrip("\r")
        if not line.strip() or line.startswith("#"):
            continue
        yield lineno, line


def parse_dictionary(source: str) -> Lexicon:
    lines = _significant_lines(source)
    first = next(lines, None)
    if first is None:
        raise DictionaryError(1, "empty dictionary; expected '%' header")
    lineno, line = first
    if line.strip() != "%":
        raise DictionaryError(lineno, "expected '%' to open the category header")

    categories: list[tuple[int, str]] = []
    id_seen: set[int] = set()
    name_seen: set[str] = set()
    closed = False
    last = lineno
    for lineno, line in lines:
        last = lineno
        if line.strip() == "%":
            closed = True
            break
        parts = line.split("\t")
        if len(parts) != 2:
            raise DictionaryError(lineno, "category line must be '<id><TAB><name>'")
        raw_id, name = parts[0].strip(), parts[1].strip()
        if not raw_id.isdigit() or int(raw_id) <= 0:
            raise DictionaryError(lineno, f"category id {raw_id!r} is not a positive integer")
        if not name or any(ch.isspace() for ch in name):
            raise DictionaryError(lineno, f"invalid category name {name!r}")
        cid = int(raw_id)
        if cid in id_seen:
            raise DictionaryError(lineno, f"duplicate category id {cid}")
        if name in name_seen:
            raise DictionaryError(lineno, f"duplicate category name {name!r}")
        id_seen.add(cid)
        name_seen.add(name)
        categories.append((cid, name))
    if not closed:
        raise DictionaryError(last, "category header not closed with '%'")

    entries: list[Entry] = []
    pattern_lines: dict[Pattern, int] = {}
    for lineno, line in lines:
        parts = line.split("\t")
        if len(parts) < 2:
            raise DictionaryError(lineno, "entry line must be '<pattern><TAB><id>[<TAB><id>...]'")
        try:
            pattern = Pattern.parse(parts[0])
        except ValueError as exc:
            raise DictionaryError(lineno, str(exc)) from None
        ids: list[int] = []
        for raw_id in parts[1:]:
            raw_id = raw_id.strip()
            if not raw_id.isdigit():
                raise DictionaryError(lineno, f"category id {raw_id!r} is not an integer")
            cid = int(raw_id)
            if cid not in id_seen:
                raise DictionaryError(lineno, f"unknown category id {cid}")
            if cid in ids:
                raise DictionaryError(lineno, f"category id {cid} repeated")
            ids.append(cid)
        if pattern in pattern_lines:
            raise DictionaryError(
                lineno, f"duplicate pattern {pattern.source!r} (first on line {pattern_lines[pattern]})"
            )
        pattern_lines[pattern] = lineno
        entries.append(Entry(pattern, frozenset(ids)))

    return Lexicon(tuple(categories), tuple(entries))


def serialize_dictionary(lexicon: Lexicon) -> str:
    out = ["%"]
    out.extend(f"{cid}\t{name}" for cid, name in lexicon.categories)
    out.append("%")
    for entry in lexicon.entries:
        ids = "\t".join(str(cid) for cid in sorted(entry.category_ids))
        out.append(f"{entry.pattern.source}\t{ids}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# compiled matcher


@dataclass
class _CharNode:
    children: dict[str, "_CharNode"] = field(default_factory=dict)
    exact: frozenset[int] = frozenset()
    stem: frozenset[int] = frozenset()


@dataclass
class _PhraseNode:
    exact: dict[str, "_PhraseNode"] = field(default_factory=dict)
    stem: dict[str, "_PhraseNode"] = field(default_factory=dict)
    cats: frozenset[int] = frozenset()


class Matcher:
    """Character trie for single words plus a token trie for phrases.

    Build with :func:`compile_matcher`; the structure is not modified after
    construction, so one instance can be shared across threads.
    """

    def __init__(self, lexicon: Lexicon):
        self.lexicon = lexicon
        self._root = _CharNode()
        self._phrases = _PhraseNode()
        self.max_phrase_len = 1
        for entry in lexicon.entries:
            pat = entry.pattern
            if pat.kind is PatternKind.PHRASE:
                node = self._phrases
                for tok in pat.tokens:
                    if tok.endswith("*"):
                        node = node.stem.setdefault(tok[:-1], _PhraseNode())
                    else:
                        node = node.exact.setdefault(tok, _PhraseNode())
                node.cats = node.cats | entry.category_ids
                self.max_phrase_len = max(self.max_phrase_len, len(pat.tokens))
                continue
            node = self._root
            for ch in pat.text:
                node = node.children.setdefault(ch, _CharNode())
            if pat.kind is PatternKind.EXACT:
                node.exact = node.exact | entry.category_ids
            else:
                node.stem = node.stem | entry.category_ids

    def match_token(self, token: str) -> frozenset[int]:
        found: set[int] = set()
        node = self._root
        for ch in token:
            node = node.children.get(ch)
            if node is None:
                return frozenset(found)
            found |= node.stem
        found |= node.exact
        return frozenset(found)

    def match_phrases(self, tokens: Iterable[str]) -> list[tuple[int, frozenset[int]]]:
        window = list(tokens)[:MAX_PHRASE_LEN]
        by_len: dict[int, set[int]] = {}
        frontier = [self._phrases]
        for depth, tok in enumerate(window, start=1):
            nxt: list[_PhraseNode] = []
            for node in frontier:
                child = node.exact.get(tok)
                if child is not None:
                    nxt.append(child)
                if node.stem:
                    for end in range(1, len(tok) + 1):
                        child = node.stem.get(tok[:end])
                        if child is not None:
                            nxt.append(child)
            if not nxt:
                break
            if depth >= 2:
                for node in nxt:
                    if node.cats:
                        by_len.setdefault(depth, set()).update(node.cats)
            frontier = nxt
        return [(n, frozenset(by_len[n])) for n in sorted(by_len, reverse=True)]


def compile_matcher(lexicon: Lexicon) -> Matcher:
    return Matcher(lexicon)


def match_token(matcher: Matcher, token: str) -> frozenset[int]:
    """Union of categories of exact entries equal to ``token`` and stems prefixing it."""
    return matcher.match_token(token)


def match_phrases(matcher: Matcher, tokens: Iterable[str]) -> list[tuple[int, frozenset[int]]]:
    """Phrase matches anchored at the window start, longest first.

    Phrase entries of the same length that all match are merged into one
    ``(length, ids)`` pair.
    """
    return matcher.match_phrases(tokens)


def load_dictionary(path) -> Lexicon:
    with open(path, encoding="utf-8") as fh:
        return parse_dictionary(fh.read())
