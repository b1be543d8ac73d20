"""Random input generators shared by several test modules."""

import random

from biasaudit.lexicon import Entry, Lexicon, Pattern


def random_lexicon(rng: random.Random, n_entries: int, n_cats: int = 6, alphabet: str = "abcd") -> Lexicon:
    """Small alphabet so stems, exacts and phrases collide often."""
    cats = tuple((i + 1, f"c{i + 1}") for i in range(n_cats))
    seen, entries = set(), []

    def word(lo=1, hi=4):
        return "".join(rng.choice(alphabet) for _ in range(rng.randint(lo, hi)))

    attempts = 0
    while len(entries) < n_entries and attempts < n_entries * 20:
        attempts += 1
        kind = rng.random()
        if kind < 0.45:
            src = word()
        elif kind < 0.8:
            src = word() + "*"
        else:
            src = " ".join(word(1, 3) + ("*" if rng.random() < 0.3 else "") for _ in range(rng.randint(2, 3)))
        pat = Pattern.parse(src)
        if pat in seen:
            continue
        seen.add(pat)
        ids = frozenset(rng.sample(range(1, n_cats + 1), rng.randint(1, min(3, n_cats))))
        entries.append(Entry(pat, ids))
    return Lexicon(cats, tuple(entries))
