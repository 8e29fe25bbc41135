"""Category vocabulary and mention matching in free-form question text."""

import re
from typing import Iterable

import numpy as np

__all__ = ["DEFAULT_VOCABULARY", "find_categories"]

# Furniture and fixture categories used by the scene generator; the knowledge
# store and scene files can extend it.
DEFAULT_VOCABULARY = (
    "bathtub", "bed", "bookshelf", "cabinet", "chair", "coffee table", "desk",
    "dishwasher", "door", "fireplace", "lamp", "monitor", "nightstand", "piano",
    "plant", "printer", "refrigerator", "sink", "sofa", "stool", "stove", "table",
    "toilet", "trash can", "tv", "washer", "window",
)


def find_categories(text: str, vocabulary: Iterable[str]) -> list:
    """Vocabulary names mentioned in ``text``, in order of first mention.

    Longer names win over names they contain ("coffee table" over "table");
    a trailing plural "s"/"es" or "(s)" is accepted.
    """
    lowered = text.lower()
    taken = np.zeros(len(lowered), dtype=bool)
    hits = []
    for name in sorted(set(vocabulary), key=lambda n: (-len(n), n)):
        pattern = r"(?<![a-z0-9])" + re.escape(name.lower()) + r"(?:\(s\)|es|s)?(?![a-z0-9])"
        for m in re.finditer(pattern, lowered):
            if taken[m.start():m.end()].any():
                continue
            taken[m.start():m.end()] = True
            hits.append((m.start(), name))
    seen, ordered = set(), []
    for _, name in sorted(hits):
        if name not in seen:
            seen.add(name)
            ordered.append(name)
    return ordered
