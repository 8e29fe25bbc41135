"""Size priors for objects and rooms with deterministic lexical retrieval."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

__all__ = [
    "KnowledgeEntry",
    "KnowledgeStore",
    "KnowledgeFormatError",
    "load_knowledge",
    "default_store",
    "retrieve",
    "render_entry",
    "parse_entry",
    "tokenize",
]

KINDS = ("object", "room")
STOPWORDS = frozenset(
    "a an and are as at be by can do does for from how in is it its of on or the this "
    "that to what which with".split()
)
_TOKEN = re.compile(r"[a-z0-9]+")
_RENDERED = re.compile(
    r"^(?P<name>.+?): (?P<mean>[0-9.]+×[0-9.]+×[0-9.]+) m ± (?P<std>[0-9.]+×[0-9.]+×[0-9.]+)"
    r"; (?P<desc>.+)$"
)


class KnowledgeFormatError(ValueError):
    pass


def _num(x: float) -> str:
    s = f"{x:.3f}".rstrip("0").rstrip(".")
    return s or "0"


@dataclass(frozen=True)
class KnowledgeEntry:
    name: str
    kind: str
    dims_mean: tuple
    dims_std: tuple
    description: str

    def __post_init__(self):
        if not self.name.strip():
            raise KnowledgeFormatError("name must be non-empty")
        if self.kind not in KINDS:
            raise KnowledgeFormatError(f"kind must be one of {KINDS}, got {self.kind!r}")
        for field, vals, strict in (("dims_mean", self.dims_mean, True),
                                    ("dims_std", self.dims_std, False)):
            if len(vals) != 3 or not all(isinstance(v, (int, float)) for v in vals):
                raise KnowledgeFormatError(f"{field} must be three numbers")
            if any(v <= 0 if strict else v < 0 for v in vals):
                raise KnowledgeFormatError(f"{field} must be {'positive' if strict else 'non-negative'}")
        if not self.description.strip():
            raise KnowledgeFormatError("description must be non-empty")
        object.__setattr__(self, "dims_mean", tuple(float(v) for v in self.dims_mean))
        object.__setattr__(self, "dims_std", tuple(float(v) for v in self.dims_std))

    @classmethod
    def from_dict(cls, d: dict) -> "KnowledgeEntry":
        if not isinstance(d, dict):
            raise KnowledgeFormatError("entry must be a JSON object")
        missing = [k for k in ("name", "kind", "dims_mean", "dims_std", "description") if k not in d]
        if missing:
            raise KnowledgeFormatError(f"missing field(s): {', '.join(missing)}")
        return cls(str(d["name"]), d["kind"], tuple(d["dims_mean"]), tuple(d["dims_std"]),
                   str(d["description"]))

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind, "dims_mean": list(self.dims_mean),
                "dims_std": list(self.dims_std), "description": self.description}


def render_entry(entry: KnowledgeEntry) -> str:
    mean = "×".join(_num(v) for v in entry.dims_mean)
    std = "×".join(_num(v) for v in entry.dims_std)
    return f"{entry.name}: {mean} m ± {std}; {entry.description}"


def parse_entry(text: str, kind: str = "object") -> KnowledgeEntry:
    """Inverse of :func:`render_entry` (the kind is not part of the rendering)."""
    m = _RENDERED.match(text)
    if m is None:
        raise KnowledgeFormatError(f"not a rendered entry: {text!r}")
    mean = tuple(float(v) for v in m["mean"].split("×"))
    std = tuple(float(v) for v in m["std"].split("×"))
    return KnowledgeEntry(m["name"], kind, mean, std, m["desc"])


def tokenize(text: str) -> set:
    return {t for t in _TOKEN.findall(text.lower()) if t not in STOPWORDS}


class KnowledgeStore:
    """Immutable collection of entries, unique by name."""

    def __init__(self, entries=()):
        self._entries = tuple(entries)
        seen = set()
        for e in self._entries:
            if e.name in seen:
                raise KnowledgeFormatError(f"duplicate entry name {e.name!r}")
            seen.add(e.name)
        self._index = [(e, tokenize(e.name), tokenize(e.description)) for e in self._entries]

    def __len__(self):
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def get(self, name: str) -> Optional[KnowledgeEntry]:
        for e in self._entries:
            if e.name == name:
                return e
        return None

    def scored(self, query: str) -> list:
        """``(score, entry)`` for every entry with a positive score, best first."""
        q = tokenize(query)
        out = []
        for e, name_tok, desc_tok in self._index:
            score = 3 * len(q & name_tok) + len(q & desc_tok)
            if score > 0:
                out.append((score, e))
        out.sort(key=lambda se: (-se[0], se[1].name))
        return out


def load_knowledge(path) -> KnowledgeStore:
    """Read a newline-delimited JSON knowledge file; errors carry the line number."""
    entries, names = [], {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                entry = KnowledgeEntry.from_dict(json.loads(line))
            except json.JSONDecodeError as exc:
                raise KnowledgeFormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            except (KnowledgeFormatError, TypeError, ValueError) as exc:
                raise KnowledgeFormatError(f"{path}:{lineno}: {exc}") from None
            if entry.name in names:
                raise KnowledgeFormatError(
                    f"{path}:{lineno}: duplicate entry name {entry.name!r} "
                    f"(first defined on line {names[entry.name]})"
                )
            names[entry.name] = lineno
            entries.append(entry)
    return KnowledgeStore(entries)


_DEFAULT: Optional[KnowledgeStore] = None


def default_store() -> KnowledgeStore:
    """The bundled starter file."""
    global _DEFAULT
    if _DEFAULT is None:
        with resources.as_file(resources.files("spatial_agent").joinpath("data/knowledge.jsonl")) as p:
            _DEFAULT = load_knowledge(Path(p))
    return _DEFAULT


def retrieve(store: KnowledgeStore, query: str, top_k: int = 5) -> dict:
    if int(top_k) < 1:
        raise ValueError("top_k must be >= 1")
    hits = store.scored(query)[: int(top_k)]
    return {"query": query, "top_k": int(top_k), "entries": [render_entry(e) for _, e in hits]}
