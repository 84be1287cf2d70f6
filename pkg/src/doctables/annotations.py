"""Ground-truth annotation files backing the mock oracle.

One JSON file per document (``<doc_id>.ann.json``) records what a perfect
reader would answer: which phrases are headers, where each declared table
lives, and the tuples it contains with attribute values and the phrase
span each value came from. Spans are inclusive 1-based phrase intervals
``[start, end]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .docmodel import TextSpan


@dataclass
class AttrTruth:
    value: object  # str | float | ISO date string
    source: TextSpan


@dataclass
class TupleTruth:
    span: TextSpan
    attrs: dict[str, AttrTruth] = field(default_factory=dict)


@dataclass
class TableTruth:
    region: TextSpan
    tuples: list[TupleTruth] = field(default_factory=list)


@dataclass
class DocTruth:
    doc_id: str
    headers: set[int] = field(default_factory=set)
    tables: dict[str, TableTruth] = field(default_factory=dict)  # keys lowercased

    def table(self, name: str) -> TableTruth | None:
        return self.tables.get(name.lower())

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "headers": sorted(self.headers),
            "tables": {
                name: {
                    "region": [t.region.start, t.region.end],
                    "tuples": [
                        {
                            "span": [tp.span.start, tp.span.end],
                            "attrs": {
                                a: {"value": av.value,
                                    "source": [av.source.start, av.source.end]}
                                for a, av in tp.attrs.items()
                            },
                        }
                        for tp in t.tuples
                    ],
                }
                for name, t in self.tables.items()
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DocTruth":
        tables = {}
        for name, t in data.get("tables", {}).items():
            tuples = []
            for tp in t.get("tuples", []):
                attrs = {a: AttrTruth(value=av["value"],
                                      source=TextSpan(*av["source"]))
                         for a, av in tp.get("attrs", {}).items()}
                tuples.append(TupleTruth(span=TextSpan(*tp["span"]), attrs=attrs))
            tables[name.lower()] = TableTruth(region=TextSpan(*t["region"]), tuples=tuples)
        return cls(doc_id=data["doc_id"], headers=set(data.get("headers", [])),
                   tables=tables)

    def save(self, directory: str | Path) -> Path:
        path = Path(directory) / f"{self.doc_id}.ann.json"
        path.write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True),
                        encoding="utf-8")
        return path


class AnnotationStore:
    """Loads and caches per-document ground truth from a directory."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self._cache: dict[str, DocTruth] = {}

    def get(self, doc_id: str) -> DocTruth | None:
        if doc_id in self._cache:
            return self._cache[doc_id]
        path = self.directory / f"{doc_id}.ann.json"
        if not path.exists():
            return None
        truth = DocTruth.from_dict(json.loads(path.read_text(encoding="utf-8")))
        self._cache[doc_id] = truth
        return truth

    def put(self, truth: DocTruth) -> None:
        self._cache[truth.doc_id] = truth
