"""Templates: derive from a tree, match documents, rebuild trees oracle-free.

A template maps each tree level to the set of visual patterns observed
there. A document matches when its phrase patterns cover a prefix of the
template's levels; matching documents get their tree assembled purely by
pattern lookup, with zero oracle involvement. Collection ingestion tries
every known template first and only falls back to the oracle pipeline,
registering the template the new tree induces.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .config import Config
from .docmodel import Document, VisualPattern, document_patterns
from .errors import NotWellFormattedError
from .oracle import Oracle
from .sht import (Cluster, Sht, build_tree, check_well_formatted, node_patterns,
                  oracle_gen)


@dataclass
class Template:
    levels: dict[int, frozenset[VisualPattern]]  # granularity 1..L, contiguous
    source_doc: str

    def __post_init__(self):
        if sorted(self.levels) != list(range(1, len(self.levels) + 1)):
            raise ValueError(f"template levels must be contiguous from 1, got {sorted(self.levels)}")

    @property
    def patterns(self) -> frozenset[VisualPattern]:
        return frozenset(p for level in self.levels.values() for p in level)

    def granularity_of(self, pattern: VisualPattern) -> int:
        for granularity, level in self.levels.items():
            if pattern in level:
                return granularity
        return -1

    def to_record(self) -> dict:
        return {
            "source_doc": self.source_doc,
            "levels": [{"granularity": g,
                        "patterns": sorted((p.to_dict() for p in self.levels[g]),
                                           key=lambda d: json.dumps(d, sort_keys=True))}
                       for g in sorted(self.levels)],
        }

    @classmethod
    def from_record(cls, record: dict) -> "Template":
        levels = {entry["granularity"]:
                  frozenset(VisualPattern.from_dict(p) for p in entry["patterns"])
                  for entry in record["levels"]}
        return cls(levels=levels, source_doc=record["source_doc"])


@dataclass
class MatchResult:
    matched: bool
    prefix_depth: int
    template: Template | None = None


def derive_template(sht: Sht, patterns: dict[int, VisualPattern | None]) -> Template:
    """Group node patterns by granularity; rejects ill-formatted trees.

    When the root is the artificial empty phrase (which has no pattern),
    levels are taken relative to the first pattern-bearing depth so they
    stay contiguous from 1.
    """
    report = check_well_formatted(sht, patterns)
    if not report.ok:
        raise NotWellFormattedError(
            f"{sht.doc_id}: {len(report.sibling_violations)} sibling and "
            f"{len(report.prefix_violations)} prefix violations", report=report)
    offset = 1 if sht.nodes[sht.root].phrase_index == 0 else 0
    levels: dict[int, set[VisualPattern]] = {}
    for node in sht.nodes.values():
        pattern = patterns[node.node_id]
        if pattern is None:
            continue
        levels.setdefault(node.granularity - offset, set()).add(pattern)
    return Template(levels={g: frozenset(ps) for g, ps in levels.items()},
                    source_doc=sht.doc_id)


def match_template(template: Template, doc_patterns: list[VisualPattern],
                   prefix_threshold: int = 1) -> MatchResult:
    """Deepest contiguous level coverage; matched iff it reaches the threshold."""
    present = {template.granularity_of(p) for p in set(doc_patterns)}
    present.discard(-1)
    depth = 0
    while depth + 1 in present:
        depth += 1
    return MatchResult(matched=depth >= prefix_threshold, prefix_depth=depth,
                       template=template)


def template_gen(template: Template, document: Document,
                 doc_patterns: list[VisualPattern] | None = None,
                 prefix_threshold: int = 1) -> Sht | None:
    """Rebuild a tree by pattern lookup alone; empty result on a failed match.

    Phrases whose pattern appears in the template become nodes; if the
    granularities present skip a level (some g > 1 without g-1) the match
    fails and None is returned. No oracle is ever consulted.
    """
    if doc_patterns is None:
        doc_patterns = document_patterns(document)
    selected: dict[VisualPattern, list[int]] = {}
    present: set[int] = set()
    for phrase, pattern in zip(document.phrases, doc_patterns):
        granularity = template.granularity_of(pattern)
        if granularity != -1:
            selected.setdefault(pattern, []).append(phrase.index)
            present.add(granularity)
    if not present or any(g > 1 and g - 1 not in present for g in present):
        return None
    if max(present) < prefix_threshold:
        return None
    clusters = [Cluster(pattern=p, phrase_indices=sorted(ix))
                for p, ix in selected.items()]
    clusters.sort(key=lambda c: c.min_index)
    return build_tree(document.doc_id, document.n_phrases, clusters)


@dataclass
class RegisteredTemplate:
    template_id: int
    template: Template


class TemplateRegistry:
    """Append-only template store; persisted as one record per line."""

    def __init__(self):
        self.entries: list[RegisteredTemplate] = []

    def register(self, template: Template) -> RegisteredTemplate:
        entry = RegisteredTemplate(template_id=len(self.entries), template=template)
        self.entries.append(entry)
        return entry

    def save(self, path: str | Path) -> None:
        lines = []
        for entry in self.entries:
            record = {"template_id": entry.template_id}
            record.update(entry.template.to_record())
            lines.append(json.dumps(record, separators=(",", ":"), sort_keys=True))
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""),
                              encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "TemplateRegistry":
        registry = cls()
        path = Path(path)
        if not path.exists():
            return registry
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                record = json.loads(line)
                registry.entries.append(RegisteredTemplate(
                    template_id=record["template_id"],
                    template=Template.from_record(record)))
        registry.entries.sort(key=lambda e: e.template_id)
        return registry


@dataclass
class IngestRecord:
    doc_id: str
    method: str  # "template" | "oracle"
    template_id: int | None
    oracle_calls: int
    tokens_in: int
    tokens_out: int
    n_nodes: int
    error: str | None = None


@dataclass
class IngestResult:
    shts: dict[str, Sht] = field(default_factory=dict)
    patterns: dict[str, dict[int, VisualPattern | None]] = field(default_factory=dict)
    records: list[IngestRecord] = field(default_factory=list)
    registry: TemplateRegistry = field(default_factory=TemplateRegistry)


def ingest_collection(documents: list[Document], oracle: Oracle, cfg: Config,
                      registry: TemplateRegistry | None = None) -> IngestResult:
    """Process documents in input order; reuse templates, else call the oracle.

    When several templates produce a tree for a document, the largest one
    (most nodes; ties to the earliest-registered template) wins.
    """
    result = IngestResult(registry=registry or TemplateRegistry())
    for document in documents:
        try:
            record = _ingest_one(document, oracle, cfg, result)
        except Exception as exc:
            if cfg.strict:
                raise
            record = IngestRecord(doc_id=document.doc_id, method="error",
                                  template_id=None, oracle_calls=0, tokens_in=0,
                                  tokens_out=0, n_nodes=0, error=str(exc))
        result.records.append(record)
    return result


def _ingest_one(document: Document, oracle: Oracle, cfg: Config,
                result: IngestResult) -> IngestRecord:
    patterns = document_patterns(document, cfg.size_quantum, cfg.center_tolerance,
                                 cfg.include_italic)
    best: tuple[int, int, Sht] | None = None  # (-nodes, template_id, sht)
    for entry in result.registry.entries:
        sht = template_gen(entry.template, document, patterns,
                           prefix_threshold=cfg.prefix_threshold)
        if sht is None:
            continue
        key = (-len(sht.nodes), entry.template_id)
        if best is None or key < (best[0], best[1]):
            best = (key[0], key[1], sht)
    if best is not None:
        sht = best[2]
        result.shts[document.doc_id] = sht
        result.patterns[document.doc_id] = node_patterns(sht, patterns)
        return IngestRecord(doc_id=document.doc_id, method="template",
                            template_id=best[1], oracle_calls=0, tokens_in=0,
                            tokens_out=0, n_nodes=len(sht.nodes))

    gen = oracle_gen(document, oracle, cfg)
    result.shts[document.doc_id] = gen.sht
    result.patterns[document.doc_id] = gen.patterns
    template_id = None
    error = None
    try:
        entry = result.registry.register(derive_template(gen.sht, gen.patterns))
        template_id = entry.template_id
    except NotWellFormattedError as exc:
        error = f"template not registered: {exc}"
    return IngestRecord(doc_id=document.doc_id, method="oracle",
                        template_id=template_id,
                        oracle_calls=gen.report.oracle_calls,
                        tokens_in=gen.report.tokens_in,
                        tokens_out=gen.report.tokens_out,
                        n_nodes=len(gen.sht.nodes), error=error)
