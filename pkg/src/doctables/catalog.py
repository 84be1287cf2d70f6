"""Data model and persistence: the per-node tree table, table/attribute
catalogs, and user document tables with hidden system attributes.

Storage is a directory of line-delimited JSON record files (one per
logical table) written atomically (temp file + rename); no external
database. User attributes start NULL and are only filled by query
execution or explicit materialization; every written cell records the
prompt digest and source span that produced it.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .docmodel import Document, TextSpan, span_text
from .errors import CatalogConflictError, UserError
from .oracle import count_tokens
from .sht import Sht, export_records
from .summary import NodeSummary, extractive_summary

ATTR_TYPES = ("text", "number", "date")

# aggregate compatibility by attribute type
AGGREGATES_FOR = {
    "text": frozenset({"COUNT"}),
    "date": frozenset({"COUNT", "MAX", "MIN"}),
    "number": frozenset({"COUNT", "MAX", "MIN", "SUM", "AVG"}),
}


@dataclass
class DocMeta:
    doc_id: str
    template_id: int | None
    n_phrases: int
    n_pages: int


@dataclass
class ShtRow:
    doc_id: str
    node_id: int
    name: str
    granularity: int
    context: str
    summary: str  # rendered static summary (header path + extractive part)
    size: int  # token count of context
    st_page: int
    ed_page: int
    child_ids: list[int]
    ancestor_ids: list[int]  # ordered root -> parent
    phrase_index: int
    span_start: int
    span_end: int
    summary_sentences: list[str] = field(default_factory=list)

    @property
    def span(self) -> TextSpan:
        return TextSpan(self.span_start, self.span_end)


@dataclass
class DocBinding:
    table_node: int | None = None
    t_range: tuple[int, int] | None = None
    multi_tuple: bool = False


@dataclass
class TableCatalogRow:
    table_name: str
    table_descr: str
    tuple_descr: str
    bindings: dict[str, DocBinding] = field(default_factory=dict)


@dataclass
class AttributeCatalogRow:
    table_name: str
    attr_name: str
    attr_type: str
    description: str


@dataclass
class AttrCell:
    value: object = None
    digest: str | None = None
    source: tuple[int, int] | None = None
    resolved: bool = False  # True once a query searched for this value

    @property
    def is_null(self) -> bool:
        return self.value is None


@dataclass
class DTuple:
    table: str
    tuple_id: str
    doc_id: str
    text_span: TextSpan
    nodes: list[int]
    attrs: dict[str, AttrCell] = field(default_factory=dict)
    pred_cache: dict[str, bool] = field(default_factory=dict)
    provenance: list[tuple[str, int, int]] = field(default_factory=list)


class Catalog:
    """Single-writer, multi-reader store rooted at a directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.docs: dict[str, DocMeta] = {}
        self.sht: dict[str, dict[int, ShtRow]] = {}
        self.tables: dict[str, TableCatalogRow] = {}  # keyed lowercase
        self.attributes: dict[str, dict[str, AttributeCatalogRow]] = {}
        self.tuples: dict[str, list[DTuple]] = {}

    # --- tree table ---------------------------------------------------------

    def upsert_sht(self, sht: Sht, document: Document,
                   summary_budget: int = 128) -> list[ShtRow]:
        """One row per node with all derivable fields and the offline
        (static) summary parts already rendered."""
        existing = self.sht.get(sht.doc_id)
        records = export_records(sht)
        if existing is not None:
            old = [(r.node_id, r.phrase_index, tuple(r.child_ids)) for r in existing.values()]
            new = [(r["node_id"], r["phrase_index"], tuple(r["children"])) for r in records]
            if sorted(old) != sorted(new):
                raise CatalogConflictError(
                    f"document '{sht.doc_id}' already ingested with different structure")
        rows: dict[int, ShtRow] = {}
        names: dict[int, str] = {}
        for node_id in sorted(sht.nodes):
            node = sht.nodes[node_id]
            names[node_id] = ("" if node.phrase_index == 0
                              else document.phrases[node.phrase_index - 1].text)
        for record in records:
            node_id = record["node_id"]
            span = TextSpan(record["span_start"], record["span_end"])
            context = span_text(document, span)
            first = document.phrases[span.start - 1]
            last = document.phrases[span.end - 1]
            ancestors = sht.ancestors(node_id)
            sentences = extractive_summary(context, summary_budget)
            static = NodeSummary(
                node_names=[names[a] for a in ancestors if names[a]] +
                           ([names[node_id]] if names[node_id] else [""]),
                extractive=sentences, dynamic=None)
            rows[node_id] = ShtRow(
                doc_id=sht.doc_id,
                node_id=node_id,
                name=names[node_id],
                granularity=record["granularity"],
                context=context,
                summary=static.rendered,
                size=count_tokens(context),
                st_page=first.page_range[0],
                ed_page=last.page_range[1],
                child_ids=list(record["children"]),
                ancestor_ids=ancestors,
                phrase_index=record["phrase_index"],
                span_start=span.start,
                span_end=span.end,
                summary_sentences=sentences,
            )
        self.sht[sht.doc_id] = rows
        self.docs.setdefault(sht.doc_id, DocMeta(
            doc_id=sht.doc_id, template_id=None,
            n_phrases=document.n_phrases, n_pages=len(document.pages)))
        return [rows[i] for i in sorted(rows)]

    def sht_rows(self, doc_id: str) -> dict[int, ShtRow]:
        if doc_id not in self.sht:
            raise UserError(f"no tree stored for document '{doc_id}'")
        return self.sht[doc_id]

    def sht_node(self, doc_id: str, node_id: int) -> ShtRow:
        rows = self.sht_rows(doc_id)
        if node_id not in rows:
            raise UserError(f"document '{doc_id}' has no node {node_id}")
        return rows[node_id]

    def sht_root(self, doc_id: str) -> ShtRow:
        rows = self.sht_rows(doc_id)
        roots = [r for r in rows.values() if not r.ancestor_ids]
        if len(roots) != 1:
            raise UserError(f"document '{doc_id}' has {len(roots)} roots")
        return roots[0]

    # --- table / attribute catalogs ------------------------------------------

    def create_table(self, name: str, table_descr: str,
                     tuple_descr: str | None = None) -> TableCatalogRow:
        key = name.lower()
        if key in self.tables:
            raise CatalogConflictError(f"table '{name}' already exists")
        # the tuple description defaults to the table description
        row = TableCatalogRow(table_name=name, table_descr=table_descr,
                              tuple_descr=tuple_descr or table_descr)
        self.tables[key] = row
        self.attributes.setdefault(key, {})
        self.tuples.setdefault(key, [])
        return row

    def table(self, name: str) -> TableCatalogRow:
        key = name.lower()
        if key not in self.tables:
            raise UserError(f"unknown table '{name}'")
        return self.tables[key]

    def add_attribute(self, table: str, attr: str, attr_type: str,
                      description: str) -> AttributeCatalogRow:
        self.table(table)  # existence check
        if attr_type not in ATTR_TYPES:
            raise UserError(f"unknown attribute type '{attr_type}'")
        table_key, attr_key = table.lower(), attr.lower()
        if attr_key in self.attributes[table_key]:
            raise CatalogConflictError(f"attribute '{attr}' already on '{table}'")
        row = AttributeCatalogRow(table_name=self.tables[table_key].table_name,
                                  attr_name=attr, attr_type=attr_type,
                                  description=description)
        self.attributes[table_key][attr_key] = row
        for tup in self.tuples[table_key]:
            tup.attrs.setdefault(attr_key, AttrCell())
        return row

    def attribute(self, table: str, attr: str) -> AttributeCatalogRow:
        table_key = table.lower()
        self.table(table)
        row = self.attributes[table_key].get(attr.lower())
        if row is None:
            raise UserError(f"unknown attribute '{attr}' on table '{table}'")
        return row

    def table_attributes(self, table: str) -> list[AttributeCatalogRow]:
        self.table(table)
        return list(self.attributes[table.lower()].values())

    # --- tuples ---------------------------------------------------------------

    def insert_tuples(self, table: str, tuples: list[DTuple]) -> None:
        key = table.lower()
        self.table(table)
        for tup in tuples:
            for attr_key in self.attributes[key]:
                tup.attrs.setdefault(attr_key, AttrCell())
        self.tuples[key].extend(tuples)

    def table_tuples(self, table: str, doc_id: str | None = None) -> list[DTuple]:
        self.table(table)
        out = self.tuples[table.lower()]
        if doc_id is not None:
            out = [t for t in out if t.doc_id == doc_id]
        return out

    # --- persistence ------------------------------------------------------------

    def save(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "tables").mkdir(exist_ok=True)
        _write_jsonl(self.root / "docs.jsonl", [
            {"doc_id": d.doc_id, "template_id": d.template_id,
             "n_phrases": d.n_phrases, "n_pages": d.n_pages}
            for d in sorted(self.docs.values(), key=lambda d: d.doc_id)])
        sht_records = []
        for doc_id in sorted(self.sht):
            for node_id in sorted(self.sht[doc_id]):
                row = self.sht[doc_id][node_id]
                sht_records.append({
                    "doc_id": row.doc_id, "node_id": row.node_id, "name": row.name,
                    "granularity": row.granularity, "context": row.context,
                    "summary": row.summary, "size": row.size,
                    "st_page": row.st_page, "ed_page": row.ed_page,
                    "child_ids": row.child_ids, "ancestor_ids": row.ancestor_ids,
                    "phrase_index": row.phrase_index,
                    "span_start": row.span_start, "span_end": row.span_end,
                    "summary_sentences": row.summary_sentences,
                })
        _write_jsonl(self.root / "sht_table.jsonl", sht_records)
        _write_jsonl(self.root / "table_catalog.jsonl", [
            {"table_name": t.table_name, "table_descr": t.table_descr,
             "tuple_descr": t.tuple_descr,
             "bindings": {doc: {"table_node": b.table_node,
                                "t_range": list(b.t_range) if b.t_range else None,
                                "multi_tuple": b.multi_tuple}
                          for doc, b in sorted(t.bindings.items())}}
            for _, t in sorted(self.tables.items())])
        _write_jsonl(self.root / "attribute_catalog.jsonl", [
            {"table_name": a.table_name, "attr_name": a.attr_name,
             "attr_type": a.attr_type, "description": a.description}
            for key in sorted(self.attributes)
            for a in self.attributes[key].values()])
        for key in sorted(self.tuples):
            _write_jsonl(self.root / "tables" / f"{key}.jsonl", [
                {"table": t.table, "tuple_id": t.tuple_id, "doc_id": t.doc_id,
                 "text_span": [t.text_span.start, t.text_span.end],
                 "nodes": t.nodes,
                 "attrs": {a: {"value": c.value, "digest": c.digest,
                               "source": list(c.source) if c.source else None,
                               "resolved": c.resolved}
                           for a, c in sorted(t.attrs.items())},
                 "pred_cache": dict(sorted(t.pred_cache.items())),
                 "provenance": [list(p) for p in t.provenance]}
                for t in self.tuples[key]])

    @classmethod
    def load(cls, root: str | Path) -> "Catalog":
        catalog = cls(root)
        root = Path(root)
        for record in _read_jsonl(root / "docs.jsonl"):
            catalog.docs[record["doc_id"]] = DocMeta(**record)
        for record in _read_jsonl(root / "sht_table.jsonl"):
            row = ShtRow(**record)
            catalog.sht.setdefault(row.doc_id, {})[row.node_id] = row
        for record in _read_jsonl(root / "table_catalog.jsonl"):
            bindings = {
                doc: DocBinding(table_node=b["table_node"],
                                t_range=tuple(b["t_range"]) if b["t_range"] else None,
                                multi_tuple=b["multi_tuple"])
                for doc, b in record["bindings"].items()}
            row = TableCatalogRow(table_name=record["table_name"],
                                  table_descr=record["table_descr"],
                                  tuple_descr=record["tuple_descr"],
                                  bindings=bindings)
            catalog.tables[row.table_name.lower()] = row
            catalog.attributes.setdefault(row.table_name.lower(), {})
            catalog.tuples.setdefault(row.table_name.lower(), [])
        for record in _read_jsonl(root / "attribute_catalog.jsonl"):
            row = AttributeCatalogRow(**record)
            catalog.attributes.setdefault(row.table_name.lower(), {})[
                row.attr_name.lower()] = row
        tables_dir = root / "tables"
        if tables_dir.exists():
            for path in sorted(tables_dir.glob("*.jsonl")):
                for record in _read_jsonl(path):
                    tup = DTuple(
                        table=record["table"], tuple_id=record["tuple_id"],
                        doc_id=record["doc_id"],
                        text_span=TextSpan(*record["text_span"]),
                        nodes=record["nodes"],
                        attrs={a: AttrCell(value=c["value"], digest=c["digest"],
                                           source=tuple(c["source"]) if c["source"] else None,
                                           resolved=c.get("resolved", False))
                               for a, c in record["attrs"].items()},
                        pred_cache=record["pred_cache"],
                        provenance=[tuple(p) for p in record["provenance"]])
                    catalog.tuples.setdefault(path.stem, []).append(tup)
        return catalog


def _write_jsonl(path: Path, records: list[dict]) -> None:
    payload = "".join(json.dumps(r, separators=(",", ":"), sort_keys=True) + "\n"
                      for r in records)
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_jsonl(path: Path) -> list[dict]:
    if not path.exists():
        return []
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines()
            if line.strip()]
