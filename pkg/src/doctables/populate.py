"""Table population: oracle-driven on one representative document per
template, rule-based propagation to the rest.

The oracle path walks the tree top-down: a node becomes a table-node
candidate when all its children describe the table (a leaf qualifies by
answering for itself), and the least common ancestor of all candidates is
recorded. Tuples are nodes answering the tuple prompt; a document where no
node is a single tuple gets the multi_tuple flag instead. Rule-based
documents copy the seed's bindings by granularity and header-name
similarity, spending zero oracle calls.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .catalog import Catalog, DocBinding, DTuple, ShtRow, TableCatalogRow
from .config import Config
from .errors import UserError
from .oracle import Oracle, render_prompt
from .template import TemplateRegistry
from .textutil import token_jaccard


@dataclass
class PopulationRecord:
    table: str
    doc_id: str
    method: str  # "oracle" | "rule"
    oracle_calls: int
    table_node: int | None
    t_range: tuple[int, int] | None
    multi_tuple: bool
    tuples_created: int
    warning: str | None = None


@dataclass
class PopulationReport:
    records: list[PopulationRecord] = field(default_factory=list)


def _ask_table(oracle: Oracle, table: TableCatalogRow, row: ShtRow) -> bool:
    prompt = render_prompt("table", {
        "table_name": table.table_name,
        "table_descr": table.table_descr,
        "node_context": row.context,
    }, meta={"doc_id": row.doc_id, "table": table.table_name,
             "node_span": [row.span_start, row.span_end]})
    return bool(oracle.ask(prompt).parsed)


def _ask_tuple(oracle: Oracle, table: TableCatalogRow, row: ShtRow) -> bool:
    prompt = render_prompt("tuple", {
        "tuple_descr": table.tuple_descr,
        "table_name": table.table_name,
        "table_descr": table.table_descr,
        "node_context": row.context,
    }, meta={"doc_id": row.doc_id, "table": table.table_name,
             "node_span": [row.span_start, row.span_end]})
    return bool(oracle.ask(prompt).parsed)


def find_table_node(catalog: Catalog, doc_id: str, table: TableCatalogRow,
                    oracle: Oracle) -> tuple[int, str | None]:
    """LCA of the candidate nodes; the root with a warning when none exist."""
    rows = catalog.sht_rows(doc_id)
    root = catalog.sht_root(doc_id)
    candidates: list[int] = []

    def visit(node_id: int) -> None:
        row = rows[node_id]
        if not row.child_ids:
            if _ask_table(oracle, table, row):
                candidates.append(node_id)
            return
        answers = [_ask_table(oracle, table, rows[c]) for c in row.child_ids]
        if all(answers):
            candidates.append(node_id)
            return
        for child in row.child_ids:
            visit(child)

    visit(root.node_id)
    if not candidates:
        return root.node_id, f"no table-node candidates for '{table.table_name}' in {doc_id}"
    return _lca(rows, candidates), None


def _lca(rows: dict[int, ShtRow], node_ids: list[int]) -> int:
    paths = [rows[n].ancestor_ids + [n] for n in node_ids]
    shortest = min(len(p) for p in paths)
    lca = paths[0][0]
    for depth in range(shortest):
        step = paths[0][depth]
        if all(p[depth] == step for p in paths):
            lca = step
        else:
            break
    return lca


def populate_tuples_single(catalog: Catalog, doc_id: str, table: TableCatalogRow,
                           table_node: int, oracle: Oracle) -> tuple[list[DTuple], DocBinding]:
    """Top-down from the table node: a true answer mints a tuple and stops
    the descent; zero tuples flips the multi_tuple flag."""
    rows = catalog.sht_rows(doc_id)
    tuples: list[DTuple] = []

    def visit(node_id: int) -> None:
        row = rows[node_id]
        if _ask_tuple(oracle, table, row):
            tuples.append(_make_tuple(table, row, len(tuples)))
            return
        for child in row.child_ids:
            visit(child)

    visit(table_node)
    binding = DocBinding(table_node=table_node)
    if tuples:
        granularities = [rows[t.nodes[0]].granularity for t in tuples]
        binding.t_range = (min(granularities), max(granularities))
    else:
        binding.multi_tuple = True
    return tuples, binding


def _make_tuple(table: TableCatalogRow, row: ShtRow, seq: int) -> DTuple:
    return DTuple(
        table=table.table_name,
        tuple_id=f"{row.doc_id}#{seq}",
        doc_id=row.doc_id,
        text_span=row.span,
        nodes=[row.node_id],
        provenance=[(row.doc_id, row.span_start, row.span_end)],
    )


def populate_multi_doc(catalog: Catalog, doc_id: str, table: TableCatalogRow,
                       seed_table_node_row: ShtRow, seed_binding: DocBinding,
                       sim_threshold: float) -> tuple[list[DTuple], DocBinding]:
    """Rule 1 picks the table node by granularity plus header-name
    similarity (root as fallback); Rule 2 mints one candidate tuple per
    node at the seed's tuple granularity, or flags multi_tuple."""
    rows = catalog.sht_rows(doc_id)
    root = catalog.sht_root(doc_id)

    best: tuple[float, int] | None = None  # (sim, node_id)
    for node_id in sorted(rows):
        row = rows[node_id]
        if row.granularity != seed_table_node_row.granularity:
            continue
        sim = token_jaccard(row.name, seed_table_node_row.name)
        if sim > sim_threshold and (best is None or (sim, -node_id) > (best[0], -best[1])):
            best = (sim, node_id)
    table_node = best[1] if best is not None else root.node_id

    binding = DocBinding(table_node=table_node)
    tuples: list[DTuple] = []
    t_range = seed_binding.t_range
    if seed_binding.multi_tuple or t_range is None or t_range[0] != t_range[1]:
        binding.multi_tuple = True
        return tuples, binding
    depth = t_range[0]
    hosts = [rows[n] for n in sorted(rows)
             if rows[n].granularity == depth and table_node in rows[n].ancestor_ids]
    if not hosts:
        binding.multi_tuple = True
        return tuples, binding
    hosts.sort(key=lambda r: r.span_start)
    for seq, row in enumerate(hosts):
        tuples.append(_make_tuple(table, row, seq))
    binding.t_range = (depth, depth)
    return tuples, binding


def populate_table(catalog: Catalog, table_name: str, oracle: Oracle, cfg: Config,
                   registry: TemplateRegistry) -> PopulationReport:
    """Oracle population on each template's source document, rules elsewhere."""
    table = catalog.table(table_name)
    report = PopulationReport()
    groups: dict[object, list[str]] = {}
    for doc_id in sorted(catalog.docs):
        meta = catalog.docs[doc_id]
        key = meta.template_id if meta.template_id is not None else f"solo:{doc_id}"
        groups.setdefault(key, []).append(doc_id)

    for key in sorted(groups, key=str):
        doc_ids = groups[key]
        seed = doc_ids[0]
        if isinstance(key, int) and key < len(registry.entries):
            source = registry.entries[key].template.source_doc
            if source in doc_ids:
                seed = source
        report.records.append(_populate_oracle(catalog, seed, table, oracle))
        seed_binding = catalog.table(table_name).bindings[seed]
        seed_row = catalog.sht_node(seed, seed_binding.table_node)
        for doc_id in doc_ids:
            if doc_id == seed:
                continue
            tuples, binding = populate_multi_doc(
                catalog, doc_id, table, seed_row, seed_binding,
                cfg.name_sim_threshold)
            catalog.table(table_name).bindings[doc_id] = binding
            catalog.insert_tuples(table_name, tuples)
            report.records.append(PopulationRecord(
                table=table.table_name, doc_id=doc_id, method="rule",
                oracle_calls=0, table_node=binding.table_node,
                t_range=binding.t_range, multi_tuple=binding.multi_tuple,
                tuples_created=len(tuples)))
    return report


def _populate_oracle(catalog: Catalog, doc_id: str, table: TableCatalogRow,
                     oracle: Oracle) -> PopulationRecord:
    before = oracle.asks
    table_node, warning = find_table_node(catalog, doc_id, table, oracle)
    tuples, binding = populate_tuples_single(catalog, doc_id, table, table_node, oracle)
    table.bindings[doc_id] = binding
    catalog.insert_tuples(table.table_name, tuples)
    return PopulationRecord(
        table=table.table_name, doc_id=doc_id, method="oracle",
        oracle_calls=oracle.asks - before, table_node=binding.table_node,
        t_range=binding.t_range, multi_tuple=binding.multi_tuple,
        tuples_created=len(tuples), warning=warning)


def populate_new_tables(catalog: Catalog, tables: list[str], oracle: Oracle,
                        cfg: Config, registry: TemplateRegistry) -> PopulationReport:
    report = PopulationReport()
    if not catalog.docs and tables:
        raise UserError("no ingested documents; run ingest before DDL")
    for name in tables:
        report.records.extend(populate_table(catalog, name, oracle, cfg, registry).records)
    return report
