"""Logical planning: expensive-predicate reordering, projection pull-up,
and greedy left-deep join ordering by estimated per-table cost.

Selection goodness is f_o = e_o * s_o (mean per-tuple cost times observed
selectivity); lower runs earlier. Before any observation s_o is 1.0 and
e_o falls back to the predicted prompt size (in currency), so the cold
start orders predicates by ascending prompt size deterministically.
Join order ranks tables by E(T), which starts at |T| and is refined to
|T| * e as per-tuple costs are observed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..catalog import Catalog
from ..oracle import count_tokens
from .query import Predicate, Query


@dataclass
class OperatorStats:
    processed: int = 0
    satisfied: int = 0
    cost: float = 0.0
    cold_e: float = 0.0

    @property
    def s_o(self) -> float:
        return self.satisfied / self.processed if self.processed else 1.0

    @property
    def e_o(self) -> float:
        return self.cost / self.processed if self.processed else self.cold_e

    @property
    def f_o(self) -> float:
        return self.e_o * self.s_o

    def observe(self, processed: int, satisfied: int, cost: float) -> None:
        self.processed += processed
        self.satisfied += satisfied
        self.cost += cost


@dataclass
class TableStats:
    tuples_processed: int = 0
    cost: float = 0.0

    @property
    def mean_tuple_cost(self) -> float | None:
        if not self.tuples_processed:
            return None
        return self.cost / self.tuples_processed


class StatsBook:
    """Adaptive operator statistics, keyed by (table, predicate descr)."""

    def __init__(self):
        self.operators: dict[tuple[str, str], OperatorStats] = {}
        self.tables: dict[str, TableStats] = {}

    def operator(self, table: str, pred: Predicate, cold_e: float = 0.0) -> OperatorStats:
        key = (table.lower(), pred.descr)
        if key not in self.operators:
            self.operators[key] = OperatorStats(cold_e=cold_e)
        stats = self.operators[key]
        if stats.processed == 0 and cold_e:
            stats.cold_e = cold_e
        return stats

    def table(self, name: str) -> TableStats:
        return self.tables.setdefault(name.lower(), TableStats())


@dataclass
class PlanNode:
    kind: str  # scan | select | project | join | group_by | aggregate
    table: str | None = None
    predicate: Predicate | None = None
    attrs: list[str] = field(default_factory=list)
    children: list["PlanNode"] = field(default_factory=list)
    annotations: dict = field(default_factory=dict)


def predicted_prompt_cost(catalog: Catalog, table: str, pred: Predicate,
                          rate_in: float) -> float:
    """Cold-start e_o: expected prompt size (tokens) priced at the input rate.

    doc_id predicates are evaluated natively and predicted free."""
    if pred.attr.is_doc_id:
        return 0.0
    sizes = []
    for tup in catalog.table_tuples(table):
        if tup.nodes:
            row = catalog.sht_node(tup.doc_id, tup.nodes[0])
            sizes.append(count_tokens(row.summary))
    mean_summary = sum(sizes) / len(sizes) if sizes else 0.0
    return (mean_summary + count_tokens(pred.descr) + 32) * rate_in


def table_cardinality(catalog: Catalog, table: str) -> int:
    """|T|: populated tuples plus one slot per multi_tuple-flagged document."""
    count = len(catalog.table_tuples(table))
    row = catalog.table(table)
    count += sum(1 for b in row.bindings.values() if b.multi_tuple)
    return count


def estimated_table_cost(catalog: Catalog, table: str, stats: StatsBook) -> float:
    cardinality = table_cardinality(catalog, table)
    mean = stats.table(table).mean_tuple_cost
    return cardinality * mean if mean is not None else float(cardinality)


def ordered_selections(query: Query, catalog: Catalog, stats: StatsBook,
                       table: str, rate_in: float) -> list[tuple[Predicate, OperatorStats]]:
    pairs = []
    for pred in query.table_predicates(table):
        cold = predicted_prompt_cost(catalog, table, pred, rate_in)
        pairs.append((pred, stats.operator(table, pred, cold_e=cold)))
    pairs.sort(key=lambda pair: pair[1].f_o)
    return pairs


def projection_attrs(query: Query, table: str) -> list[str]:
    """Attributes the final output needs from this table (selections excluded)."""
    needed: list[str] = []
    for item in query.select:
        ref = item.attr
        if ref is not None and ref.table.lower() == table.lower():
            if ref.name not in needed:
                needed.append(ref.name)
    for ref in query.group_by:
        if ref.table.lower() == table.lower() and ref.name not in needed:
            needed.append(ref.name)
    return needed


def build_plan(query: Query, catalog: Catalog, stats: StatsBook,
               rate_in: float) -> PlanNode:
    branches: dict[str, PlanNode] = {}
    costs: dict[str, float] = {}
    for table in query.tables:
        node = PlanNode(kind="scan", table=table,
                        annotations={"tuples": table_cardinality(catalog, table)})
        for pred, op_stats in ordered_selections(query, catalog, stats, table, rate_in):
            node = PlanNode(kind="select", table=table, predicate=pred, children=[node],
                            annotations={"f_o": op_stats.f_o, "e_o": op_stats.e_o,
                                         "s_o": op_stats.s_o})
        projected = projection_attrs(query, table)
        node = PlanNode(kind="project", table=table, attrs=projected, children=[node])
        costs[table] = estimated_table_cost(catalog, table, stats)
        node.annotations["E"] = costs[table]
        branches[table] = node

    order = sorted(query.tables, key=lambda t: (costs[t], query.tables.index(t)))
    tree = branches[order[0]]
    for table in order[1:]:
        tree = PlanNode(kind="join", attrs=["doc_id"],
                        children=[tree, branches[table]],
                        annotations={"E_right": costs[table]})
    if query.group_by:
        tree = PlanNode(kind="group_by",
                        attrs=[a.name for a in query.group_by], children=[tree])
    if query.has_aggregates:
        tree = PlanNode(kind="aggregate",
                        attrs=[i.label for i in query.select if i.aggregate],
                        children=[tree])
    tree.annotations["join_order"] = order
    return tree


def plan_to_dict(node: PlanNode) -> dict:
    out: dict = {"kind": node.kind}
    if node.table:
        out["table"] = node.table
    if node.predicate is not None:
        out["predicate"] = {"attr": node.predicate.attr.name,
                            "op": node.predicate.op,
                            "operand": list(node.predicate.operand)
                            if isinstance(node.predicate.operand, tuple)
                            else node.predicate.operand,
                            "descr": node.predicate.descr}
    if node.attrs:
        out["attrs"] = list(node.attrs)
    if node.annotations:
        out["annotations"] = {k: v for k, v in sorted(node.annotations.items())}
    if node.children:
        out["children"] = [plan_to_dict(c) for c in node.children]
    return out
