"""Physical operators: per-document scan, summary-guided tree search for
predicates/projections, the multi-tuple span extractor, nested-loop join,
and plain relational aggregation/grouping.

Tree search refines candidates layer by layer: a node stays on the path
while the search oracle says its (query-augmented) summary is relevant,
and freezes as a final candidate once it is a leaf or its summary stops
being cheaper than its raw context. Predicates stop at the first
candidate that evaluates true; projections union extractions across
candidates. Every verdict and value records the text spans consulted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date

from ..catalog import AttrCell, Catalog, DTuple, ShtRow, TableCatalogRow
from ..config import Config
from ..docmodel import TextSpan
from ..errors import OracleParseError, UserError
from ..oracle import Oracle, predicate_holds, render_prompt
from ..summary import build_summary
from ..template import TemplateRegistry
from ..textutil import token_jaccard
from .planner import StatsBook, build_plan, ordered_selections, projection_attrs
from .query import AttrRef, Predicate, Query


def like_match(a: str, b: str, threshold: float = 0.9) -> bool:
    """Fuzzy string match: token-set Jaccard at or above the threshold."""
    return token_jaccard(a, b) >= threshold


def typed_value(raw: str, attr_type: str) -> tuple[object, bool]:
    """Coerce an extracted string; on failure keep the raw text (flagged)."""
    text = raw.strip()
    if attr_type == "number":
        try:
            return float(text), True
        except ValueError:
            return text, False
    if attr_type == "date":
        try:
            return date.fromisoformat(text).isoformat(), True
        except ValueError:
            return text, False
    return text, True


@dataclass
class TreeEvalResult:
    verdict: bool | None = None
    values: list[tuple[object, str, TextSpan]] = field(default_factory=list)
    consulted: list[TextSpan] = field(default_factory=list)
    found: bool = False
    warnings: list[str] = field(default_factory=list)


def _summary_for(rows: dict[int, ShtRow], row: ShtRow, descr: str, budget: int):
    names = [rows[a].name for a in row.ancestor_ids if rows[a].name]
    return build_summary(row.name or "", names, row.context, budget,
                         expr_descr=descr, extractive=row.summary_sentences)


def tree_evaluate(catalog: Catalog, oracle: Oracle, cfg: Config, tup: DTuple,
                  kind: str, descr: str, attr: AttrRef,
                  op: str | None = None, operand=None) -> TreeEvalResult:
    """Search the subtree under the tuple's node, then evaluate or extract.

    kind is "predicate" or "projection". Zero surviving candidates means
    predicate-false / projection-not-found, which is a result, not an error.
    """
    rows = catalog.sht_rows(tup.doc_id)
    start = rows[tup.nodes[0]]
    result = TreeEvalResult()

    def summary(row: ShtRow):
        return _summary_for(rows, row, descr, cfg.summary_budget)

    def frozen(row: ShtRow) -> bool:
        return not row.child_ids or summary(row).token_count > row.size

    def searched(row: ShtRow) -> bool:
        rendered = summary(row).rendered
        prompt = render_prompt(
            "search", {"e.descr": descr, "node.summary": rendered},
            meta={"doc_id": tup.doc_id, "table": tup.table,
                  "node_span": [row.span_start, row.span_end],
                  "tuple_span": [tup.text_span.start, tup.text_span.end],
                  "attr": attr.name.lower()})
        return bool(oracle.ask(prompt).parsed)

    if frozen(start):
        candidates = [start]
    else:
        frontier = [start]
        candidates = []
        while frontier:
            passed = [row for row in frontier if searched(row)]
            frontier = []
            for row in passed:
                if frozen(row):
                    candidates.append(row)
                else:
                    frontier.extend(rows[c] for c in row.child_ids)
    candidates.sort(key=lambda r: r.span_start)

    if kind == "predicate":
        result.verdict = False
        for row in candidates:
            rendered = summary(row).rendered
            prompt = render_prompt(
                "evaluate", {"e.descr": descr, "context": rendered},
                meta={"doc_id": tup.doc_id, "table": tup.table,
                      "node_span": [row.span_start, row.span_end],
                      "tuple_span": [tup.text_span.start, tup.text_span.end],
                      "attr": attr.name.lower(), "op": op, "operand": operand,
                      "attr_type": attr.attr_type})
            result.consulted.append(row.span)
            if bool(oracle.ask(prompt).parsed):
                result.verdict = True  # early stop on the first true candidate
                result.found = True
                return result
        if not candidates:
            result.consulted.append(tup.text_span)  # searched span, nothing found
        return result

    for row in candidates:
        rendered = summary(row).rendered
        prompt = render_prompt(
            "extract", {"e.descr": descr, "context": rendered},
            meta={"doc_id": tup.doc_id, "table": tup.table,
                  "node_span": [row.span_start, row.span_end],
                  "tuple_span": [tup.text_span.start, tup.text_span.end],
                  "attr": attr.name.lower()})
        result.consulted.append(row.span)
        answer = oracle.ask(prompt)
        raw = str(answer.parsed).strip()
        if raw:
            value, ok = typed_value(raw, attr.attr_type)
            if not ok:
                result.warnings.append(
                    f"{attr.name}: extracted {raw!r} is not a valid "
                    f"{attr.attr_type}; kept as text")
            if all(value != seen for seen, _, _ in result.values):
                result.values.append((value, prompt.digest, row.span))
            result.found = True
    if not candidates:
        result.consulted.append(tup.text_span)
    return result


def tree_evaluate_multi_tuple(catalog: Catalog, oracle: Oracle, cfg: Config,
                              table: TableCatalogRow, doc_id: str,
                              table_node: int, preds: list[Predicate],
                              projs: list[AttrRef],
                              stop_granularity: int) -> tuple[list[DTuple], list[str]]:
    """Refine from the table node down to the tuple granularity, then ask
    the span extractor for every surviving node. A leaf table node skips
    straight to extraction."""
    rows = catalog.sht_rows(doc_id)
    start = rows[table_node]
    descr = " and ".join(p.descr for p in preds) if preds else table.table_descr
    errors: list[str] = []

    def searched(row: ShtRow) -> bool:
        rendered = _summary_for(rows, row, descr, cfg.summary_budget).rendered
        prompt = render_prompt(
            "search", {"e.descr": descr, "node.summary": rendered},
            meta={"doc_id": doc_id, "table": table.table_name,
                  "node_span": [row.span_start, row.span_end]})
        return bool(oracle.ask(prompt).parsed)

    if not start.child_ids or start.granularity > stop_granularity:
        candidates = [start]
    else:
        frontier = [start]
        candidates = []
        while frontier:
            passed = [row for row in frontier if searched(row)]
            frontier = []
            for row in passed:
                if not row.child_ids or row.granularity >= stop_granularity:
                    candidates.append(row)
                else:
                    frontier.extend(rows[c] for c in row.child_ids)
    candidates.sort(key=lambda r: r.span_start)

    pred_meta = [[p.attr.name.lower(), p.op,
                  list(p.operand) if isinstance(p.operand, tuple) else p.operand,
                  p.attr.attr_type] for p in preds]
    proj_names = [a.name.lower() for a in projs]
    pred_text = " and ".join(p.descr for p in preds) if preds else "true"
    proj_text = ", ".join(a.description for a in projs) if projs else "the tuple"

    tuples: list[DTuple] = []
    for row in candidates:
        prompt = render_prompt(
            "multi_tuple",
            {"tuple_descr": table.tuple_descr, "pred(T)": pred_text,
             "proj(T)": proj_text, "node.context": row.context},
            meta={"doc_id": doc_id, "table": table.table_name,
                  "node_span": [row.span_start, row.span_end],
                  "preds": pred_meta, "projs": proj_names,
                  "like_threshold": cfg.like_threshold})
        try:
            answer = oracle.ask(prompt)
        except OracleParseError as exc:
            errors.append(f"node {row.node_id}: {exc}")
            continue
        for seq, extracted in enumerate(answer.parsed):
            attrs = {}
            for pos, name in enumerate(proj_names):
                raw = extracted[pos] if pos < len(extracted) else ""
                value, ok = typed_value(raw, projs[pos].attr_type) if raw else (None, True)
                if not ok:
                    errors.append(f"{name}: extracted {raw!r} is not a valid "
                                  f"{projs[pos].attr_type}; kept as text")
                attrs[name] = AttrCell(value=value, digest=prompt.digest,
                                       source=(row.span_start, row.span_end),
                                       resolved=True)
            tuples.append(DTuple(
                table=table.table_name,
                tuple_id=f"{doc_id}#mt{row.node_id}.{seq}",
                doc_id=doc_id,
                text_span=row.span,
                nodes=[row.node_id],
                attrs=attrs,
                provenance=[(doc_id, row.span_start, row.span_end)]))
    return tuples, errors


@dataclass
class ResultRow:
    values: list
    provenance: list[tuple[str, int, int]]


@dataclass
class QueryResult:
    columns: list[str]
    rows: list[ResultRow]
    warnings: list[str] = field(default_factory=list)


@dataclass
class _RowView:
    values: dict
    provenance: list[tuple[str, int, int]]


class Executor:
    """Runs parsed queries over the catalog, document by document."""

    def __init__(self, catalog: Catalog, oracle: Oracle, cfg: Config,
                 registry: TemplateRegistry | None = None,
                 stats: StatsBook | None = None):
        self.catalog = catalog
        self.oracle = oracle
        self.cfg = cfg
        self.registry = registry or TemplateRegistry()
        self.stats = stats or StatsBook()
        self.warnings: list[str] = []

    def plan(self, query: Query):
        return build_plan(query, self.catalog, self.stats, self.cfg.oracle.rate_in)

    def execute(self, query: Query) -> QueryResult:
        self.warnings = []
        plan = self.plan(query)
        join_order: list[str] = plan.annotations.get("join_order", query.tables)
        doc_ids = sorted(self.catalog.docs)
        raw: list[_RowView] = []
        for doc_id in doc_ids:
            batches: list[list[_RowView]] = []
            for table in join_order:
                batch = self._table_batch(query, table, doc_id)
                batches.append(batch)
                if not batch:
                    break
            if len(batches) < len(join_order) or any(not b for b in batches):
                continue
            joined = batches[0]
            for right in batches[1:]:
                joined = nested_loop_join(joined, right)
            raw.extend(joined)
        columns, rows = aggregate_and_group(raw, query, self.warnings)
        return QueryResult(columns=columns, rows=rows, warnings=list(self.warnings))

    # --- per-table batches ----------------------------------------------------

    def _table_batch(self, query: Query, table: str, doc_id: str) -> list[_RowView]:
        row = self.catalog.table(table)
        binding = row.bindings.get(doc_id)
        if binding is None:
            self._warn(f"table '{table}' has no population for document '{doc_id}'")
            return []
        preds = query.table_predicates(table)
        needed = projection_attrs(query, table)
        if binding.multi_tuple:
            tuples = self._multi_tuple_batch(query, row, doc_id, binding, preds, needed)
            return self._views(table, tuples, needed, query)
        tuples = list(self.catalog.table_tuples(table, doc_id))
        table_stats = self.stats.table(table)
        for pred, op_stats in ordered_selections(query, self.catalog, self.stats,
                                                 table, self.cfg.oracle.rate_in):
            if not tuples:
                break
            mark = self.oracle.ledger.mark()
            survivors = [t for t in tuples if self._eval_predicate(t, pred)]
            cost = self.oracle.ledger.total_cost(since=mark)
            op_stats.observe(processed=len(tuples), satisfied=len(survivors), cost=cost)
            table_stats.tuples_processed += len(tuples)
            table_stats.cost += cost
            tuples = survivors
        for tup in tuples:
            for attr_name in needed:
                if attr_name.lower() != "doc_id":
                    self._materialize(tup, self._attr_ref(table, attr_name))
        return self._views(table, tuples, needed, query)

    def _multi_tuple_batch(self, query: Query, table: TableCatalogRow, doc_id: str,
                           binding, preds: list[Predicate],
                           needed: list[str]) -> list[DTuple]:
        table_node = binding.table_node
        if table_node is None:
            table_node = self.catalog.sht_root(doc_id).node_id
        projs = [self._attr_ref(table.table_name, n) for n in needed
                 if n.lower() != "doc_id"]
        stop = self._stop_granularity(table.table_name, doc_id)
        tuples, errors = tree_evaluate_multi_tuple(
            self.catalog, self.oracle, self.cfg, table, doc_id, table_node,
            preds, projs, stop)
        for message in errors:
            self._warn(f"{table.table_name}/{doc_id}: {message}")
        return tuples

    def _stop_granularity(self, table: str, doc_id: str) -> int:
        """Seed document's lower tuple granularity when known, else tree depth."""
        rows = self.catalog.sht_rows(doc_id)
        depth = max(r.granularity for r in rows.values())
        meta = self.catalog.docs.get(doc_id)
        if meta is None or meta.template_id is None:
            return depth
        if meta.template_id >= len(self.registry.entries):
            return depth
        seed_doc = self.registry.entries[meta.template_id].template.source_doc
        binding = self.catalog.table(table).bindings.get(seed_doc)
        if binding is None or binding.t_range is None:
            return depth
        return binding.t_range[0]

    # --- predicates and projections ------------------------------------------

    def _attr_ref(self, table: str, attr: str) -> AttrRef:
        if attr.lower() == "doc_id":
            return AttrRef(table=table, name="doc_id", attr_type="text",
                           description="document identifier")
        row = self.catalog.attribute(table, attr)
        return AttrRef(table=self.catalog.table(table).table_name,
                       name=row.attr_name, attr_type=row.attr_type,
                       description=row.description)

    def _eval_predicate(self, tup: DTuple, pred: Predicate) -> bool:
        if pred.attr.is_doc_id:
            return predicate_holds(tup.doc_id, pred.op, pred.operand, "text",
                                   like_threshold=self.cfg.like_threshold)
        if pred.descr in tup.pred_cache:
            return tup.pred_cache[pred.descr]
        if pred.op in ("LIKE", "IN"):
            value = self._materialize(tup, pred.attr)
            if isinstance(value, list):
                verdict = any(predicate_holds(v, pred.op, pred.operand,
                                              pred.attr.attr_type,
                                              like_threshold=self.cfg.like_threshold)
                              for v in value)
            else:
                verdict = predicate_holds(value, pred.op, pred.operand,
                                          pred.attr.attr_type,
                                          like_threshold=self.cfg.like_threshold)
        else:
            outcome = tree_evaluate(self.catalog, self.oracle, self.cfg, tup,
                                    "predicate", pred.descr, pred.attr,
                                    op=pred.op, operand=pred.operand)
            tup.provenance.extend((tup.doc_id, s.start, s.end)
                                  for s in outcome.consulted)
            verdict = bool(outcome.verdict)
        tup.pred_cache[pred.descr] = verdict
        return verdict

    def _materialize(self, tup: DTuple, attr: AttrRef):
        """Extract an attribute value on demand; NULL stays NULL once searched."""
        key = attr.name.lower()
        cell = tup.attrs.setdefault(key, AttrCell())
        if cell.resolved or cell.value is not None:
            return cell.value
        outcome = tree_evaluate(self.catalog, self.oracle, self.cfg, tup,
                                "projection", attr.description, attr)
        tup.provenance.extend((tup.doc_id, s.start, s.end) for s in outcome.consulted)
        for message in outcome.warnings:
            self._warn(message)
        cell.resolved = True
        if outcome.values:
            if len(outcome.values) == 1:
                cell.value, cell.digest, span = outcome.values[0]
            else:
                cell.value = [v for v, _, _ in outcome.values]
                cell.digest = outcome.values[0][1]
                span = outcome.values[0][2]
            cell.source = (span.start, span.end)
        return cell.value

    def _views(self, table: str, tuples: list[DTuple], needed: list[str],
               query: Query) -> list[_RowView]:
        table_key = table.lower()
        views = []
        for tup in tuples:
            base = {f"{table_key}.doc_id": tup.doc_id}
            expanded = [base]
            for attr_name in needed:
                key = attr_name.lower()
                if key == "doc_id":
                    continue
                value = tup.attrs.get(key, AttrCell()).value
                if isinstance(value, list):  # one output row per extracted value
                    expanded = [dict(v, **{f"{table_key}.{key}": item})
                                for v in expanded for item in value]
                else:
                    for v in expanded:
                        v[f"{table_key}.{key}"] = value
            for v in expanded:
                views.append(_RowView(values=v, provenance=list(tup.provenance)))
        return views

    def _warn(self, message: str) -> None:
        if message not in self.warnings:
            self.warnings.append(message)


def nested_loop_join(left: list[_RowView], right: list[_RowView]) -> list[_RowView]:
    """Per-document equi-join on doc_id; provenance concatenates left-then-right."""
    out = []
    for lv in left:
        left_doc = _doc_of(lv)
        for rv in right:
            if left_doc == _doc_of(rv):
                values = dict(lv.values)
                values.update(rv.values)
                out.append(_RowView(values=values,
                                    provenance=lv.provenance + rv.provenance))
    return out


def _doc_of(view: _RowView) -> str:
    for key, value in view.values.items():
        if key.endswith(".doc_id"):
            return value
    raise UserError("row view lost its doc_id")


def _date_key(value):
    try:
        return date.fromisoformat(str(value))
    except (TypeError, ValueError):
        return None


def _aggregate(func: str, attr: AttrRef | None, views: list[_RowView],
               warnings: list[str]):
    if attr is None:  # COUNT(*)
        return len(views)
    values = [v.values.get(attr.key) for v in views]
    present = [v for v in values if v is not None]
    if func == "COUNT":
        return len(present)
    if not present:
        return None
    if attr.attr_type == "date":
        keyed = [(v, _date_key(v)) for v in present]
        keyed = [kv for kv in keyed if kv[1] is not None]
        if not keyed:
            return None
        if func == "MAX":
            return max(keyed, key=lambda kv: kv[1])[0]
        if func == "MIN":
            return min(keyed, key=lambda kv: kv[1])[0]
        raise UserError(f"{func} unsupported on dates")
    numeric = []
    for v in present:
        try:
            numeric.append(float(v))
        except (TypeError, ValueError):
            warnings.append(f"non-numeric value {v!r} excluded from {func}({attr.name})")
    if not numeric:
        return None
    if func == "SUM":
        return sum(numeric)
    if func == "AVG":
        return sum(numeric) / len(numeric)
    if func == "MAX":
        return max(numeric)
    if func == "MIN":
        return min(numeric)
    raise UserError(f"unknown aggregate {func}")


def aggregate_and_group(views: list[_RowView], query: Query,
                        warnings: list[str] | None = None) -> tuple[list[str], list[ResultRow]]:
    """Plain relational grouping/aggregation over materialized row views."""
    warnings = warnings if warnings is not None else []
    columns = [item.label for item in query.select]
    if not query.has_aggregates and not query.group_by:
        rows = []
        for view in views:
            rows.append(ResultRow(
                values=[view.values.get(item.attr.key) for item in query.select],
                provenance=view.provenance))
        return columns, rows

    groups: dict[tuple, list[_RowView]] = {}
    if not query.group_by:
        groups[()] = []  # global aggregates yield one row even over no input
    for view in views:
        key = tuple(_canon(view.values.get(a.key)) for a in query.group_by)
        groups.setdefault(key, []).append(view)
    rows = []
    for key in sorted(groups, key=lambda k: tuple(str(part) for part in k)):
        members = groups[key]
        values = []
        for item in query.select:
            if item.aggregate:
                values.append(_aggregate(item.aggregate, item.attr, members, warnings))
            else:
                values.append(members[0].values.get(item.attr.key))
        provenance: list[tuple[str, int, int]] = []
        for member in members:
            for entry in member.provenance:
                if entry not in provenance:
                    provenance.append(entry)
        rows.append(ResultRow(values=values, provenance=provenance))
    return columns, rows


def _canon(value):
    if isinstance(value, float) and value.is_integer():
        return int(value)
    return value
