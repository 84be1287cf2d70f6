"""Evaluation harness: run a SQL workload against expected row sets and
report precision, recall, token usage, cost and latency.

Precision is |truth ∩ predicted| / |predicted| and recall is
|truth ∩ predicted| / |truth| over row multisets. An empty prediction
scores precision 1.0 against an empty truth and 0.0 (flagged) otherwise.
Latency is the average of three runs; tokens and notional cost are taken
from the ledger window of the first run (cache-inclusive, so re-runs
report identically).
"""

from __future__ import annotations

import json
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .engine.executor import Executor
from .engine.query import parse_query
from .errors import UserError


@dataclass
class WorkloadQuery:
    index: int
    sql: str
    group: str = ""


def load_workload(path: str | Path) -> list[WorkloadQuery]:
    """One SQL statement per line; optional trailing '-- group: QGn'."""
    queries = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        stripped = line.strip()
        if not stripped or stripped.startswith("--"):
            continue
        group = ""
        if "--" in stripped:
            stripped, _, comment = stripped.partition("--")
            stripped = stripped.strip()
            comment = comment.strip()
            if comment.lower().startswith("group:"):
                group = comment.split(":", 1)[1].strip()
        queries.append(WorkloadQuery(index=len(queries), sql=stripped, group=group))
    return queries


def load_ground_truth(path: str | Path) -> dict[int, list[list]]:
    """Line-delimited {query_index, rows: [[...], ...]} records."""
    truth: dict[int, list[list]] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            record = json.loads(line)
            truth[int(record["query_index"])] = record["rows"]
    return truth


def canon_row(values: list) -> str:
    out = []
    for v in values:
        if isinstance(v, float):
            v = round(v, 9)
            if v == int(v):
                v = int(v)
        out.append(v)
    return json.dumps(out, sort_keys=False)


def precision_recall(predicted: list[list], truth: list[list]) -> tuple[float, float, bool]:
    """Multiset precision/recall; flag marks the undefined empty-prediction case."""
    pred = Counter(canon_row(r) for r in predicted)
    true = Counter(canon_row(r) for r in truth)
    overlap = sum((pred & true).values())
    flagged = False
    if not pred:
        precision = 1.0 if not true else 0.0
        flagged = bool(true)
    else:
        precision = overlap / sum(pred.values())
    recall = overlap / sum(true.values()) if true else 1.0
    return precision, recall, flagged


@dataclass
class QueryEval:
    index: int
    group: str
    sql: str
    precision: float
    recall: float
    flagged: bool
    tokens_in: int
    tokens_out: int
    cost: float
    latency: float
    rows: int


@dataclass
class EvalReport:
    queries: list[QueryEval] = field(default_factory=list)
    skipped: list[int] = field(default_factory=list)

    def group_averages(self) -> dict[str, dict]:
        groups: dict[str, list[QueryEval]] = {}
        for q in self.queries:
            groups.setdefault(q.group or "ungrouped", []).append(q)
        out = {}
        for name in sorted(groups):
            members = groups[name]
            out[name] = {
                "queries": len(members),
                "precision": sum(q.precision for q in members) / len(members),
                "recall": sum(q.recall for q in members) / len(members),
                "tokens_in": sum(q.tokens_in for q in members) / len(members),
                "tokens_out": sum(q.tokens_out for q in members) / len(members),
                "cost": sum(q.cost for q in members) / len(members),
                "latency": sum(q.latency for q in members) / len(members),
            }
        return out

    def to_dict(self) -> dict:
        return {
            "queries": [vars(q) for q in self.queries],
            "groups": self.group_averages(),
            "skipped": self.skipped,
        }


def evaluate_workload(executor: Executor, workload: list[WorkloadQuery],
                      truth: dict[int, list[list]], runs: int = 3) -> EvalReport:
    report = EvalReport()
    for wq in workload:
        if wq.index not in truth:
            report.skipped.append(wq.index)
            continue
        query = parse_query(wq.sql, executor.catalog)
        ledger = executor.oracle.ledger
        mark = ledger.mark()
        started = time.perf_counter()
        result = executor.execute(query)
        elapsed = [time.perf_counter() - started]
        tokens_in, tokens_out = ledger.notional_tokens(since=mark)
        cost = ledger.notional_cost(since=mark)
        for _ in range(max(0, runs - 1)):
            started = time.perf_counter()
            result = executor.execute(query)
            elapsed.append(time.perf_counter() - started)
        predicted = [r.values for r in result.rows]
        precision, recall, flagged = precision_recall(predicted, truth[wq.index])
        report.queries.append(QueryEval(
            index=wq.index, group=wq.group, sql=wq.sql,
            precision=precision, recall=recall, flagged=flagged,
            tokens_in=tokens_in, tokens_out=tokens_out, cost=round(cost, 8),
            latency=sum(elapsed) / len(elapsed), rows=len(result.rows)))
    return report


def require_workload(path: str | Path) -> list[WorkloadQuery]:
    workload = load_workload(path)
    if not workload:
        raise UserError(f"workload file {path} contains no queries")
    return workload
