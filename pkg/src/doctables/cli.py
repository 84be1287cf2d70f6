"""Command-line surface: ingest, ddl, query, eval, inspect-sht, cache.

Results go to stdout (or --out files); cost/ledger diagnostics and timing
go to stderr, so re-runs against a warm replay cache are byte-identical
on stdout. Exit codes: 0 ok, 1 user error, 2 oracle transport failure,
3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from .catalog import Catalog
from .config import Config
from .ddl import execute_ddl
from .docmodel import load_document
from .engine.executor import Executor
from .engine.planner import plan_to_dict
from .engine.query import parse_query
from .errors import (DocFormatError, InternalError, OracleParseError,
                     OracleUnavailableError, UserError)
from .evalharness import evaluate_workload, load_ground_truth, require_workload
from .oracle import ReplayCache, make_oracle
from .populate import populate_new_tables
from .template import TemplateRegistry, ingest_collection


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="doctables",
        description="Structure-aware document analytics with an LLM oracle.")
    parser.add_argument("--db", default="dtdb", help="catalog directory")
    parser.add_argument("--config", default=None, help="JSON config file")
    parser.add_argument("--strict", action="store_true",
                        help="fail hard on per-file errors and unknown fields")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="build trees for a document directory")
    p_ingest.add_argument("docs", help="directory of *.words.jsonl documents")
    p_ingest.add_argument("--incremental", action="store_true",
                          help="reuse the persisted template registry (new "
                               "documents matching known templates skip the "
                               "oracle; re-runs are then not byte-identical)")

    p_ddl = sub.add_parser("ddl", help="run CREATE/ALTER statements")
    group = p_ddl.add_mutually_exclusive_group(required=True)
    group.add_argument("--sql", help="inline DDL text")
    group.add_argument("--file", help="file with DDL statements")

    p_query = sub.add_parser("query", help="execute a SQL query")
    p_query.add_argument("sql")
    p_query.add_argument("--plan", action="store_true",
                         help="print the machine-readable plan instead of executing")
    p_query.add_argument("--explain-cost", action="store_true",
                         help="print operator cost annotations to stderr")
    p_query.add_argument("--out", default=None,
                         help="write CSV here (plus <out>.prov.jsonl sidecar)")

    p_eval = sub.add_parser("eval", help="precision/recall over a workload")
    p_eval.add_argument("--workload", required=True)
    p_eval.add_argument("--truth", required=True)
    p_eval.add_argument("--runs", type=int, default=3)
    p_eval.add_argument("--out", default=None, help="write the full JSON report here")

    p_inspect = sub.add_parser("inspect-sht", help="pretty-print a document's tree")
    p_inspect.add_argument("doc_id")

    p_cache = sub.add_parser("cache", help="replay cache maintenance")
    p_cache.add_argument("action", choices=["stats", "clear"])

    return parser


def _load_config(args) -> Config:
    cfg = Config.load(args.config)
    if args.strict:
        cfg.strict = True
    if not cfg.oracle.cache_path:
        cfg.oracle.cache_path = str(Path(args.db) / "cache" / "replay.jsonl")
    return cfg


def _print_ledger(oracle, mark: int = 0) -> None:
    summary = oracle.ledger.summary(since=mark)
    print(f"[ledger] calls={summary['calls']} cached={summary['cached']} "
          f"tokens={summary['tokens_in']}/{summary['tokens_out']} "
          f"cost=${summary['cost']:.6f}", file=sys.stderr)


def cmd_ingest(args, cfg: Config) -> int:
    docs_dir = Path(args.docs)
    if not docs_dir.is_dir():
        raise UserError(f"not a directory: {docs_dir}")
    oracle = make_oracle(cfg.oracle)
    documents = []
    file_errors = []
    for path in sorted(docs_dir.glob("*.words.jsonl")):
        try:
            documents.append(load_document(path, strict=cfg.strict))
        except DocFormatError as exc:
            if cfg.strict:
                raise
            file_errors.append(str(exc))
    registry = (TemplateRegistry.load(Path(args.db) / "templates.jsonl")
                if args.incremental else None)
    result = ingest_collection(documents, oracle, cfg, registry=registry)

    catalog = Catalog.load(args.db)
    for record in result.records:
        if record.error and record.method == "error":
            continue
        sht = result.shts[record.doc_id]
        doc = next(d for d in documents if d.doc_id == record.doc_id)
        catalog.upsert_sht(sht, doc, summary_budget=cfg.summary_budget)
        catalog.docs[record.doc_id].template_id = record.template_id
    catalog.save()
    result.registry.save(Path(args.db) / "templates.jsonl")
    export_lines = []
    for doc_id in sorted(catalog.sht):
        for node_id in sorted(catalog.sht[doc_id]):
            row = catalog.sht[doc_id][node_id]
            export_lines.append(json.dumps({
                "doc_id": row.doc_id, "node_id": row.node_id,
                "phrase_index": row.phrase_index,
                "parent": row.ancestor_ids[-1] if row.ancestor_ids else None,
                "children": row.child_ids, "granularity": row.granularity,
                "span_start": row.span_start, "span_end": row.span_end,
            }, separators=(",", ":"), sort_keys=True))
    (Path(args.db) / "sht_export.jsonl").write_text(
        "\n".join(export_lines) + ("\n" if export_lines else ""), encoding="utf-8")

    for record in result.records:
        line = (f"{record.doc_id}\tmethod={record.method}"
                f"\ttemplate={record.template_id}"
                f"\toracle_calls={record.oracle_calls}\tnodes={record.n_nodes}")
        if record.error:
            line += f"\terror={record.error}"
        print(line)
    report = {"documents": [vars(r) for r in result.records],
              "templates": len(result.registry.entries),
              "file_errors": file_errors}
    (Path(args.db) / "ingest_report.json").write_text(
        json.dumps(report, indent=1, sort_keys=True), encoding="utf-8")
    for message in file_errors:
        print(f"[skipped] {message}", file=sys.stderr)
    _print_ledger(oracle)
    failures = [r for r in result.records if r.method == "error"] or file_errors
    return 1 if (failures and cfg.strict) else 0


def cmd_ddl(args, cfg: Config) -> int:
    text = args.sql if args.sql else Path(args.file).read_text(encoding="utf-8")
    catalog = Catalog.load(args.db)
    registry = TemplateRegistry.load(Path(args.db) / "templates.jsonl")
    oracle = make_oracle(cfg.oracle)
    report = execute_ddl(catalog, text)
    population = populate_new_tables(catalog, report.tables_needing_population,
                                     oracle, cfg, registry)
    catalog.save()
    for name in report.created:
        print(f"created table {name}")
    for table, attr in report.attributes_added:
        print(f"added attribute {table}.{attr}")
    for record in population.records:
        line = (f"populate {record.table}\t{record.doc_id}\tmethod={record.method}"
                f"\toracle_calls={record.oracle_calls}"
                f"\ttable_node={record.table_node}\tt_range={record.t_range}"
                f"\tmulti_tuple={record.multi_tuple}\ttuples={record.tuples_created}")
        if record.warning:
            line += f"\twarning={record.warning}"
        print(line)
    _print_ledger(oracle)
    return 0


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return str(int(value)) if value.is_integer() else repr(value)
    if isinstance(value, list):
        return "|".join(_format_value(v) for v in value)
    return str(value)


def cmd_query(args, cfg: Config) -> int:
    catalog = Catalog.load(args.db)
    registry = TemplateRegistry.load(Path(args.db) / "templates.jsonl")
    oracle = make_oracle(cfg.oracle)
    executor = Executor(catalog, oracle, cfg, registry=registry)
    query = parse_query(args.sql, catalog)
    if args.plan:
        print(json.dumps(plan_to_dict(executor.plan(query)), indent=1, sort_keys=True))
        return 0
    result = executor.execute(query)
    catalog.save()  # persist materialized cells and predicate verdicts
    if args.explain_cost:
        print(json.dumps(plan_to_dict(executor.plan(query)), indent=1, sort_keys=True),
              file=sys.stderr)

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(result.columns)
    for row in result.rows:
        writer.writerow([_format_value(v) for v in row.values])
    payload = buffer.getvalue()
    if args.out:
        Path(args.out).write_text(payload, encoding="utf-8")
        sidecar = Path(args.out).with_suffix(Path(args.out).suffix + ".prov.jsonl")
        with sidecar.open("w", encoding="utf-8") as fh:
            for i, row in enumerate(result.rows):
                fh.write(json.dumps({
                    "row": i,
                    "provenance": [{"doc_id": d, "span_start": s, "span_end": e}
                                   for d, s, e in row.provenance]},
                    separators=(",", ":")) + "\n")
    else:
        sys.stdout.write(payload)
    for warning in result.warnings:
        print(f"[warning] {warning}", file=sys.stderr)
    _print_ledger(oracle)
    return 0


def cmd_eval(args, cfg: Config) -> int:
    catalog = Catalog.load(args.db)
    registry = TemplateRegistry.load(Path(args.db) / "templates.jsonl")
    oracle = make_oracle(cfg.oracle)
    executor = Executor(catalog, oracle, cfg, registry=registry)
    workload = require_workload(args.workload)
    truth = load_ground_truth(args.truth)
    report = evaluate_workload(executor, workload, truth, runs=args.runs)
    catalog.save()
    for q in report.queries:
        flag = " [no-prediction]" if q.flagged else ""
        print(f"Q{q.index} {q.group or '-'} precision={q.precision:.4f} "
              f"recall={q.recall:.4f} tokens={q.tokens_in}/{q.tokens_out} "
              f"cost=${q.cost:.6f} rows={q.rows}{flag}")
        print(f"Q{q.index} latency={q.latency:.4f}s", file=sys.stderr)
    for name, stats in report.group_averages().items():
        print(f"{name}: precision={stats['precision']:.4f} "
              f"recall={stats['recall']:.4f} cost=${stats['cost']:.6f}")
    for index in report.skipped:
        print(f"[warning] no ground truth for query {index}; skipped", file=sys.stderr)
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_dict(), indent=1),
                                  encoding="utf-8")
    _print_ledger(oracle)
    return 0


def cmd_inspect(args, cfg: Config) -> int:
    catalog = Catalog.load(args.db)
    rows = catalog.sht_rows(args.doc_id)
    root = catalog.sht_root(args.doc_id)

    def walk(node_id: int, depth: int) -> None:
        row = rows[node_id]
        name = row.name or "(artificial root)"
        print(f"{'  ' * depth}[{row.node_id}] {name}  "
              f"g={row.granularity} span=[{row.span_start},{row.span_end}] "
              f"pages={row.st_page}-{row.ed_page} tokens={row.size}")
        for child in row.child_ids:
            walk(child, depth + 1)

    walk(root.node_id, 0)
    return 0


def cmd_cache(args, cfg: Config) -> int:
    cache = ReplayCache(cfg.oracle.cache_path)
    if args.action == "stats":
        print(json.dumps(cache.stats(), indent=1, sort_keys=True))
    else:
        cache.clear()
        print("cache cleared")
    return 0


_COMMANDS = {
    "ingest": cmd_ingest,
    "ddl": cmd_ddl,
    "query": cmd_query,
    "eval": cmd_eval,
    "inspect-sht": cmd_inspect,
    "cache": cmd_cache,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        return _COMMANDS[args.command](args, cfg)
    except (OracleUnavailableError, OracleParseError) as exc:
        print(f"oracle error: {exc}", file=sys.stderr)
        return 2
    except InternalError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
