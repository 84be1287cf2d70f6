"""The LLM choke point: prompt rendering, transport, replay cache, accounting.

Seven prompt families exist; their templates are fixed strings with
``[placeholder]`` markers. Every call goes through :meth:`Oracle.ask`,
which consults the replay cache first, then the configured backend
(``mock``, ``http`` or ``replay``), parses the answer for its family,
and appends a cost-ledger entry.

The mock backend answers from ground-truth annotation files and carries
no model; it exists so the whole system is testable offline. Structured
routing information for the mock travels in ``Prompt.meta`` and is never
part of the rendered text or its digest.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import threading
import time
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

from .annotations import AnnotationStore, DocTruth
from .config import OracleConfig
from .docmodel import TextSpan
from .errors import OracleParseError, OracleUnavailableError, PromptError, UserError

FAMILIES = ("header", "table", "tuple", "search", "evaluate", "extract", "multi_tuple")

TEMPLATES = {
    "header": "Is the phrase [s] a header in the document?",
    "table": ("If the following text describes [table_name], [table_descr], "
              "return true. Otherwise, return false. [node_context]."),
    "tuple": ("If the following text describes one [tuple_descr] in [table_name], "
              "[table_descr], return true. Otherwise, return false. [node_context]."),
    "search": ("If the following text contains the information that describes "
               "[e.descr], return True; otherwise, return False. "
               "The context is [node.summary]."),
    "evaluate": ("Return True if [e.descr] based on the following context "
                 "[context]. Otherwise, return False."),
    "extract": "Return [e.descr] based on the following context [context].",
    "multi_tuple": ("The following text describes one or more [tuple_descr]. "
                    "For each [tuple_descr], if [pred(T)], then return [proj(T)] "
                    "based on the following context [node.context]."),
}

BOOLEAN_FAMILIES = frozenset({"header", "table", "tuple", "search", "evaluate"})

_PLACEHOLDER = re.compile(r"\[([^\[\]]+)\]")


def count_tokens(text: str) -> int:
    """Default tokenizer: ceil(character count / 4)."""
    if not text:
        return 0
    return math.ceil(len(text) / 4)


@dataclass(frozen=True)
class Prompt:
    family: str
    rendered_text: str
    placeholders: dict
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def digest(self) -> str:
        payload = self.family.encode() + b"\x00" + self.rendered_text.encode()
        return hashlib.sha256(payload).hexdigest()


def render_prompt(family: str, placeholders: dict, meta: dict | None = None) -> Prompt:
    """Substitute placeholders into the family's fixed template."""
    if family not in TEMPLATES:
        raise PromptError(f"unknown prompt family '{family}'")
    template = TEMPLATES[family]
    required = set(_PLACEHOLDER.findall(template))
    missing = required - set(placeholders)
    if missing:
        raise PromptError(f"{family} prompt missing placeholder(s): {sorted(missing)}")
    rendered = template
    for name in required:
        rendered = rendered.replace(f"[{name}]", str(placeholders[name]))
    return Prompt(family=family, rendered_text=rendered,
                  placeholders=dict(placeholders), meta=dict(meta or {}))


@dataclass
class OracleAnswer:
    kind: str  # "boolean" | "text" | "tuple-list"
    raw: str
    parsed: object
    tokens_in: int
    tokens_out: int
    cached: bool = False


@dataclass
class LedgerEntry:
    digest: str
    family: str
    tokens_in: int
    tokens_out: int
    cached: bool


class CostLedger:
    """Append-only record of every oracle exchange; cached entries cost nothing."""

    def __init__(self, rate_in: float, rate_out: float):
        self.rate_in = rate_in
        self.rate_out = rate_out
        self.entries: list[LedgerEntry] = []
        self._lock = threading.Lock()

    def record(self, entry: LedgerEntry) -> None:
        with self._lock:
            self.entries.append(entry)

    def total_cost(self, since: int = 0) -> float:
        return sum(e.tokens_in * self.rate_in + e.tokens_out * self.rate_out
                   for e in self.entries[since:] if not e.cached)

    def total_tokens(self, since: int = 0) -> tuple[int, int]:
        live = [e for e in self.entries[since:] if not e.cached]
        return (sum(e.tokens_in for e in live), sum(e.tokens_out for e in live))

    def notional_tokens(self, since: int = 0) -> tuple[int, int]:
        """Token totals counting cached entries too (what the prompts weigh,
        independently of which run paid for them)."""
        window = self.entries[since:]
        return (sum(e.tokens_in for e in window), sum(e.tokens_out for e in window))

    def notional_cost(self, since: int = 0) -> float:
        tin, tout = self.notional_tokens(since)
        return tin * self.rate_in + tout * self.rate_out

    def mark(self) -> int:
        return len(self.entries)

    def summary(self, since: int = 0) -> dict:
        tin, tout = self.total_tokens(since)
        window = self.entries[since:]
        return {
            "calls": len(window),
            "cached": sum(1 for e in window if e.cached),
            "tokens_in": tin,
            "tokens_out": tout,
            "cost": round(self.total_cost(since), 8),
        }


class ReplayCache:
    """Append-only prompt-digest cache; optionally file-backed (JSONL)."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self._entries: dict[str, dict] = {}
        self._lock = threading.Lock()
        if self.path and self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    record = json.loads(line)
                    self._entries[record["digest"]] = record

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, digest: str) -> dict | None:
        return self._entries.get(digest)

    def put(self, digest: str, family: str, raw: str,
            tokens_in: int, tokens_out: int) -> None:
        record = {"digest": digest, "family": family, "answer_raw": raw,
                  "tokens_in": tokens_in, "tokens_out": tokens_out}
        with self._lock:
            if digest in self._entries:
                return
            self._entries[digest] = record
            if self.path:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record, separators=(",", ":")) + "\n")

    def stats(self) -> dict:
        by_family: dict[str, int] = {}
        for record in self._entries.values():
            by_family[record["family"]] = by_family.get(record["family"], 0) + 1
        return {"entries": len(self._entries), "by_family": by_family}

    def clear(self) -> None:
        with self._lock:
            self._entries.clear()
            if self.path and self.path.exists():
                self.path.unlink()


# --- backends ---------------------------------------------------------------

class MockBackend:
    """Answers every family from ground-truth annotations (no model involved)."""

    def __init__(self, store: AnnotationStore):
        self.store = store

    def complete(self, prompt: Prompt) -> str:
        meta = prompt.meta
        doc_id = meta.get("doc_id")
        if doc_id is None:
            raise UserError(f"mock backend needs meta.doc_id for a {prompt.family} prompt")
        truth = self.store.get(doc_id)
        if truth is None:
            raise UserError(f"no ground-truth annotations for document '{doc_id}'")
        handler = getattr(self, f"_answer_{prompt.family}")
        return handler(prompt, truth)

    def _answer_header(self, prompt: Prompt, truth: DocTruth) -> str:
        return "true" if prompt.meta["phrase_index"] in truth.headers else "false"

    def _answer_table(self, prompt: Prompt, truth: DocTruth) -> str:
        table = truth.table(prompt.meta["table"])
        if table is None:
            return "false"
        span = TextSpan(*prompt.meta["node_span"])
        return "true" if table.region.covers(span) else "false"

    def _answer_tuple(self, prompt: Prompt, truth: DocTruth) -> str:
        table = truth.table(prompt.meta["table"])
        if table is None:
            return "false"
        span = TextSpan(*prompt.meta["node_span"])
        hits = [t for t in table.tuples if t.span.overlaps(span)]
        ok = (len(hits) == 1 and span.covers(hits[0].span)
              and table.region.covers(span))
        return "true" if ok else "false"

    def _tuples_under(self, truth: DocTruth, meta: dict, span: TextSpan):
        table = truth.table(meta["table"])
        if table is None:
            return []
        anchor = meta.get("tuple_span")
        candidates = table.tuples
        if anchor is not None:
            window = TextSpan(*anchor)
            candidates = [t for t in candidates if t.span.overlaps(window)]
        return [t for t in candidates if t.span.overlaps(span)]

    def _answer_search(self, prompt: Prompt, truth: DocTruth) -> str:
        meta = prompt.meta
        span = TextSpan(*meta["node_span"])
        tuples = self._tuples_under(truth, meta, span)
        attr = meta.get("attr")
        if attr is None:  # table-level search (multi-tuple refinement)
            return "true" if tuples else "false"
        for t in tuples:
            cell = t.attrs.get(attr)
            if cell is not None and cell.source.overlaps(span):
                return "true"
        return "false"

    def _answer_evaluate(self, prompt: Prompt, truth: DocTruth) -> str:
        meta = prompt.meta
        span = TextSpan(*meta["node_span"])
        for t in self._tuples_under(truth, meta, span):
            cell = t.attrs.get(meta["attr"])
            if cell is None or not cell.source.overlaps(span):
                continue
            if predicate_holds(cell.value, meta["op"], meta["operand"], meta["attr_type"]):
                return "true"
        return "false"

    def _answer_extract(self, prompt: Prompt, truth: DocTruth) -> str:
        meta = prompt.meta
        span = TextSpan(*meta["node_span"])
        for t in self._tuples_under(truth, meta, span):
            cell = t.attrs.get(meta["attr"])
            if cell is not None and cell.source.overlaps(span):
                return str(cell.value)
        return ""

    def _answer_multi_tuple(self, prompt: Prompt, truth: DocTruth) -> str:
        meta = prompt.meta
        table = truth.table(meta["table"])
        if table is None:
            return ""
        span = TextSpan(*meta["node_span"])
        threshold = meta.get("like_threshold", 0.9)
        lines = []
        for t in table.tuples:
            if not span.covers(t.span):
                continue
            if not all(
                a in t.attrs and predicate_holds(t.attrs[a].value, op, operand,
                                                 atype, like_threshold=threshold)
                for a, op, operand, atype in meta.get("preds", [])
            ):
                continue
            row = [str(t.attrs[a].value) if a in t.attrs else "" for a in meta["projs"]]
            lines.append(json.dumps(row, separators=(",", ":")))
        return "\n".join(lines)


def predicate_holds(value, op: str, operand, attr_type: str,
                    like_threshold: float = 0.9) -> bool:
    """Typed comparison used by the mock's ground-truth side."""
    if value is None:
        return False
    if op == "LIKE":
        from .textutil import token_jaccard

        return token_jaccard(str(value), str(operand)) >= like_threshold
    if op == "IN":
        return any(predicate_holds(value, "=", item, attr_type) for item in operand)
    try:
        if attr_type == "number":
            left, right = float(value), float(operand)
        elif attr_type == "date":
            left, right = date.fromisoformat(str(value)), date.fromisoformat(str(operand))
        else:
            left, right = str(value).strip(), str(operand).strip()
    except (TypeError, ValueError):
        return False
    if op == "=":
        return left == right
    if op == ">":
        return left > right
    if op == ">=":
        return left >= right
    if op == "<":
        return left < right
    if op == "<=":
        return left <= right
    raise ValueError(f"unsupported oracle predicate op '{op}'")


class HttpBackend:
    """Minimal JSON-over-HTTP transport: POST {model, prompt} -> {text, usage?}."""

    def __init__(self, cfg: OracleConfig, post=None):
        import os

        import requests

        self.endpoint = cfg.endpoint
        self.model = cfg.model
        self.token = os.environ.get(cfg.auth_env, "")
        self._post = post or requests.post

    def complete(self, prompt: Prompt) -> str:
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        response = self._post(self.endpoint, headers=headers, timeout=60,
                              json={"model": self.model, "prompt": prompt.rendered_text})
        response.raise_for_status()
        body = response.json()
        return body["text"]


class ReplayBackend:
    """No transport at all; any cache miss is an error."""

    def complete(self, prompt: Prompt) -> str:
        raise OracleUnavailableError(
            f"replay backend has no cached answer for {prompt.family} "
            f"prompt {prompt.digest[:12]}")


# --- the oracle itself ------------------------------------------------------

_TRUE_FALSE = re.compile(r"\b(true|false)\b", re.IGNORECASE)


def parse_answer(family: str, raw: str) -> tuple[str, object]:
    """Parse a raw backend response for a family; never guesses booleans."""
    if family in BOOLEAN_FAMILIES:
        match = _TRUE_FALSE.search(raw)
        if not match:
            raise OracleParseError(
                f"{family} response contains neither 'true' nor 'false'", raw=raw)
        return "boolean", match.group(1).lower() == "true"
    if family == "extract":
        return "text", raw.strip()
    if family == "multi_tuple":
        rows: list[list[str]] = []
        for line in raw.splitlines():
            line = line.strip()
            if not line:
                continue
            try:
                parsed = json.loads(line)
            except json.JSONDecodeError:
                parsed = None
            if isinstance(parsed, list):
                rows.append([str(v) for v in parsed])
            else:  # lenient fallback for non-contract lines
                rows.append([part.strip() for part in line.split("|")])
        return "tuple-list", rows
    raise OracleParseError(f"unknown prompt family '{family}'", raw=raw)


class Oracle:
    """ask() = cache -> backend(with retries) -> parse -> ledger."""

    def __init__(self, backend, ledger: CostLedger, cache: ReplayCache | None = None,
                 tokenizer=count_tokens, retry_base: float = 1.0,
                 retry_factor: float = 2.0, retry_attempts: int = 5,
                 sleep=time.sleep):
        self.backend = backend
        self.ledger = ledger
        self.cache = cache if cache is not None else ReplayCache()
        self.tokenizer = tokenizer
        self.retry_base = retry_base
        self.retry_factor = retry_factor
        self.retry_attempts = retry_attempts
        self._sleep = sleep
        self.asks = 0
        self.backend_calls = 0
        self._lock = threading.Lock()

    def ask(self, prompt: Prompt) -> OracleAnswer:
        with self._lock:
            self.asks += 1
        digest = prompt.digest
        hit = self.cache.get(digest)
        if hit is not None:
            kind, parsed = parse_answer(prompt.family, hit["answer_raw"])
            self.ledger.record(LedgerEntry(digest, prompt.family,
                                           hit["tokens_in"], hit["tokens_out"], True))
            return OracleAnswer(kind=kind, raw=hit["answer_raw"], parsed=parsed,
                                tokens_in=hit["tokens_in"],
                                tokens_out=hit["tokens_out"], cached=True)
        raw = self._call_with_retry(prompt)
        tokens_in = self.tokenizer(prompt.rendered_text)
        tokens_out = self.tokenizer(raw)
        kind, parsed = parse_answer(prompt.family, raw)
        with self._lock:
            self.backend_calls += 1
        self.ledger.record(LedgerEntry(digest, prompt.family, tokens_in, tokens_out, False))
        self.cache.put(digest, prompt.family, raw, tokens_in, tokens_out)
        return OracleAnswer(kind=kind, raw=raw, parsed=parsed,
                            tokens_in=tokens_in, tokens_out=tokens_out)

    def _call_with_retry(self, prompt: Prompt) -> str:
        delay = self.retry_base
        last_error: Exception | None = None
        for attempt in range(self.retry_attempts):
            try:
                return self.backend.complete(prompt)
            except (OracleUnavailableError, UserError, OracleParseError):
                raise  # not transport problems; retrying cannot help
            except Exception as exc:
                last_error = exc
                if attempt < self.retry_attempts - 1:
                    self._sleep(delay)
                    delay *= self.retry_factor
        raise OracleUnavailableError(
            f"backend failed after {self.retry_attempts} attempts: {last_error}")


def make_oracle(cfg: OracleConfig, sleep=time.sleep) -> Oracle:
    """Construct the oracle stack described by an OracleConfig."""
    ledger = CostLedger(rate_in=cfg.rate_in, rate_out=cfg.rate_out)
    cache = ReplayCache(cfg.cache_path or None)
    if cfg.backend == "mock":
        if not cfg.annotations_dir:
            raise UserError("mock oracle backend requires oracle.annotations_dir")
        backend = MockBackend(AnnotationStore(cfg.annotations_dir))
    elif cfg.backend == "http":
        if not cfg.endpoint:
            raise UserError("http oracle backend requires oracle.endpoint")
        backend = HttpBackend(cfg)
    elif cfg.backend == "replay":
        backend = ReplayBackend()
    else:
        raise UserError(f"unknown oracle backend '{cfg.backend}'")
    return Oracle(backend, ledger, cache,
                  retry_base=cfg.retry_base, retry_factor=cfg.retry_factor,
                  retry_attempts=cfg.retry_attempts, sleep=sleep)
