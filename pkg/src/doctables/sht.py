"""Header-tree recovery for a single document.

Pipeline: cluster phrases by visual pattern, drop non-header clusters by
sampling the header oracle, then assemble the surviving header phrases
into a single-rooted ordered tree where each node hangs off the most
specific existing node whose text span covers it. For documents whose
true tree is well-formatted (siblings share a pattern; every pattern has
one root path), this recovers the true tree exactly given correct header
answers.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .config import Config
from .docmodel import Document, Phrase, TextSpan, VisualPattern, document_patterns
from .errors import InternalError, OracleUnavailableError
from .oracle import Oracle, render_prompt


@dataclass
class Cluster:
    pattern: VisualPattern
    phrase_indices: list[int]  # sorted ascending

    @property
    def min_index(self) -> int:
        return self.phrase_indices[0]


@dataclass
class ShtNode:
    node_id: int
    phrase_index: int  # 0 marks the artificial empty-phrase root
    parent: int | None
    children: list[int] = field(default_factory=list)
    granularity: int = 1


@dataclass
class Sht:
    doc_id: str
    nodes: dict[int, ShtNode]
    root: int
    n_phrases: int

    def node(self, node_id: int) -> ShtNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise InternalError(f"unknown node id {node_id} in {self.doc_id}") from None

    def is_leaf(self, node_id: int) -> bool:
        return not self.node(node_id).children

    def next_index(self, node_id: int) -> int:
        """Phrase index of the right sibling, else the closest ancestor's,
        else the n+1 sentinel so spans cover through the last phrase."""
        current = self.node(node_id)
        while current.parent is not None:
            siblings = self.nodes[current.parent].children
            pos = siblings.index(current.node_id)
            if pos + 1 < len(siblings):
                return self.nodes[siblings[pos + 1]].phrase_index
            current = self.nodes[current.parent]
        return self.n_phrases + 1

    def span(self, node_id: int) -> TextSpan:
        node = self.node(node_id)
        start = max(node.phrase_index, 1)
        return TextSpan(start, self.next_index(node_id) - 1)

    def preorder(self) -> list[int]:
        order: list[int] = []
        stack = [self.root]
        while stack:
            node_id = stack.pop()
            order.append(node_id)
            stack.extend(reversed(self.nodes[node_id].children))
        return order

    def ancestors(self, node_id: int) -> list[int]:
        """Ancestor ids ordered root -> parent."""
        chain: list[int] = []
        parent = self.node(node_id).parent
        while parent is not None:
            chain.append(parent)
            parent = self.nodes[parent].parent
        chain.reverse()
        return chain

    def max_granularity(self) -> int:
        return max(n.granularity for n in self.nodes.values())

    def structure(self) -> tuple:
        """Phrase-index level signature, independent of node-id assignment."""
        pairs = []
        for node in self.nodes.values():
            parent_ind = None if node.parent is None else self.nodes[node.parent].phrase_index
            pairs.append((node.phrase_index, parent_ind))
        return tuple(sorted(pairs))

    def validate(self) -> None:
        roots = [n for n in self.nodes.values() if n.parent is None]
        if len(roots) != 1 or roots[0].node_id != self.root:
            raise InternalError(f"{self.doc_id}: tree must have exactly one root")
        seen_phrases = set()
        for node in self.nodes.values():
            if node.phrase_index in seen_phrases:
                raise InternalError(f"{self.doc_id}: duplicate phrase index {node.phrase_index}")
            seen_phrases.add(node.phrase_index)
            child_inds = [self.nodes[c].phrase_index for c in node.children]
            if child_inds != sorted(child_inds):
                raise InternalError(f"{self.doc_id}: children of {node.node_id} out of order")
            if any(ci <= node.phrase_index for ci in child_inds if node.phrase_index > 0):
                raise InternalError(f"{self.doc_id}: child precedes parent {node.node_id}")
        order = [self.nodes[i].phrase_index for i in self.preorder()]
        if order != sorted(order):
            raise InternalError(f"{self.doc_id}: pre-order is not increasing")


def cluster_phrases(phrases: list[Phrase],
                    patterns: list[VisualPattern]) -> list[Cluster]:
    """One cluster per distinct visual pattern, ordered by first occurrence."""
    if not phrases:
        raise ValueError("cannot cluster an empty phrase list")
    buckets: dict[VisualPattern, list[int]] = {}
    for phrase, pattern in zip(phrases, patterns):
        buckets.setdefault(pattern, []).append(phrase.index)
    clusters = [Cluster(pattern=p, phrase_indices=sorted(ix)) for p, ix in buckets.items()]
    clusters.sort(key=lambda c: c.min_index)
    return clusters


def _cluster_rng(seed: int, doc_id: str, min_index: int) -> np.random.Generator:
    digest = hashlib.sha256(doc_id.encode()).digest()
    return np.random.default_rng([seed, int.from_bytes(digest[:8], "big"), min_index])


def prune_nonheader_clusters(clusters: list[Cluster], phrases: list[Phrase],
                             oracle: Oracle, doc_id: str, k: int = 10,
                             seed: int = 0) -> list[Cluster]:
    """Drop a cluster iff strictly more than half its sampled phrases are
    non-headers according to the oracle; exactly half keeps it."""
    kept = []
    for cluster in clusters:
        size = min(len(cluster.phrase_indices), k)
        rng = _cluster_rng(seed, doc_id, cluster.min_index)
        picks = rng.choice(len(cluster.phrase_indices), size=size, replace=False)
        sample = sorted(cluster.phrase_indices[i] for i in picks)
        non_headers = 0
        for index in sample:
            prompt = render_prompt(
                "header", {"s": phrases[index - 1].text},
                meta={"doc_id": doc_id, "phrase_index": index})
            try:
                answer = oracle.ask(prompt)
            except OracleUnavailableError as exc:
                raise OracleUnavailableError(
                    f"header pruning failed on cluster starting at phrase "
                    f"{cluster.min_index} of {doc_id}: {exc}") from exc
            if answer.parsed is False:
                non_headers += 1
        if non_headers * 2 <= size:
            kept.append(cluster)
    return kept


class _PartialTree:
    """Mutable tree keyed by phrase index, used only during construction."""

    def __init__(self, n_phrases: int):
        self.n = n_phrases
        self.parent: dict[int, int | None] = {}
        self.children: dict[int, list[int]] = {}

    def add(self, index: int, parent: int | None) -> None:
        self.parent[index] = parent
        self.children[index] = []
        if parent is not None:
            siblings = self.children[parent]
            siblings.append(index)
            siblings.sort()

    def next_of(self, index: int) -> int:
        current = index
        while self.parent[current] is not None:
            siblings = self.children[self.parent[current]]
            pos = siblings.index(current)
            if pos + 1 < len(siblings):
                return siblings[pos + 1]
            current = self.parent[current]
        return self.n + 1

    def covering(self, index: int) -> int | None:
        """Most specific existing node whose span contains `index`:
        the covering node with the largest phrase index."""
        best = None
        for candidate in self.parent:
            if candidate <= index or candidate == 0:
                start = max(candidate, 1)
                if start <= index <= self.next_of(candidate) - 1:
                    if best is None or candidate > best:
                        best = candidate
        return best


def build_tree(doc_id: str, n_phrases: int, header_clusters: list[Cluster]) -> Sht:
    """Assemble header clusters into a tree, most-specific-parent rule.

    Clusters are consumed in ascending order of their minimum phrase index,
    and each cluster's nodes are attached simultaneously: parents are chosen
    against the tree as it stood before the cluster.
    """
    indices_seen: set[int] = set()
    for cluster in header_clusters:
        overlap = indices_seen & set(cluster.phrase_indices)
        if overlap:
            raise InternalError(f"{doc_id}: clusters share phrase indices {sorted(overlap)}")
        indices_seen |= set(cluster.phrase_indices)

    clusters = sorted(header_clusters, key=lambda c: c.min_index)
    tree = _PartialTree(n_phrases)

    pending = list(clusters)
    if not pending or pending[0].min_index != 1:
        # no cluster holds the first phrase: synthesize it as the root
        tree.add(1, None)
        root_index = 1
    elif len(pending[0].phrase_indices) == 1:
        tree.add(1, None)
        root_index = 1
        pending = pending[1:]
    else:
        # the first phrase shares a pattern with later ones: artificial root
        tree.add(0, None)
        root_index = 0

    for cluster in pending:
        parents = {}
        for index in cluster.phrase_indices:
            cover = tree.covering(index)
            if cover is None:
                raise InternalError(f"{doc_id}: no covering node for phrase {index}")
            parents[index] = cover
        for index in cluster.phrase_indices:
            tree.add(index, parents[index])

    # freeze: node ids follow phrase-index order, granularity = depth
    order = sorted(tree.parent)
    id_of = {index: node_id for node_id, index in enumerate(order)}
    nodes: dict[int, ShtNode] = {}
    for index in order:
        parent_index = tree.parent[index]
        nodes[id_of[index]] = ShtNode(
            node_id=id_of[index],
            phrase_index=index,
            parent=None if parent_index is None else id_of[parent_index],
            children=[id_of[c] for c in tree.children[index]],
        )
    sht = Sht(doc_id=doc_id, nodes=nodes, root=id_of[root_index], n_phrases=n_phrases)
    _assign_granularity(sht)
    sht.validate()
    return sht


def _assign_granularity(sht: Sht) -> None:
    stack = [(sht.root, 1)]
    while stack:
        node_id, depth = stack.pop()
        node = sht.nodes[node_id]
        node.granularity = depth
        stack.extend((c, depth + 1) for c in node.children)


def node_patterns(sht: Sht, patterns: list[VisualPattern]) -> dict[int, VisualPattern | None]:
    """Pattern per node id; the artificial root (phrase 0) maps to None."""
    out: dict[int, VisualPattern | None] = {}
    for node in sht.nodes.values():
        out[node.node_id] = None if node.phrase_index == 0 else patterns[node.phrase_index - 1]
    return out


@dataclass
class WellFormattedReport:
    sibling_violations: list[tuple[int, int, int]] = field(default_factory=list)
    prefix_violations: list[tuple[VisualPattern, list[int]]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.sibling_violations and not self.prefix_violations


def check_well_formatted(sht: Sht,
                         patterns: dict[int, VisualPattern | None]) -> WellFormattedReport:
    """Condition 1: siblings share a pattern. Condition 2: every pattern's
    node set has a single visual prefix (root path of patterns)."""
    report = WellFormattedReport()
    for node in sht.nodes.values():
        for left, right in zip(node.children, node.children[1:]):
            if patterns[left] != patterns[right]:
                report.sibling_violations.append((node.node_id, left, right))

    prefix_of: dict[int, tuple] = {}
    for node_id in sht.preorder():
        node = sht.nodes[node_id]
        above = () if node.parent is None else prefix_of[node.parent]
        prefix_of[node_id] = above + (patterns[node_id],)

    by_pattern: dict[VisualPattern, dict[tuple, list[int]]] = {}
    for node_id, pattern in patterns.items():
        if pattern is None:
            continue
        by_pattern.setdefault(pattern, {}).setdefault(prefix_of[node_id], []).append(node_id)
    for pattern, prefixes in by_pattern.items():
        if len(prefixes) > 1:
            offenders = sorted(nid for group in prefixes.values() for nid in group)
            report.prefix_violations.append((pattern, offenders))
    return report


@dataclass
class BuildReport:
    doc_id: str
    oracle_calls: int
    tokens_in: int
    tokens_out: int
    clusters_total: int
    clusters_kept: int
    seed: int


@dataclass
class OracleGenResult:
    sht: Sht
    patterns: dict[int, VisualPattern | None]
    report: BuildReport


def oracle_gen(document: Document, oracle: Oracle, cfg: Config) -> OracleGenResult:
    """cluster -> prune via header oracle -> assemble tree."""
    phrases = document.phrases
    patterns = document_patterns(document, cfg.size_quantum, cfg.center_tolerance,
                                 cfg.include_italic)
    clusters = cluster_phrases(phrases, patterns)
    mark = oracle.ledger.mark()
    asks_before = oracle.asks
    kept = prune_nonheader_clusters(clusters, phrases, oracle, document.doc_id,
                                    k=cfg.header_sample_k, seed=cfg.seed)
    sht = build_tree(document.doc_id, len(phrases), kept)
    tokens_in, tokens_out = oracle.ledger.total_tokens(since=mark)
    report = BuildReport(
        doc_id=document.doc_id,
        oracle_calls=oracle.asks - asks_before,
        tokens_in=tokens_in,
        tokens_out=tokens_out,
        clusters_total=len(clusters),
        clusters_kept=len(kept),
        seed=cfg.seed,
    )
    return OracleGenResult(sht=sht, patterns=node_patterns(sht, patterns), report=report)


def export_records(sht: Sht) -> list[dict]:
    """Line-record export form, one dict per node, ordered by node id."""
    records = []
    for node_id in sorted(sht.nodes):
        node = sht.nodes[node_id]
        span = sht.span(node_id)
        records.append({
            "doc_id": sht.doc_id,
            "node_id": node.node_id,
            "phrase_index": node.phrase_index,
            "parent": node.parent,
            "children": list(node.children),
            "granularity": node.granularity,
            "span_start": span.start,
            "span_end": span.end,
        })
    return records
