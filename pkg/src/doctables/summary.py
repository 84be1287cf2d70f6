"""Node summaries driving the tree search: header path, extractive part,
and a query-scoped top-similarity sentence.

Everything here is deterministic and dependency-free: sentences are split
with a fixed abbreviation guard list, scored by corpus-normalized word
frequency within the span (stopwords excluded), and the dynamic part is
the sentence with the highest term-frequency cosine against the
expression description.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field

from .oracle import count_tokens

STOPWORDS = frozenset("""
a about above after again all am an and any are as at be because been before
being below between both but by can could did do does doing down during each
few for from further had has have having he her here hers him his how i if in
into is it its itself just me more most my no nor not now of off on once only
or other our ours out over own same she should so some such than that the
their theirs them then there these they this those through to too under until
up very was we were what when where which while who whom why will with you
your yours
""".split())

_ABBREVIATIONS = ("no.", "dr.", "mr.", "mrs.", "ms.", "st.", "fig.", "eq.",
                  "vs.", "e.g.", "i.e.", "etc.", "inc.", "jr.", "sr.",
                  "prof.", "dept.", "est.", "approx.", "al.")

_WORD = re.compile(r"[a-z0-9']+")


def split_sentences(text: str) -> list[str]:
    """Split on ./?/! boundaries, guarding a fixed abbreviation list."""
    sentences: list[str] = []
    buffer: list[str] = []
    i = 0
    while i < len(text):
        ch = text[i]
        buffer.append(ch)
        if ch in ".?!":
            tail = "".join(buffer).rstrip()
            last_word = tail.split()[-1].lower() if tail.split() else ""
            is_abbrev = ch == "." and (last_word in _ABBREVIATIONS
                                       or re.fullmatch(r"[a-z]\.", last_word))
            nxt = text[i + 1] if i + 1 < len(text) else ""
            if not is_abbrev and (nxt in ("", " ", "\n", "\t")):
                sentence = "".join(buffer).strip()
                if sentence:
                    sentences.append(sentence)
                buffer = []
        i += 1
    leftover = "".join(buffer).strip()
    if leftover:
        sentences.append(leftover)
    return sentences


def _content_words(text: str) -> list[str]:
    return [w for w in _WORD.findall(text.lower()) if w not in STOPWORDS]


def score_sentences(sentences: list[str]) -> list[float]:
    """Sum of corpus-normalized content-word frequencies per sentence."""
    freq = Counter()
    for sentence in sentences:
        freq.update(_content_words(sentence))
    if not freq:
        return [0.0] * len(sentences)
    top = max(freq.values())
    return [sum(freq[w] / top for w in _content_words(s)) for s in sentences]


def extractive_summary(text: str, budget: int, tokenizer=count_tokens) -> list[str]:
    """Greedy pick of highest-scoring sentences within a token budget,
    returned in original order; at least one sentence when any exists."""
    if budget <= 0:
        raise ValueError("summary budget must be positive")
    sentences = split_sentences(text)
    if not sentences:
        return []
    scores = score_sentences(sentences)
    ranked = sorted(range(len(sentences)), key=lambda i: (-scores[i], i))
    chosen: set[int] = set()
    used = 0
    for i in ranked:
        cost = tokenizer(sentences[i])
        if not chosen:
            chosen.add(i)  # mandatory first pick even over budget
            used = cost
            continue
        if used + cost > budget:
            continue
        chosen.add(i)
        used += cost
    return [sentences[i] for i in sorted(chosen)]


def _tf_vector(text: str) -> Counter:
    return Counter(_content_words(text))


def _cosine(a: Counter, b: Counter) -> float:
    if not a or not b:
        return 0.0
    dot = sum(count * b[word] for word, count in a.items())
    norm = math.sqrt(sum(c * c for c in a.values())) * math.sqrt(sum(c * c for c in b.values()))
    return dot / norm if norm else 0.0


def dynamic_summary(span_text: str, expr_descr: str, embedder=None) -> str:
    """Top-1 sentence by similarity with the expression; earliest wins ties."""
    sentences = split_sentences(span_text)
    if not sentences:
        return ""
    if embedder is None:
        query = _tf_vector(expr_descr)
        sims = [_cosine(_tf_vector(s), query) for s in sentences]
    else:
        sims = embedder(sentences, expr_descr)
    best = max(range(len(sentences)), key=lambda i: (sims[i], -i))
    return sentences[best]


@dataclass
class NodeSummary:
    node_names: list[str]
    extractive: list[str]
    dynamic: str | None
    rendered: str = field(init=False)
    token_count: int = field(init=False)

    def __post_init__(self):
        parts = ["Section path: " + " > ".join(self.node_names)]
        if self.extractive:
            parts.append("Summary: " + " ".join(self.extractive))
        if self.dynamic:
            parts.append("Most related: " + self.dynamic)
        self.rendered = "\n".join(parts)
        self.token_count = count_tokens(self.rendered)


def build_summary(name: str, ancestor_names: list[str], context: str,
                  budget: int, expr_descr: str | None = None,
                  extractive: list[str] | None = None) -> NodeSummary:
    """Assemble the three parts; the extractive part may come from an
    offline build (pass it in) or be computed here."""
    names = [n for n in ancestor_names if n] + [name]
    if extractive is None:
        extractive = extractive_summary(context, budget)
    dynamic = dynamic_summary(context, expr_descr) if expr_descr else None
    return NodeSummary(node_names=names, extractive=extractive, dynamic=dynamic)
