"""Small text helpers shared by the engine and population rules."""

from __future__ import annotations

import re

_TOKEN = re.compile(r"[a-z0-9']+")


def token_set(text: str) -> frozenset[str]:
    return frozenset(_TOKEN.findall(text.lower()))


def token_jaccard(a: str, b: str) -> float:
    """Token-set Jaccard similarity on lowercased text."""
    sa, sb = token_set(a), token_set(b)
    if not sa and not sb:
        return 1.0
    if not sa or not sb:
        return 0.0
    return len(sa & sb) / len(sa | sb)
