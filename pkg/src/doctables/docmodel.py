"""Canonical document model: words, phrases, visual patterns, text spans.

A document on disk is a UTF-8 line-delimited record file. The first line is
a header record::

    {"schema_version": 1, "doc_id": "...", "pages": [{"page": 1, "width": 612.0, "height": 792.0}]}

and every following line is one word record, in document order::

    {"text": "...", "font_name": "...", "font_size": 12.0, "bold": false,
     "underline": false, "x0": 72.0, "y0": 700.0, "x1": 96.0, "y1": 712.0, "page": 1}

Word records may carry an optional ``kind`` field; records of kind
``"image"`` are kept in the word list but skipped during phrase grouping.
Unknown fields are rejected under strict mode and ignored otherwise.
Serialization is canonical (fixed key order, compact separators), so
load -> serialize round-trips byte-identically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DocFormatError, SpanBoundsError

WORD_FIELDS = ("text", "font_name", "font_size", "bold", "underline",
               "x0", "y0", "x1", "y1", "page")
_OPTIONAL_WORD_FIELDS = ("kind",)
_ITALIC_MARKERS = ("italic", "oblique")


@dataclass(frozen=True)
class Word:
    text: str
    font_name: str
    font_size: float
    bold: bool
    underline: bool
    bbox: tuple[float, float, float, float]
    page: int
    kind: str = "word"

    def __post_init__(self):
        x0, y0, x1, y1 = self.bbox
        if x0 > x1 or y0 > y1:
            raise DocFormatError(f"degenerate bbox {self.bbox}")
        if self.page < 1:
            raise DocFormatError(f"page must be >= 1, got {self.page}")
        if self.kind == "word" and not self.text:
            raise DocFormatError("word record with empty text")

    def italic(self) -> bool:
        name = self.font_name.lower()
        return any(marker in name for marker in _ITALIC_MARKERS)


@dataclass(frozen=True)
class PageInfo:
    page: int
    width: float
    height: float


@dataclass(frozen=True)
class TextSpan:
    """Inclusive 1-based phrase index interval."""

    start: int
    end: int

    def __post_init__(self):
        if not (1 <= self.start <= self.end):
            raise SpanBoundsError(f"bad span [{self.start}, {self.end}]")

    def contains(self, index: int) -> bool:
        return self.start <= index <= self.end

    def covers(self, other: "TextSpan") -> bool:
        return self.start <= other.start and other.end <= self.end

    def overlaps(self, other: "TextSpan") -> bool:
        return self.start <= other.end and other.start <= self.end


@dataclass(frozen=True)
class Phrase:
    """Maximal run of consecutive words sharing font size, name and type flags."""

    index: int
    words: tuple[Word, ...]

    @property
    def text(self) -> str:
        return " ".join(w.text for w in self.words)

    @property
    def page_range(self) -> tuple[int, int]:
        return (self.words[0].page, self.words[-1].page)


@dataclass(frozen=True)
class VisualPattern:
    """Formatting feature vector of a phrase; equality is field-wise exact."""

    size: float  # quantized font size
    name: str
    bold: bool
    underline: bool
    italic: bool
    all_cap: bool
    num_st: bool
    alpha_st: bool
    center: bool

    def to_dict(self) -> dict:
        return {"size": self.size, "name": self.name, "bold": self.bold,
                "underline": self.underline, "italic": self.italic,
                "all_cap": self.all_cap, "num_st": self.num_st,
                "alpha_st": self.alpha_st, "center": self.center}

    @classmethod
    def from_dict(cls, data: dict) -> "VisualPattern":
        return cls(**data)


@dataclass
class Document:
    doc_id: str
    pages: list[PageInfo]
    words: list[Word]
    _phrases: list[Phrase] | None = field(default=None, repr=False, compare=False)

    def page_width(self, page: int) -> float:
        for info in self.pages:
            if info.page == page:
                return info.width
        raise DocFormatError(f"word references unknown page {page}", path=self.doc_id)

    @property
    def phrases(self) -> list[Phrase]:
        if self._phrases is None:
            self._phrases = group_phrases(self)
        return self._phrases

    @property
    def n_phrases(self) -> int:
        return len(self.phrases)


def quantize_size(size: float, quantum: float = 0.5) -> float:
    """Round a font size to the nearest multiple of ``quantum``."""
    return round(size / quantum) * quantum


def _format_key(word: Word, quantum: float, include_italic: bool):
    key = (quantize_size(word.font_size, quantum), word.font_name, word.bold, word.underline)
    if include_italic:
        key = key + (word.italic(),)
    return key


def group_phrases(document: Document, quantum: float = 0.5,
                  include_italic: bool = False) -> list[Phrase]:
    """Merge consecutive same-format words into phrases, indices 1..n.

    Image records never join a phrase. The concatenation of the phrase
    word lists equals the document word list minus image records.
    """
    if not document.words:
        raise DocFormatError("document has no words", path=document.doc_id)
    phrases: list[Phrase] = []
    run: list[Word] = []
    run_key = None
    for word in document.words:
        if word.kind == "image":
            continue
        key = _format_key(word, quantum, include_italic)
        if run and key == run_key:
            run.append(word)
        else:
            if run:
                phrases.append(Phrase(index=len(phrases) + 1, words=tuple(run)))
            run = [word]
            run_key = key
    if run:
        phrases.append(Phrase(index=len(phrases) + 1, words=tuple(run)))
    return phrases


def visual_pattern(phrase: Phrase, page_width: float, quantum: float = 0.5,
                   center_tolerance: float = 12.0, include_italic: bool = False) -> VisualPattern:
    """Compute the formatting feature vector of a phrase on its page."""
    if page_width <= 0:
        raise ValueError(f"page_width must be positive, got {page_width}")
    first = phrase.words[0]
    text = phrase.text
    letters = [c for c in text if c.isalpha()]
    stripped = text.lstrip()
    lead = stripped[0] if stripped else ""
    x_left = min(w.bbox[0] for w in phrase.words)
    x_right = max(w.bbox[2] for w in phrase.words)
    midpoint = (x_left + x_right) / 2.0
    return VisualPattern(
        size=quantize_size(first.font_size, quantum),
        name=first.font_name,
        bold=first.bold,
        underline=first.underline,
        italic=first.italic() if include_italic else False,
        all_cap=bool(letters) and all(c.isupper() for c in letters),
        num_st=lead.isdigit(),
        alpha_st=lead.isalpha(),
        center=abs(midpoint - page_width / 2.0) <= center_tolerance,
    )


def document_patterns(document: Document, quantum: float = 0.5,
                      center_tolerance: float = 12.0,
                      include_italic: bool = False) -> list[VisualPattern]:
    """Visual pattern per phrase, aligned with ``document.phrases``."""
    out = []
    for phrase in document.phrases:
        width = document.page_width(phrase.page_range[0])
        out.append(visual_pattern(phrase, width, quantum, center_tolerance, include_italic))
    return out


def span_text(document: Document, span: TextSpan) -> str:
    """Phrase texts ``start..end`` joined with newlines."""
    n = document.n_phrases
    if span.end > n:
        raise SpanBoundsError(f"span [{span.start}, {span.end}] exceeds {n} phrases")
    return "\n".join(p.text for p in document.phrases[span.start - 1:span.end])


# --- serialization ---------------------------------------------------------

def _word_to_record(word: Word) -> dict:
    record = {
        "text": word.text,
        "font_name": word.font_name,
        "font_size": word.font_size,
        "bold": word.bold,
        "underline": word.underline,
        "x0": word.bbox[0],
        "y0": word.bbox[1],
        "x1": word.bbox[2],
        "y1": word.bbox[3],
        "page": word.page,
    }
    if word.kind != "word":
        record["kind"] = word.kind
    return record


def serialize_document(document: Document) -> str:
    """Canonical serialized form; stable byte-for-byte across runs."""
    lines = [json.dumps({
        "schema_version": 1,
        "doc_id": document.doc_id,
        "pages": [{"page": p.page, "width": p.width, "height": p.height}
                  for p in document.pages],
    }, separators=(",", ":"))]
    for word in document.words:
        lines.append(json.dumps(_word_to_record(word), separators=(",", ":")))
    return "\n".join(lines) + "\n"


def save_document(document: Document, path: str | Path) -> None:
    Path(path).write_text(serialize_document(document), encoding="utf-8")


def _parse_word(data: dict, path: str, line_no: int, strict: bool) -> Word | None:
    for name in WORD_FIELDS:
        if name not in data:
            raise DocFormatError(f"word record missing field '{name}'", path, line_no)
    extras = set(data) - set(WORD_FIELDS) - set(_OPTIONAL_WORD_FIELDS)
    if extras and strict:
        raise DocFormatError(f"unknown word fields {sorted(extras)}", path, line_no)
    kind = data.get("kind", "word")
    text = data["text"]
    if kind == "word" and not str(text).strip():
        return None  # whitespace-only words are dropped at load
    try:
        return Word(
            text=str(text),
            font_name=str(data["font_name"]),
            font_size=float(data["font_size"]),
            bold=bool(data["bold"]),
            underline=bool(data["underline"]),
            bbox=(float(data["x0"]), float(data["y0"]),
                  float(data["x1"]), float(data["y1"])),
            page=int(data["page"]),
            kind=str(kind),
        )
    except DocFormatError as exc:
        raise DocFormatError(str(exc), path, line_no) from None


def load_document(path: str | Path, strict: bool = False) -> Document:
    """Parse a serialized document; doc_id falls back to the filename stem."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise DocFormatError("empty file", str(path))
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DocFormatError(f"bad header record: {exc}", str(path), 1) from None
    if not isinstance(header, dict) or header.get("schema_version") != 1:
        raise DocFormatError("header must declare schema_version 1", str(path), 1)
    pages_raw = header.get("pages")
    if not pages_raw:
        raise DocFormatError("header missing pages", str(path), 1)
    pages = [PageInfo(page=int(p["page"]), width=float(p["width"]),
                      height=float(p["height"])) for p in pages_raw]
    doc_id = header.get("doc_id") or path.stem

    words: list[Word] = []
    known_pages = {p.page for p in pages}
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DocFormatError(f"bad word record: {exc}", str(path), line_no) from None
        word = _parse_word(data, str(path), line_no, strict)
        if word is None:
            continue
        if word.page not in known_pages:
            raise DocFormatError(f"word references undeclared page {word.page}",
                                 str(path), line_no)
        words.append(word)
    if not words:
        raise DocFormatError("document has no words", str(path))
    return Document(doc_id=doc_id, pages=pages, words=words)
