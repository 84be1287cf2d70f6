"""Synthetic templatized documents with known ground truth.

Generates canonical document files together with annotation files (mock
oracle ground truth) and the expected header tree, built directly from
the generation structure rather than from the recovery pipeline. Used by
tests, benchmarks and demos; real deployments ingest extractor output
instead.

Layout model: one format per tree level (so sibling headers share a
pattern and every pattern pins one level), two alternating body formats
so consecutive content runs stay separate phrases, and a centered title.
Words are placed 8 to a line, 45 lines to a page, so nothing but the
title ever sits near the page midline.
"""

from __future__ import annotations

import numpy as np

from .annotations import AttrTruth, DocTruth, TableTruth, TupleTruth
from .docmodel import Document, PageInfo, TextSpan, Word
from .errors import InternalError
from .sht import Sht, ShtNode

PAGE_W, PAGE_H = 612.0, 792.0
_MARGIN = 72.0
_LINE_H = 14.0
_WORD_W = 30.0
_WORDS_PER_LINE = 8
_LINES_PER_PAGE = 45

_VOCAB = ("harbor", "survey", "drainage", "signal", "corridor", "pavement",
          "median", "culvert", "trail", "basin", "bridge", "lighting",
          "sidewalk", "crosswalk", "reservoir", "terrace", "plaza", "grove",
          "annex", "depot", "junction", "parkway", "summit", "hollow")

_FILLER = ("the council reviewed the submitted materials in detail",
           "staff presented an updated assessment of current conditions",
           "residents provided comments during the open discussion period",
           "the committee noted progress since the previous session",
           "further coordination with regional agencies is anticipated",
           "a revised schedule will be circulated before the next session",
           "the consultant summarized findings from the field inspection",
           "maintenance crews completed the tasks listed in the memorandum")


class _Format:
    def __init__(self, size: float, font: str, bold: bool = False,
                 underline: bool = False):
        self.size = size
        self.font = font
        self.bold = bold
        self.underline = underline

    def key(self):
        return (self.size, self.font, self.bold, self.underline)


def _level_formats(variant: int) -> dict[str, _Format]:
    """Distinct per-level header formats plus two body formats."""
    family = f"Helvetica-T{variant}"
    serif = f"TimesNewRoman-T{variant}"
    return {
        "title": _Format(20.0, family, bold=True),
        "h1": _Format(17.0, family, bold=True),
        "h2": _Format(14.0, family, bold=True),
        "h3": _Format(12.0, family, bold=True, underline=True),
        "h4": _Format(11.0, family, bold=True),
        "bodyA": _Format(10.0, serif),
        "bodyB": _Format(10.0, f"Georgia-T{variant}"),
    }


class _Builder:
    """Places phrases as words on pages; guards against format merges."""

    def __init__(self, doc_id: str):
        self.doc_id = doc_id
        self.words: list[Word] = []
        self.line = 0
        self.count = 0
        self._last_key = None
        self.headers: set[int] = set()
        self._body_flip = False

    def phrase(self, text: str, fmt: _Format, centered: bool = False,
               header: bool = False) -> int:
        key = fmt.key()
        if key == self._last_key:
            raise InternalError(f"{self.doc_id}: consecutive phrases share format {key}")
        self._last_key = key
        tokens = text.split()
        if centered and len(tokens) > _WORDS_PER_LINE:
            raise InternalError("centered phrases must fit one line")
        for i, token in enumerate(tokens):
            column = i % _WORDS_PER_LINE
            if column == 0 and i > 0:
                self.line += 1
            if centered:
                start = PAGE_W / 2 - (len(tokens) * _WORD_W - 6.0) / 2
                x0 = start + column * _WORD_W
            else:
                x0 = _MARGIN + column * _WORD_W
            page = self.line // _LINES_PER_PAGE + 1
            y_top = PAGE_H - 36.0 - (self.line % _LINES_PER_PAGE) * _LINE_H
            self.words.append(Word(
                text=token, font_name=fmt.font, font_size=fmt.size,
                bold=fmt.bold, underline=fmt.underline,
                bbox=(x0, y_top - 12.0, x0 + 24.0, y_top), page=page))
        self.line += 1
        self.count += 1
        if header:
            self.headers.add(self.count)
        return self.count

    def body(self, text: str, formats: dict[str, _Format]) -> int:
        fmt = formats["bodyB"] if self._body_flip else formats["bodyA"]
        self._body_flip = not self._body_flip
        return self.phrase(text, fmt)

    def document(self) -> Document:
        pages = [PageInfo(page=p, width=PAGE_W, height=PAGE_H)
                 for p in range(1, self.line // _LINES_PER_PAGE + 2)]
        return Document(doc_id=self.doc_id, pages=pages, words=self.words)


def _gt_sht(doc_id: str, n_phrases: int,
            links: list[tuple[int, int | None]]) -> Sht:
    """Expected tree straight from generation structure (not the recovery path)."""
    order = sorted(index for index, _ in links)
    id_of = {index: node_id for node_id, index in enumerate(order)}
    nodes: dict[int, ShtNode] = {}
    for index, parent in sorted(links):
        nodes[id_of[index]] = ShtNode(
            node_id=id_of[index], phrase_index=index,
            parent=None if parent is None else id_of[parent])
    for node in nodes.values():
        if node.parent is not None:
            nodes[node.parent].children.append(node.node_id)
    for node in nodes.values():
        node.children.sort(key=lambda c: nodes[c].phrase_index)
    root = next(n.node_id for n in nodes.values() if n.parent is None)
    sht = Sht(doc_id=doc_id, nodes=nodes, root=root, n_phrases=n_phrases)
    stack = [(root, 1)]
    while stack:
        node_id, depth = stack.pop()
        nodes[node_id].granularity = depth
        stack.extend((c, depth + 1) for c in nodes[node_id].children)
    sht.validate()
    return sht


class SynthDoc:
    def __init__(self, document: Document, truth: DocTruth, gt_sht: Sht):
        self.document = document
        self.truth = truth
        self.gt_sht = gt_sht


def _header_text(rng: np.random.Generator, depth: int) -> str:
    words = [str(_VOCAB[int(rng.integers(len(_VOCAB)))]).capitalize()
             for _ in range(int(rng.integers(2, 5)))]
    return " ".join(words) + f" {depth}{int(rng.integers(10, 99))}"


def _filler_sentences(rng: np.random.Generator, n: int) -> str:
    picks = [str(_FILLER[int(rng.integers(len(_FILLER)))]) for _ in range(n)]
    return ". ".join(s.capitalize() for s in picks) + "."


def random_wellformatted(doc_id: str, rng: np.random.Generator,
                         min_levels: int = 3, max_levels: int = 5,
                         min_phrases: int = 20, max_phrases: int = 200) -> SynthDoc:
    """Random well-formatted document; 25% of documents exercise the
    artificial-root path (no title, several top-level sections)."""
    levels = int(rng.integers(min_levels, max_levels + 1))
    target = int(rng.integers(min_phrases, max_phrases + 1))
    artificial = bool(rng.random() < 0.25)
    variant = int(rng.integers(0, 1_000_000))
    formats = _level_formats(variant)
    level_fmt = {1: formats["title"], 2: formats["h1"], 3: formats["h2"],
                 4: formats["h3"], 5: formats["h4"]}

    builder = _Builder(doc_id)
    links: list[tuple[int, int | None]] = []

    def emit(depth: int, parent: int | None, budget: list[int]) -> None:
        index = builder.phrase(_header_text(rng, depth), level_fmt[depth],
                               centered=(depth == 1 and not artificial),
                               header=True)
        links.append((index, parent))
        budget[0] -= 1
        is_leaf = depth >= levels or budget[0] <= 2
        if is_leaf or rng.random() < 0.4:
            builder.body(_filler_sentences(rng, int(rng.integers(1, 3))), formats)
            budget[0] -= 1
        if is_leaf:
            return
        for _ in range(int(rng.integers(2, 4))):
            if budget[0] <= 2:
                break
            emit(depth + 1, index, budget)

    budget = [max(target // 2, 10)]
    if artificial:
        links.append((0, None))
        top_level = 0  # two or more, so s1 shares its pattern with a later phrase
        while budget[0] > 2 or top_level < 2:
            emit(2, 0, budget)
            top_level += 1
            if top_level >= 2 and budget[0] <= 2:
                break
    else:
        emit(1, None, budget)

    while builder.count < min_phrases:
        builder.body(_filler_sentences(rng, 1), formats)
    if builder.count > max_phrases:
        raise InternalError(f"{doc_id}: generated {builder.count} phrases")

    document = builder.document()
    truth = DocTruth(doc_id=doc_id, headers=set(builder.headers))
    return SynthDoc(document=document, truth=truth,
                    gt_sht=_gt_sht(doc_id, builder.count, links))


# --- structured civic-style fixtures -----------------------------------------

_TYPES = ("Capital Improvement", "Road Maintenance", "Drainage Upgrade")
_STATUSES = ("in design", "under construction", "awaiting review")
_VENUES = ("VLDB", "SIGMOD", "ICDE")
_LOCATIONS = ("City Hall Chamber", "Community Center", "Harbor Annex")


def structured_doc(doc_id: str, rng: np.random.Generator, *,
                   two_project_sections: bool = False,
                   n_projects: int = 3, n_notices: int = 2, n_refs: int = 3,
                   filler_per_leaf: int = 1, variant: int = 0) -> SynthDoc:
    """Civic-agenda-style document: projects, one meeting record, notices,
    and a references leaf whose entries only exist as span-level tuples."""
    formats = _level_formats(variant)
    builder = _Builder(doc_id)
    links: list[tuple[int, int | None]] = []
    spans: dict[int, list[int]] = {}  # header index -> [start, end]

    def open_node(text: str, level_key: str, parent: int | None,
                  centered: bool = False) -> int:
        index = builder.phrase(text, formats[level_key], centered=centered, header=True)
        links.append((index, parent))
        spans[index] = [index, index]
        return index

    def close_node(index: int) -> None:
        spans[index][1] = builder.count

    title = open_node(f"Malibu City Agenda Report {doc_id}", "title", None,
                      centered=True)
    builder.body("This report summarizes municipal activity for the period.",
                 formats)

    project_rows: list[TupleTruth] = []
    section_names = (["Capital Improvement Projects Design", "Public Works Projects"]
                     if two_project_sections else ["Project Status Updates"])
    project_sections = []
    per_section = max(1, n_projects // len(section_names))
    project_budget = n_projects
    for section_name in section_names:
        section = open_node(section_name, "h1", title)
        builder.body(_filler_sentences(rng, 1), formats)
        take = per_section if section_name != section_names[-1] else project_budget
        for _ in range(take):
            name = f"{_header_text(rng, 3)} Project {len(project_rows) + 1}"
            ptype = str(_TYPES[int(rng.integers(len(_TYPES)))])
            status = str(_STATUSES[int(rng.integers(len(_STATUSES)))])
            begin = f"202{int(rng.integers(2, 5))}-0{int(rng.integers(1, 10))}-1{int(rng.integers(0, 10))}"
            budget_value = float(int(rng.integers(200, 5200)) * 1000)
            node = open_node(name, "h2", section)
            p1 = builder.body(f"The project is classified as {ptype}. "
                              f"The current status is {status}.", formats)
            p2 = builder.body(f"Construction is expected to begin {begin}. "
                              f"The allocated budget is {int(budget_value)} dollars.",
                              formats)
            if filler_per_leaf:
                builder.body(_filler_sentences(rng, filler_per_leaf), formats)
            close_node(node)
            project_rows.append(TupleTruth(
                span=TextSpan(node, spans[node][1]),
                attrs={
                    "name": AttrTruth(name, TextSpan(node, node)),
                    "type": AttrTruth(ptype, TextSpan(p1, p1)),
                    "status": AttrTruth(status, TextSpan(p1, p1)),
                    "begin_time": AttrTruth(begin, TextSpan(p2, p2)),
                    "budget": AttrTruth(budget_value, TextSpan(p2, p2)),
                }))
            project_budget -= 1
        close_node(section)
        project_sections.append(section)

    meeting_section = open_node("Meeting Details", "h1", title)
    builder.body(_filler_sentences(rng, 1), formats)
    meeting_node = open_node("Session Information", "h2", meeting_section)
    meeting_time = f"2023-{int(rng.integers(1, 13)):02d}-{int(rng.integers(1, 28)):02d}"
    location = str(_LOCATIONS[int(rng.integers(len(_LOCATIONS)))])
    m1 = builder.body(f"The meeting is scheduled for {meeting_time}. "
                      f"The session takes place at {location}.", formats)
    close_node(meeting_node)
    close_node(meeting_section)

    notices_section = open_node("General Notices", "h1", title)
    builder.body(_filler_sentences(rng, 1), formats)
    for _ in range(n_notices):
        notice = open_node(f"{_header_text(rng, 3)} Notice", "h2", notices_section)
        builder.body(_filler_sentences(rng, 1), formats)
        close_node(notice)
    close_node(notices_section)

    ref_rows: list[TupleTruth] = []
    refs_section = open_node("References", "h1", title)
    for ref_no in range(n_refs):
        ref_title = f"{_header_text(rng, 4)} Study {ref_no + 1}"
        venue = str(_VENUES[int(rng.integers(len(_VENUES)))])
        year = float(int(rng.integers(2004, 2025)))
        index = builder.body(f"{ref_title}. Published at {venue} in {int(year)}.",
                             formats)
        ref_rows.append(TupleTruth(
            span=TextSpan(index, index),
            attrs={
                "title": AttrTruth(ref_title, TextSpan(index, index)),
                "venue": AttrTruth(venue, TextSpan(index, index)),
                "year": AttrTruth(year, TextSpan(index, index)),
            }))
    close_node(refs_section)
    close_node(title)

    n = builder.count
    projects_region = TextSpan(project_sections[0],
                               spans[project_sections[-1]][1])
    meeting_tuple_span = TextSpan(meeting_node, spans[meeting_node][1])
    truth = DocTruth(doc_id=doc_id, headers=set(builder.headers), tables={
        "projects": TableTruth(region=projects_region, tuples=project_rows),
        "meetings": TableTruth(
            region=TextSpan(meeting_section, spans[meeting_section][1]),
            tuples=[TupleTruth(span=meeting_tuple_span, attrs={
                "meeting_time": AttrTruth(meeting_time, TextSpan(m1, m1)),
                "location": AttrTruth(location, TextSpan(m1, m1)),
            })]),
        "refs": TableTruth(
            region=TextSpan(refs_section, spans[refs_section][1]),
            tuples=ref_rows),
    })
    return SynthDoc(document=builder.document(), truth=truth,
                    gt_sht=_gt_sht(doc_id, n, links))


def deep_report_doc(doc_id: str, rng: np.random.Generator, *,
                    sections: int = 3, subsections: int = 3,
                    body_sentences: int = 14, variant: int = 0) -> SynthDoc:
    """Large 3-level document with one whole-document 'report' tuple whose
    attributes hide in specific leaves: the tree-search economy fixture."""
    formats = _level_formats(variant)
    builder = _Builder(doc_id)
    links: list[tuple[int, int | None]] = []

    title = builder.phrase(f"Annual Infrastructure Review {doc_id}",
                           formats["title"], centered=True, header=True)
    links.append((title, None))
    builder.body(_filler_sentences(rng, 2), formats)

    contract_value = float(int(rng.integers(100, 900)) * 10000)
    inspector = f"{_header_text(rng, 2)} Associates"
    fact_slot = (int(rng.integers(0, sections)), int(rng.integers(0, subsections)))
    fact_sources: dict[str, tuple[int, str, object]] = {}

    for s in range(sections):
        section = builder.phrase(_header_text(rng, 2), formats["h1"], header=True)
        links.append((section, title))
        builder.body(_filler_sentences(rng, 2), formats)
        for b in range(subsections):
            leaf = builder.phrase(_header_text(rng, 3), formats["h2"], header=True)
            links.append((leaf, section))
            for _ in range(body_sentences // 2):
                builder.body(_filler_sentences(rng, 3), formats)
            if (s, b) == fact_slot:
                p = builder.body(
                    f"The audited contract value equals {int(contract_value)}. "
                    f"The review was certified by {inspector}.", formats)
                fact_sources["contract_value"] = (p, "number", contract_value)
                fact_sources["inspector"] = (p, "text", inspector)

    n = builder.count
    attrs = {}
    for attr_name, (p, _type, value) in fact_sources.items():
        attrs[attr_name] = AttrTruth(value, TextSpan(p, p))
    truth = DocTruth(doc_id=doc_id, headers=set(builder.headers), tables={
        "reports": TableTruth(region=TextSpan(1, n), tuples=[
            TupleTruth(span=TextSpan(1, n), attrs=attrs)]),
    })
    return SynthDoc(document=builder.document(), truth=truth,
                    gt_sht=_gt_sht(doc_id, n, links))


def write_fixture(synth: SynthDoc, docs_dir, ann_dir=None) -> None:
    """Write the canonical document and its annotation file."""
    from pathlib import Path

    from .docmodel import save_document

    docs_dir = Path(docs_dir)
    docs_dir.mkdir(parents=True, exist_ok=True)
    save_document(synth.document, docs_dir / f"{synth.document.doc_id}.words.jsonl")
    target = Path(ann_dir) if ann_dir is not None else docs_dir
    target.mkdir(parents=True, exist_ok=True)
    synth.truth.save(target)
