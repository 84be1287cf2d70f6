"""Shared fixtures: in-memory mock oracles, a hand-built running-example
document, and the standard civic-style corpus bundle."""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from doctables.annotations import DocTruth
from doctables.catalog import Catalog
from doctables.config import Config
from doctables.ddl import execute_ddl
from doctables.docmodel import Document, PageInfo, Word
from doctables.oracle import CostLedger, MockBackend, Oracle, ReplayCache
from doctables.populate import populate_new_tables
from doctables.synth import structured_doc
from doctables.template import TemplateRegistry, ingest_collection


class MemStore:
    """AnnotationStore stand-in keeping DocTruth objects in memory."""

    def __init__(self, truths=()):
        self._docs = {t.doc_id: t for t in truths}

    def get(self, doc_id):
        return self._docs.get(doc_id)

    def put(self, truth: DocTruth):
        self._docs[truth.doc_id] = truth


def make_mock_oracle(truths=(), cache_path=None) -> Oracle:
    ledger = CostLedger(rate_in=0.06e-3, rate_out=0.12e-3)
    backend = MockBackend(MemStore(truths))
    return Oracle(backend, ledger, ReplayCache(cache_path), sleep=lambda s: None)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def _word(text, size, bold, x0, page=1, font="Helvetica", underline=False):
    return Word(text=text, font_name=font, font_size=size, bold=bold,
                underline=underline, bbox=(x0, 700.0, x0 + 24.0, 712.0), page=page)


def build_running_example() -> tuple[Document, set[int]]:
    """100-phrase document shaped like the civic running example:
    root header at 1, sections at 10 and 63, subsections at 11 and 22."""
    header_at = {
        1: ("City Infrastructure Agenda", 20.0),
        10: ("Design Phase Projects", 16.0),
        11: ("Green Street Improvements", 13.0),
        22: ("Median Upgrade Program", 13.0),
        63: ("Construction Phase Projects", 16.0),
    }
    words = []
    for index in range(1, 101):
        page = (index - 1) // 40 + 1
        if index in header_at:
            text, size = header_at[index]
            for j, token in enumerate(text.split()):
                words.append(_word(token, size, True, 72.0 + 30.0 * j, page))
        else:
            font = "Times" if index % 2 else "Georgia"
            for j, token in enumerate(f"body text segment {index} details".split()):
                words.append(_word(token, 10.0, False, 72.0 + 30.0 * j, page,
                                   font=font))
    pages = [PageInfo(page=p, width=612.0, height=792.0) for p in (1, 2, 3)]
    return Document(doc_id="running-example", pages=pages, words=words), set(header_at)


@pytest.fixture
def running_example():
    return build_running_example()


DDL_PROJECTS = (
    "CREATE TABLE projects WITH DESCRIPTION 'government projects discussed "
    "in a civic agenda report' TUPLE DESCRIPTION 'project';"
    "ALTER TABLE projects ADD name text WITH DESCRIPTION 'name of project', "
    "type text WITH DESCRIPTION 'type of project', "
    "status text WITH DESCRIPTION 'current status of project', "
    "begin_time date WITH DESCRIPTION 'begin time of project', "
    "budget number WITH DESCRIPTION 'allocated budget of project';"
)
DDL_MEETINGS = (
    "CREATE TABLE meetings WITH DESCRIPTION 'city council meeting records' "
    "TUPLE DESCRIPTION 'meeting record';"
    "ALTER TABLE meetings ADD meeting_time date WITH DESCRIPTION 'time of the "
    "meeting', location text WITH DESCRIPTION 'location of the meeting';"
)
DDL_REFS = (
    "CREATE TABLE refs WITH DESCRIPTION 'reference publications listed in the "
    "report' TUPLE DESCRIPTION 'reference publication';"
    "ALTER TABLE refs ADD title text WITH DESCRIPTION 'title of publication', "
    "venue text WITH DESCRIPTION 'venue of publication', "
    "year number WITH DESCRIPTION 'publication year';"
)


@dataclass
class CivicBundle:
    synths: list
    catalog: Catalog
    oracle: Oracle
    cfg: Config
    registry: TemplateRegistry
    ingest_records: list
    population_records: list


def build_civic_bundle(tmp_path: Path, n_docs: int = 4, seed: int = 7,
                       two_project_sections: bool = False,
                       n_projects: int = 3) -> CivicBundle:
    rng = np.random.default_rng(seed)
    synths = [structured_doc(f"civic-{i:02d}", rng, n_projects=n_projects,
                             two_project_sections=two_project_sections)
              for i in range(n_docs)]
    cfg = Config()
    oracle = make_mock_oracle([s.truth for s in synths])
    result = ingest_collection([s.document for s in synths], oracle, cfg)
    catalog = Catalog(tmp_path / "db")
    for synth in synths:
        doc_id = synth.document.doc_id
        catalog.upsert_sht(result.shts[doc_id], synth.document,
                           summary_budget=cfg.summary_budget)
        catalog.docs[doc_id].template_id = next(
            r.template_id for r in result.records if r.doc_id == doc_id)
    report = execute_ddl(catalog, DDL_PROJECTS + DDL_MEETINGS + DDL_REFS)
    population = populate_new_tables(catalog, report.tables_needing_population,
                                     oracle, cfg, result.registry)
    return CivicBundle(synths=synths, catalog=catalog, oracle=oracle, cfg=cfg,
                       registry=result.registry, ingest_records=result.records,
                       population_records=population.records)


@pytest.fixture
def civic(tmp_path) -> CivicBundle:
    return build_civic_bundle(tmp_path)
