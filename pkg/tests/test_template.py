"""Templates: derivation, prefix matching, oracle-free tree rebuilds,
collection ingestion."""

import pytest

from conftest import make_mock_oracle
from doctables.config import Config
from doctables.docmodel import VisualPattern, document_patterns
from doctables.errors import NotWellFormattedError
from doctables.sht import Sht, ShtNode, node_patterns, oracle_gen
from doctables.synth import random_wellformatted, structured_doc
from doctables.template import (Template, TemplateRegistry, derive_template,
                                ingest_collection, match_template, template_gen)


def _pattern(tag: str) -> VisualPattern:
    return VisualPattern(size=float(10 + len(tag)), name=tag, bold=False,
                         underline=False, italic=False, all_cap=False,
                         num_st=False, alpha_st=True, center=False)


P1, P2, P3, P4 = (_pattern("a"), _pattern("bb"), _pattern("ccc"), _pattern("dddd"))


def _sht1() -> tuple[Sht, dict]:
    # three levels; depth 3 carries two distinct sibling-group patterns
    nodes = {
        0: ShtNode(0, 1, None, [1, 4], 1),
        1: ShtNode(1, 2, 0, [2, 3], 2),
        2: ShtNode(2, 3, 1, [], 3),
        3: ShtNode(3, 5, 1, [], 3),
        4: ShtNode(4, 8, 0, [5], 2),
        5: ShtNode(5, 9, 4, [], 3),
    }
    sht = Sht(doc_id="sht1", nodes=nodes, root=0, n_phrases=12)
    patterns = {0: P1, 1: P2, 2: P3, 3: P3, 4: P2, 5: P4}
    return sht, patterns


def test_derive_template_levels():
    sht, patterns = _sht1()
    template = derive_template(sht, patterns)
    assert sorted(template.levels) == [1, 2, 3]
    assert template.patterns == {P1, P2, P3, P4}
    assert template.granularity_of(P1) == 1
    assert template.granularity_of(P2) == 2
    assert template.granularity_of(P3) == 3
    assert template.granularity_of(_pattern("zzzzz")) == -1


def test_derive_rejects_ill_formatted():
    sht, patterns = _sht1()
    patterns[3] = _pattern("off")  # sibling of node 2 with a different pattern
    with pytest.raises(NotWellFormattedError):
        derive_template(sht, patterns)


def test_derive_single_node():
    sht = Sht(doc_id="one", nodes={0: ShtNode(0, 1, None, [], 1)}, root=0,
              n_phrases=3)
    template = derive_template(sht, {0: P1})
    assert template.levels == {1: frozenset({P1})}


def test_derive_shifts_artificial_root():
    nodes = {
        0: ShtNode(0, 0, None, [1, 2], 1),
        1: ShtNode(1, 1, 0, [], 2),
        2: ShtNode(2, 6, 0, [], 2),
    }
    sht = Sht(doc_id="ar", nodes=nodes, root=0, n_phrases=10)
    template = derive_template(sht, {0: None, 1: P1, 2: P1})
    assert template.levels == {1: frozenset({P1})}


def test_derive_matches_depth_group_by(rng):
    synth = random_wellformatted("dg", rng)
    patterns = document_patterns(synth.document)
    node_pat = node_patterns(synth.gt_sht, patterns)
    template = derive_template(synth.gt_sht, node_pat)
    offset = 1 if synth.gt_sht.nodes[synth.gt_sht.root].phrase_index == 0 else 0
    expected: dict = {}
    for node in synth.gt_sht.nodes.values():
        if node_pat[node.node_id] is not None:
            expected.setdefault(node.granularity - offset, set()).add(
                node_pat[node.node_id])
    assert {g: set(ps) for g, ps in template.levels.items()} == expected


def test_match_prefix_truth_table():
    sht, patterns = _sht1()
    template = derive_template(sht, patterns)
    full = match_template(template, [P1, P2, P3])
    assert full.matched and full.prefix_depth == 3
    partial = match_template(template, [P1, P2])
    assert partial.matched and partial.prefix_depth == 2
    missing_root = match_template(template, [P2, P3, P4])
    assert not missing_root.matched and missing_root.prefix_depth == 0
    assert match_template(template, [P1, P2], prefix_threshold=3).matched is False


def test_template_gen_equals_oracle_gen(rng):
    cfg = Config()
    synth = random_wellformatted("tg", rng, min_phrases=40, max_phrases=120)
    oracle = make_mock_oracle([synth.truth])
    reference = oracle_gen(synth.document, oracle, cfg)
    template = derive_template(reference.sht, reference.patterns)
    asks_before = oracle.asks
    rebuilt = template_gen(template, synth.document,
                           document_patterns(synth.document))
    assert oracle.asks == asks_before  # zero oracle involvement
    assert rebuilt is not None
    assert rebuilt.structure() == reference.sht.structure()


def test_template_gen_empty_on_no_overlap(rng):
    synth = random_wellformatted("none", rng)
    template = Template(levels={1: frozenset({_pattern("alien")})}, source_doc="x")
    assert template_gen(template, synth.document,
                        document_patterns(synth.document)) is None


def test_template_gen_rejects_broken_prefix(rng):
    # document carries patterns at granularity 1 and 3 but not 2
    synth = random_wellformatted("gap", rng, min_phrases=60, max_phrases=160)
    patterns = document_patterns(synth.document)
    gen = oracle_gen(synth.document, make_mock_oracle([synth.truth]), Config())
    real = derive_template(gen.sht, gen.patterns)
    if len(real.levels) < 3:
        pytest.skip("generated document too shallow for the gap scenario")
    gapped = Template(levels={1: real.levels[1],
                              2: frozenset({_pattern("alien")}),
                              3: real.levels[3]}, source_doc="x")
    assert template_gen(gapped, synth.document, patterns) is None


def test_ingest_single_template_amortizes(tmp_path, rng):
    cfg = Config()
    synths = [structured_doc(f"amort-{i}", rng) for i in range(6)]
    oracle = make_mock_oracle([s.truth for s in synths])
    result = ingest_collection([s.document for s in synths], oracle, cfg)
    assert [r.method for r in result.records] == ["oracle"] + ["template"] * 5
    assert all(r.oracle_calls == 0 for r in result.records[1:])
    assert len(result.registry.entries) == 1
    for synth in synths:
        assert result.shts[synth.document.doc_id].structure() == \
            synth.gt_sht.structure()


def test_ingest_two_disjoint_templates(rng):
    cfg = Config()
    a = structured_doc("v0-doc", rng, variant=0)
    b = structured_doc("v1-doc", rng, variant=1)
    oracle = make_mock_oracle([a.truth, b.truth])
    result = ingest_collection([a.document, b.document], oracle, cfg)
    assert [r.method for r in result.records] == ["oracle", "oracle"]
    assert len(result.registry.entries) == 2


def test_ingest_mixed_collection(rng):
    cfg = Config()
    synths = [structured_doc(f"mix-{i}", rng, variant=i % 2) for i in range(6)]
    oracle = make_mock_oracle([s.truth for s in synths])
    result = ingest_collection([s.document for s in synths], oracle, cfg)
    assert len(result.registry.entries) == 2
    oracle_docs = [r.doc_id for r in result.records if r.method == "oracle"]
    assert oracle_docs == ["mix-0", "mix-1"]
    for synth in synths:
        assert result.shts[synth.document.doc_id].structure() == \
            synth.gt_sht.structure()


def test_ingest_largest_sht_wins(rng):
    # two registered templates match; richer (3-level) template yields more nodes
    cfg = Config()
    synths = [structured_doc(f"big-{i}", rng) for i in range(2)]
    oracle = make_mock_oracle([s.truth for s in synths])
    result = ingest_collection([s.document for s in synths], oracle, cfg)
    registry = result.registry
    full = registry.entries[0].template
    shallow = Template(levels={1: full.levels[1], 2: full.levels[2]},
                       source_doc="shallow")
    registry.entries.insert(0, type(registry.entries[0])(template_id=0,
                                                         template=shallow))
    registry.entries[1].template_id = 1
    third = structured_doc("big-2", rng)
    oracle.backend.store.put(third.truth)
    more = ingest_collection([third.document], oracle, cfg, registry=registry)
    record = more.records[0]
    assert record.method == "template"
    assert record.template_id == 1  # deeper template produced the larger tree
    assert more.shts["big-2"].structure() == third.gt_sht.structure()


def test_registry_round_trip(tmp_path, rng):
    synth = structured_doc("rt", rng)
    oracle = make_mock_oracle([synth.truth])
    result = ingest_collection([synth.document], oracle, Config())
    path = tmp_path / "templates.jsonl"
    result.registry.save(path)
    loaded = TemplateRegistry.load(path)
    assert len(loaded.entries) == 1
    assert loaded.entries[0].template.levels == result.registry.entries[0].template.levels
    assert loaded.entries[0].template.source_doc == "rt"
