"""Recognizer and entity-graph tests, including oracle equivalence."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dfgn.data import Answer, Paragraph, QAExample, build_context
from dfgn.nerlink import (
    CONTEXT_EDGE,
    PARAGRAPH_EDGE,
    SENTENCE_EDGE,
    binding_matrix,
    build_graph,
    graph_stats_row,
    missing_support_flag,
    missing_support_ratio,
    recognize,
    recognize_in_context,
)

from oracles import ner_ref

WORDS = ["red", "fox", "green", "hill", "old", "mill", "runs", "to", "the", "."]


def test_recognize_longest_match_wins():
    gaz = [["green", "hill"], ["green", "hill", "bridge"], ["fox"]]
    ctx = "the fox crossed green hill bridge yesterday".split()
    got = recognize(ctx, gaz)
    assert [(s, e) for s, e, _ in got] == [(1, 2), (3, 6)]
    assert got[1][2] == ["green", "hill", "bridge"]


def test_recognize_case_insensitive_no_overlap():
    got = recognize(["Red", "Fox", "red"], [["red", "fox"], ["red"]])
    assert [(s, e) for s, e, _ in got] == [(0, 2), (2, 3)]


def test_recognize_empty_gazetteer_entry_rejected():
    with pytest.raises(ValueError):
        recognize(["a"], [[]])


@pytest.mark.parametrize("seed", range(25))
def test_recognize_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    tokens = [WORDS[i] for i in rng.integers(0, len(WORDS), size=30)]
    gaz = []
    for _ in range(4):
        k = int(rng.integers(1, 4))
        gaz.append([WORDS[i] for i in rng.integers(0, len(WORDS), size=k)])
    got = [(s, e) for s, e, _ in recognize(tokens, gaz)]
    assert got == ner_ref(tokens, gaz)


def two_para_example():
    return QAExample(
        id="g",
        question=["who", "?"],
        paragraphs=[
            Paragraph(
                title=["red", "fox"],
                sentences=[["red", "fox", "meets", "green", "hill", "."]],
            ),
            Paragraph(
                title=["green", "hill"],
                sentences=[["green", "hill", "is", "tall", "."],
                           ["old", "mill", "stands", "."]],
            ),
        ],
        supporting_facts={(0, 0), (1, 0)},
        answer=Answer(type="yes"),
    )


GAZ = [["red", "fox"], ["green", "hill"], ["old", "mill"]]


def test_mentions_do_not_straddle_sentences():
    layout = build_context(two_para_example(), [0, 1])
    mentions = recognize_in_context(layout, GAZ)
    for m in mentions:
        span_sentence = {layout.sentence_of(pos) for pos in range(*m.token_span)}
        assert len(span_sentence) == 1
        assert (m.paragraph_index, m.sentence_index) in span_sentence


def test_graph_edge_rules():
    layout = build_context(two_para_example(), [0, 1])
    mentions = recognize_in_context(layout, GAZ)
    g = build_graph(mentions)
    surf = [" ".join(m.surface) for m in g.nodes]
    # title(red fox), sent0(red fox), sent0(green hill),
    # title(green hill), sent1(green hill), sent2(old mill)
    assert surf == ["red fox", "red fox", "green hill",
                    "green hill", "green hill", "old mill"]
    sent = g.edge_types[SENTENCE_EDGE]
    ctx = g.edge_types[CONTEXT_EDGE]
    para = g.edge_types[PARAGRAPH_EDGE]
    # same sentence: nodes 1 and 2 share paragraph-0 sentence 0
    assert sent[1, 2] and sent[2, 1]
    # same surface across context: the three green-hill mentions are cliqued
    assert ctx[2, 3] and ctx[2, 4] and ctx[3, 4]
    # central (first title mention) connects to everything in its paragraph
    assert para[0, 1] and para[0, 2]
    assert para[3, 4] and para[3, 5]
    assert not g.adjacency.diagonal().any()
    assert (g.adjacency == g.adjacency.T).all()
    assert g.central_nodes == {0, 3}


def test_graph_truncation_keeps_document_order():
    layout = build_context(two_para_example(), [0, 1])
    mentions = recognize_in_context(layout, GAZ)
    g = build_graph(mentions, max_nodes=3)
    assert g.n == 3
    spans = [m.token_span for m in g.nodes]
    assert spans == sorted(spans)
    assert spans == sorted(m.token_span for m in mentions)[:3]


def test_binding_matrix_marks_span_tokens():
    layout = build_context(two_para_example(), [0, 1])
    mentions = recognize_in_context(layout, GAZ)
    b = binding_matrix(mentions, len(layout.tokens))
    assert b.shape == (len(layout.tokens), len(mentions))
    for j, m in enumerate(mentions):
        s, e = m.token_span
        assert b[s:e, j].all()
        assert b[:, j].sum() == e - s


def test_binding_matrix_rejects_bad_span():
    m = recognize_in_context(build_context(two_para_example(), [0, 1]), GAZ)
    with pytest.raises(ValueError):
        binding_matrix(m, 3)


def test_missing_support_flag():
    ex = two_para_example()
    layout = build_context(ex, [0, 1])
    g = build_graph(recognize_in_context(layout, GAZ))
    assert not missing_support_flag(ex, g)
    # with a gazetteer that cannot see paragraph 1's entities the second
    # supporting sentence has no node
    g2 = build_graph(recognize_in_context(layout, [["red", "fox"]]))
    assert missing_support_flag(ex, g2)
    assert missing_support_ratio([ex, ex], [g, g2]) == 0.5


def test_graph_stats_row_fields():
    ex = two_para_example()
    g = build_graph(recognize_in_context(build_context(ex, [0, 1]), GAZ))
    row = graph_stats_row("g", ex, g)
    assert row["n_nodes"] == 6
    assert row["missing_support_flag"] == 0
    assert row["mean_degree"] == round(g.adjacency.sum() / g.n, 4)


@given(st.integers(0, 10 ** 6), st.integers(2, 8))
@settings(max_examples=25, deadline=None)
def test_graph_invariants_random(seed, n_nodes):
    """Adjacency from random mentions: symmetric, hollow, union of types."""
    rng = np.random.default_rng(seed)
    from dfgn.nerlink import EntityMention
    mentions = []
    pos = 0
    for i in range(n_nodes):
        length = int(rng.integers(1, 3))
        mentions.append(
            EntityMention(
                entity_index=i,
                paragraph_index=int(rng.integers(0, 3)),
                sentence_index=int(rng.integers(-1, 2)),
                token_span=(pos, pos + length),
                surface=[WORDS[int(rng.integers(0, 4))]],
            )
        )
        pos += length + int(rng.integers(0, 2))
    g = build_graph(mentions, max_nodes=8)
    assert (g.adjacency == g.adjacency.T).all()
    assert not g.adjacency.diagonal().any()
    union = np.zeros_like(g.adjacency)
    for m in g.edge_types.values():
        union |= m
    assert (g.adjacency == union).all()
