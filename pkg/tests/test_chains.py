"""Reasoning-path scoring, top-k extraction, and ESP metric tests."""

import numpy as np
import pytest

from dfgn.chains import (
    ESPReport,
    ReasoningPath,
    case_hits,
    enumerate_paths,
    hit,
    path_score,
    sentence_surfaces,
    top_k_paths,
)
from dfgn.nerlink import EntityGraph, EntityMention

from oracles import all_walks_ref, path_score_ref


def graph_from(adj, surfaces=None, sentences=None):
    n = adj.shape[0]
    surfaces = surfaces or [[f"e{i}"] for i in range(n)]
    sentences = sentences or [(0, 0)] * n
    nodes = [
        EntityMention(entity_index=i, paragraph_index=sentences[i][0],
                      sentence_index=sentences[i][1], token_span=(i, i + 1),
                      surface=list(surfaces[i]))
        for i in range(n)
    ]
    return EntityGraph(nodes=nodes, adjacency=np.asarray(adj, dtype=bool))


def random_case(seed, n=None, hops=2):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(2, 7))
    adj = rng.random((n, n)) < 0.5
    adj = adj | adj.T
    np.fill_diagonal(adj, False)
    g = graph_from(adj)
    masks = [rng.uniform(0.01, 0.99, n) for _ in range(hops)]
    alphas = []
    for _ in range(hops):
        a = rng.uniform(0, 1, (n, n)) * adj
        s = a.sum(axis=1, keepdims=True)
        s[s == 0] = 1.0
        alphas.append(a / s)
    return g, masks, alphas


@pytest.mark.parametrize("seed", range(25))
def test_enumerate_paths_matches_walk_oracle(seed):
    g, masks, _ = random_case(seed)
    got = enumerate_paths(g, 2)
    assert got == all_walks_ref(g.adjacency, 2)


@pytest.mark.parametrize("seed", range(25))
def test_path_score_matches_oracle(seed):
    g, masks, alphas = random_case(seed)
    for path in enumerate_paths(g, 2)[:30]:
        got = path_score(path, masks, alphas, g)
        assert np.isclose(got, path_score_ref(path, masks, alphas), atol=1e-9)


def test_path_score_validates_edges_and_length():
    g = graph_from(np.array([[0, 1], [1, 0]]))
    masks = [np.array([0.5, 0.5])] * 2
    alphas = [np.full((2, 2), 0.5)] * 2
    with pytest.raises(ValueError):
        path_score([0, 1], masks, alphas, g)  # wrong length for 2 hops
    with pytest.raises(ValueError):
        path_score([0, 0, 1], masks, alphas, g)  # 0-0 is not an edge


@pytest.mark.parametrize("seed", range(25))
def test_top_k_is_sorted_prefix_of_full_ranking(seed):
    g, masks, alphas = random_case(seed)
    every = [
        (path_score_ref(p, masks, alphas), p) for p in all_walks_ref(g.adjacency, 2)
    ]
    every.sort(key=lambda t: (-t[0], t[1]))
    for k in (1, 3, 10):
        got = top_k_paths(g, masks, alphas, k)
        assert len(got) == min(k, len(every))
        for rp, (score, p) in zip(got, every):
            assert rp.nodes == p
            assert np.isclose(rp.score, score, atol=1e-9)


def test_top_k_rejects_bad_k():
    g, masks, alphas = random_case(0)
    with pytest.raises(ValueError):
        top_k_paths(g, masks, alphas, 0)


def test_hit_is_entity_surface_level():
    # two mentions of "b": one in the supporting sentence, one elsewhere.
    adj = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]])
    g = graph_from(
        adj,
        surfaces=[["a"], ["b"], ["b"]],
        sentences=[(0, 0), (0, 0), (1, 1)],
    )
    path = ReasoningPath(nodes=[0, 1], score=1.0)
    # the path only visits node 1, but surface "b" occurs in sentence (1, 1)
    assert hit(path, (1, 1), g)
    assert hit(path, (0, 0), g)
    assert not hit(ReasoningPath(nodes=[2], score=1.0), (2, 0), g)  # empty sentence


def test_sentence_surfaces():
    g = graph_from(
        np.zeros((3, 3)),
        surfaces=[["a"], ["b", "c"], ["a"]],
        sentences=[(0, 0), (0, 0), (1, 0)],
    )
    assert sentence_surfaces(g, (0, 0)) == {"a", "b c"}
    assert sentence_surfaces(g, (9, 9)) == set()


def test_case_hits_counts_covered_sentences():
    adj = np.array([[0, 1], [1, 0]])
    g = graph_from(adj, surfaces=[["a"], ["b"]], sentences=[(0, 0), (1, 0)])
    paths = [ReasoningPath(nodes=[0, 1], score=1.0)]
    assert case_hits(paths, [(0, 0), (1, 0), (2, 0)], g) == 2


@pytest.mark.parametrize("seed", range(10))
def test_esp_em_le_recall_and_monotone_in_k(seed):
    """Structural invariant on any scored case: EM <= Recall, both monotone."""
    g, masks, alphas = random_case(seed, n=5)
    sentences = [(0, 0)]
    ks = [1, 2, 5, 10]
    ems, rcs = [], []
    all_paths = top_k_paths(g, masks, alphas, max(ks))
    m = len(sentences)
    for k in ks:
        h = case_hits(all_paths[:k], sentences, g)
        ems.append(float(h == m))
        rcs.append(h / m)
    for em, rc in zip(ems, rcs):
        assert em <= rc + 1e-12
    assert ems == sorted(ems)
    assert rcs == sorted(rcs)


def test_espreport_defaults():
    r = ESPReport(ks=[1, 2])
    assert r.esp_em == {} and r.n_good_cases == 0
