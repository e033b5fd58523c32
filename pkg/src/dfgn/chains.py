"""Reasoning-chain extraction from stored masks/attentions, and ESP scoring.

A path visits hops+1 mention nodes along graph edges; its score is the
product of each hop's soft mask at the departing node and the attention the
departing node assigned to the next one.  A supporting sentence counts as hit
when the path visits any entity surface that occurs in that sentence (entity
level, not mention level: propagated information covers every mention of the
same surface).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nerlink import EntityGraph
from .predictor import DFGNModel, PreparedExample


@dataclass
class ReasoningPath:
    nodes: list[int]
    score: float

    def surfaces(self, graph: EntityGraph) -> list[str]:
        return [" ".join(graph.nodes[i].surface) for i in self.nodes]


@dataclass
class ESPReport:
    ks: list[int]
    esp_em: dict[int, float] = field(default_factory=dict)
    esp_recall: dict[int, float] = field(default_factory=dict)
    n_good_cases: int = 0
    missing_support_ratio: float = 0.0
    avg_path_count: float = 0.0


def path_score(path: list[int], masks: list[np.ndarray], alphas: list[np.ndarray], graph: EntityGraph) -> float:
    """Product of per-hop mask and attention factors along the path."""
    hops = len(masks)
    if len(path) != hops + 1:
        raise ValueError(f"path length {len(path)} does not match {hops} hops")
    score = 1.0
    for i in range(hops):
        a, b = path[i], path[i + 1]
        if not graph.adjacency[a, b]:
            raise ValueError(f"nodes {a} and {b} are not adjacent")
        score *= float(masks[i][a]) * float(alphas[i][a, b])
    return score


def enumerate_paths(graph: EntityGraph, hops: int) -> list[list[int]]:
    """All walks of hops+1 nodes along edges; revisits allowed."""
    paths = [[i] for i in range(graph.n)]
    for _ in range(hops):
        nxt = []
        for p in paths:
            for j in graph.neighbors(p[-1]):
                nxt.append(p + [int(j)])
        paths = nxt
    return paths


def top_k_paths(
    graph: EntityGraph,
    masks: list[np.ndarray],
    alphas: list[np.ndarray],
    k: int,
) -> list[ReasoningPath]:
    """Exhaustively score every walk; ties break lexicographically by nodes."""
    if k < 1:
        raise ValueError("k must be >= 1")
    scored = [
        ReasoningPath(nodes=p, score=path_score(p, masks, alphas, graph))
        for p in enumerate_paths(graph, len(masks))
    ]
    scored.sort(key=lambda r: (-r.score, r.nodes))
    return scored[:k]


def sentence_surfaces(graph: EntityGraph, sentence: tuple[int, int]) -> set[str]:
    return {
        " ".join(node.surface)
        for node in graph.nodes
        if (node.paragraph_index, node.sentence_index) == sentence
    }


def hit(path: ReasoningPath, sentence: tuple[int, int], graph: EntityGraph) -> bool:
    """Entity-level hit: the path visits a surface occurring in the sentence."""
    targets = sentence_surfaces(graph, sentence)
    if not targets:
        return False
    return any(s in targets for s in path.surfaces(graph))


def case_hits(paths: list[ReasoningPath], sentences: list[tuple[int, int]], graph: EntityGraph) -> int:
    return sum(1 for sent in sentences if any(hit(p, sent, graph) for p in paths))


def model_masks_alphas(
    model: DFGNModel, prep: PreparedExample, sep_id: int
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    _, masks, alphas = model.forward(prep, sep_id, training=False)
    n = prep.graph.n
    m_arrays = [
        m.data.reshape(-1) if m is not None else np.zeros(n) for m in masks
    ]
    a_arrays = [
        a.data if a is not None else np.zeros((n, n)) for a in alphas
    ]
    return m_arrays, a_arrays


def esp_scores(
    model: DFGNModel,
    prepared: list[PreparedExample],
    ks: list[int],
    sep_id: int,
) -> ESPReport:
    """ESP EM / Recall over good cases (no missing supporting entity)."""
    ks = sorted(ks)
    report = ESPReport(ks=ks)
    if not prepared:
        return report
    flags = [p.missing_support for p in prepared]
    report.missing_support_ratio = float(np.mean(flags))
    good = [p for p, f in zip(prepared, flags) if not f]
    report.n_good_cases = len(good)
    if not good:
        return report
    em_acc = {k: [] for k in ks}
    rc_acc = {k: [] for k in ks}
    path_counts = []
    for prep in good:
        masks, alphas = model_masks_alphas(model, prep, sep_id)
        top = top_k_paths(prep.graph, masks, alphas, max(ks)) if prep.graph.n else []
        path_counts.append(len(enumerate_paths(prep.graph, len(masks))) if prep.graph.n else 0)
        sentences = sorted(prep.example.supporting_facts)
        m = len(sentences)
        for k in ks:
            h = case_hits(top[:k], sentences, prep.graph)
            em_acc[k].append(float(h == m))
            rc_acc[k].append(h / m if m else 0.0)
    for k in ks:
        report.esp_em[k] = float(np.mean(em_acc[k]))
        report.esp_recall[k] = float(np.mean(rc_acc[k]))
    report.avg_path_count = float(np.mean(path_counts))
    return report


def top1_matches_gold(
    model: DFGNModel, prep: PreparedExample, sep_id: int
) -> bool:
    """Whether the best-scored path's surfaces equal the labeled chain."""
    if prep.example.gold_chain is None or prep.graph.n == 0:
        return False
    masks, alphas = model_masks_alphas(model, prep, sep_id)
    top = top_k_paths(prep.graph, masks, alphas, 1)
    if not top:
        return False
    return top[0].surfaces(prep.graph) == [s.lower() for s in prep.example.gold_chain]
