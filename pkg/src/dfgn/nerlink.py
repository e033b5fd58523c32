"""Gazetteer entity recognition and entity-graph construction.

Nodes are mention occurrences, not canonical entities; edges follow three
rules: same sentence, same surface anywhere in context, and central (title)
entity to everything in its paragraph.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .data import ContextLayout, QAExample

SENTENCE_EDGE = "sentence"
CONTEXT_EDGE = "context"
PARAGRAPH_EDGE = "paragraph"


@dataclass
class EntityMention:
    entity_index: int
    paragraph_index: int
    sentence_index: int  # -1 for title mentions
    token_span: tuple[int, int]  # [start, end) in the concatenated context
    surface: list[str]


@dataclass
class EntityGraph:
    nodes: list[EntityMention]
    adjacency: np.ndarray  # N x N bool, symmetric, no self loops
    edge_types: dict[str, np.ndarray] = field(default_factory=dict)
    central_nodes: set[int] = field(default_factory=set)

    @property
    def n(self) -> int:
        return len(self.nodes)

    def neighbors(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[i])

    def n_edges(self, kind: Optional[str] = None) -> int:
        m = self.adjacency if kind is None else self.edge_types[kind]
        return int(m.sum()) // 2

    def mean_degree(self) -> float:
        if self.n == 0:
            return 0.0
        return float(self.adjacency.sum()) / self.n


def recognize(context: Sequence[str], gazetteer: Iterable[Sequence[str]]) -> list[tuple[int, int, list[str]]]:
    """Left-to-right longest-match over one token stream, case-insensitive.

    Returns non-overlapping (start, end, surface) triples.
    """
    surfaces = {}
    for surf in gazetteer:
        norm = tuple(t.lower() for t in surf)
        if not norm:
            raise ValueError("gazetteer surface must be a non-empty token list")
        surfaces[norm] = None
    if not surfaces:
        return []
    max_len = max(len(s) for s in surfaces)
    tokens = [t.lower() for t in context]
    out = []
    i = 0
    n = len(tokens)
    while i < n:
        best = 0
        for length in range(min(max_len, n - i), 0, -1):
            if tuple(tokens[i:i + length]) in surfaces:
                best = length
                break
        if best:
            out.append((i, i + best, tokens[i:i + best]))
            i += best
        else:
            i += 1
    return out


def recognize_in_context(layout: ContextLayout, gazetteer: Iterable[Sequence[str]]) -> list[EntityMention]:
    """Run the matcher per title/sentence segment so matches never straddle
    segment boundaries, then stitch the global mention list in document order."""
    segments: list[tuple[int, int, int, int]] = []  # (para, sent, start, end)
    for p in layout.kept:
        s, e = layout.title_spans[p]
        segments.append((p, -1, s, e))
    for p, si, s, e in layout.sentence_spans:
        segments.append((p, si, s, e))
    segments.sort(key=lambda seg: seg[2])
    mentions = []
    for p, si, s, e in segments:
        for a, b, surf in recognize(layout.tokens[s:e], gazetteer):
            mentions.append(
                EntityMention(
                    entity_index=-1,
                    paragraph_index=p,
                    sentence_index=si,
                    token_span=(s + a, s + b),
                    surface=surf,
                )
            )
    mentions.sort(key=lambda m: m.token_span)
    for i, m in enumerate(mentions):
        m.entity_index = i
    return mentions


def build_graph(mentions: list[EntityMention], max_nodes: int = 40) -> EntityGraph:
    """Apply the three edge rules over at most ``max_nodes`` mentions.

    Truncation keeps document order.  The central node of a paragraph is its
    first title mention; a titleless-match paragraph simply contributes no
    paragraph-level edges.
    """
    nodes = [
        EntityMention(i, m.paragraph_index, m.sentence_index, m.token_span, list(m.surface))
        for i, m in enumerate(sorted(mentions, key=lambda m: m.token_span)[:max_nodes])
    ]
    n = len(nodes)
    sent = np.zeros((n, n), dtype=bool)
    ctx = np.zeros((n, n), dtype=bool)
    para = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(i + 1, n):
            a, b = nodes[i], nodes[j]
            if (a.paragraph_index, a.sentence_index) == (b.paragraph_index, b.sentence_index):
                sent[i, j] = sent[j, i] = True
            if a.surface == b.surface:
                ctx[i, j] = ctx[j, i] = True
    central: dict[int, int] = {}
    for node in nodes:
        if node.sentence_index == -1 and node.paragraph_index not in central:
            central[node.paragraph_index] = node.entity_index
    for p, ci in central.items():
        for node in nodes:
            if node.paragraph_index == p and node.entity_index != ci:
                para[ci, node.entity_index] = para[node.entity_index, ci] = True
    adjacency = sent | ctx | para
    np.fill_diagonal(adjacency, False)
    for m in (sent, ctx, para):
        np.fill_diagonal(m, False)
    return EntityGraph(
        nodes=nodes,
        adjacency=adjacency,
        edge_types={SENTENCE_EDGE: sent, CONTEXT_EDGE: ctx, PARAGRAPH_EDGE: para},
        central_nodes=set(central.values()),
    )


def binding_matrix(mentions: list[EntityMention], context_length: int) -> np.ndarray:
    """Boolean context_length x N incidence matrix of token-in-span."""
    b = np.zeros((context_length, len(mentions)), dtype=bool)
    for j, m in enumerate(mentions):
        s, e = m.token_span
        if not 0 <= s < e <= context_length:
            raise ValueError(f"mention span {m.token_span} out of context of length {context_length}")
        b[s:e, j] = True
    return b


def missing_support_flag(example: QAExample, graph: EntityGraph) -> bool:
    """True when some supporting sentence contains no recognized node."""
    covered = {(m.paragraph_index, m.sentence_index) for m in graph.nodes}
    return any(sf not in covered for sf in example.supporting_facts)


def missing_support_ratio(examples: Sequence[QAExample], graphs: Sequence[EntityGraph]) -> float:
    if len(examples) != len(graphs):
        raise ValueError("one graph per example required")
    if not examples:
        return 0.0
    flags = [missing_support_flag(ex, g) for ex, g in zip(examples, graphs)]
    return sum(flags) / len(flags)


def graph_stats_row(example_id: str, example: QAExample, graph: EntityGraph) -> dict:
    return {
        "example_id": example_id,
        "n_nodes": graph.n,
        "n_edges_sentence": graph.n_edges(SENTENCE_EDGE),
        "n_edges_context": graph.n_edges(CONTEXT_EDGE),
        "n_edges_paragraph": graph.n_edges(PARAGRAPH_EDGE),
        "mean_degree": round(graph.mean_degree(), 4),
        "missing_support_flag": int(missing_support_flag(example, graph)),
    }
