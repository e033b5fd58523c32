"""Fusion block: token-to-entity pooling, soft-masked dynamic graph
attention, query update, and entity-to-token injection, composable for T hops.

The graph attention aggregates transposed: node i sums the shares its
neighbors assigned *to* it (column i of the attention matrix), which differs
from the usual row-wise GAT readout and is asserted by a regression test.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import tensorkit as tk
from .encoder import BiAttentionParams, bi_attention
from .nerlink import EntityGraph
from .tensorkit import Tensor


class FusionBlockParams:
    """Per-hop weights; blocks are untied across hops."""

    def __init__(self, d2: int, rng: np.random.Generator, prefix: str):
        s = 1.0 / np.sqrt(d2)
        self.v = Tensor(rng.uniform(-s, s, (d2, 2 * d2)), requires_grad=True)
        self.u = Tensor(rng.uniform(-s, s, (d2, 2 * d2)), requires_grad=True)
        self.b = Tensor(np.zeros((1, d2)), requires_grad=True)
        self.w = Tensor(rng.uniform(-s, s, (2 * d2, 1)), requires_grad=True)
        self.query_attn = BiAttentionParams(d2, d2, rng, f"{prefix}.query_attn")
        self.graph2doc = tk.LSTMParams.create(2 * d2, d2, rng)
        self.prefix = prefix
        self.d2 = d2

    def named(self) -> dict[str, Tensor]:
        out = {
            f"{self.prefix}.v": self.v,
            f"{self.prefix}.u": self.u,
            f"{self.prefix}.b": self.b,
            f"{self.prefix}.w": self.w,
        }
        out.update(self.query_attn.named())
        out.update(self.graph2doc.named(f"{self.prefix}.graph2doc"))
        return out


@dataclass
class FusionState:
    c: Tensor                      # M x d2
    q: Tensor                      # L x d2
    e: Optional[Tensor] = None     # N x 2d2 pooled entity embeddings
    m: Optional[Tensor] = None     # 1 x N soft mask
    alpha: Optional[Tensor] = None  # N x N attention
    e_out: Optional[Tensor] = None  # N x d2 propagated embeddings


def tok2ent(c: Tensor, spans: list[tuple[int, int]]) -> Tensor:
    """Mean-max pool each entity's token rows into one N x 2d2 matrix."""
    if not spans:
        raise tk.ShapeError("tok2ent needs at least one entity span")
    rows_out = []
    for s, e in spans:
        if e <= s:
            raise tk.ShapeError(f"entity with empty token span [{s}, {e})")
        seg = tk.rows(c, s, e)
        mean = tk.reshape(tk.pool(seg, "mean", axis=0), (1, -1))
        mx = tk.reshape(tk.pool(seg, "max", axis=0), (1, -1))
        rows_out.append(tk.concat([mean, mx], axis=1))
    return tk.concat(rows_out, axis=0)


def soft_mask(q: Tensor, e: Tensor, v: Tensor) -> Tensor:
    """Sigmoid of the scaled bilinear query/entity scores; shape 1 x N."""
    d2 = q.shape[1]
    q_bar = tk.reshape(tk.reduce_mean(q, axis=0), (1, -1))
    gamma = tk.scale(tk.matmul(tk.matmul(q_bar, v), tk.transpose(e)), 1.0 / np.sqrt(d2))
    return tk.sigmoid(gamma)


def apply_mask(e: Tensor, m: Tensor) -> Tensor:
    """Row-wise gating: row i of the result is m_i times row i of e."""
    return tk.mul(e, tk.transpose(m))


def graph_attention(
    e_til: Tensor,
    graph: EntityGraph,
    u: Tensor,
    b: Tensor,
    w: Tensor,
    dropout_gat: float = 0.0,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, Tensor]:
    """Neighbor-restricted attention with transposed aggregation.

    Returns (alpha: N x N with zero rows for isolated nodes, e_out: N x d2).
    """
    d2 = u.shape[0]
    h = tk.add(tk.matmul(e_til, tk.transpose(u)), b)
    if training and dropout_gat > 0:
        h = tk.dropout(h, dropout_gat, True, rng)
    w_self = tk.rows(w, 0, d2)
    w_other = tk.rows(w, d2, 2 * d2)
    scores_self = tk.matmul(h, w_self)           # N x 1
    scores_other = tk.matmul(h, w_other)         # N x 1
    beta = tk.leaky_relu(tk.add(scores_self, tk.transpose(scores_other)))
    alpha = tk.softmax(beta, axis=1, mask=graph.adjacency, _allow_empty=True)
    e_out = tk.relu(tk.matmul(tk.transpose(alpha), h))
    return alpha, e_out


def update_query(q: Tensor, e_out: Tensor, params: BiAttentionParams) -> Tensor:
    if e_out.shape[0] == 0:
        raise tk.ShapeError("cannot update query against an empty entity set")
    q_next, _ = bi_attention(q, e_out, params)
    return q_next


def graph2doc(c_prev: Tensor, binding: np.ndarray, e_out: Tensor, lstm: tk.LSTMParams) -> Tensor:
    """Inject propagated entity rows back into token space and re-sequence.

    Tokens inside several entity spans receive the sum of those rows, which is
    what the incidence-matrix product gives naturally.
    """
    b_const = Tensor(binding.astype(float))
    injected = tk.matmul(b_const, e_out)
    return tk.lstm_seq(tk.concat([c_prev, injected], axis=1), lstm)


def fusion_step(
    state: FusionState,
    graph: EntityGraph,
    binding: np.ndarray,
    params: FusionBlockParams,
    dropout_gat: float = 0.0,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> FusionState:
    spans = [node.token_span for node in graph.nodes]
    if spans:
        e = tok2ent(state.c, spans)
        m = soft_mask(state.q, e, params.v)
        e_til = apply_mask(e, m)
        alpha, e_out = graph_attention(
            e_til, graph, params.u, params.b, params.w, dropout_gat, training, rng
        )
        q_next = update_query(state.q, e_out, params.query_attn)
    else:
        # no recognized entities: nothing to propagate, query passes through
        e = m = alpha = None
        e_out = Tensor(np.zeros((0, params.d2)))
        q_next = state.q
    injected = (
        graph2doc(state.c, binding, e_out, params.graph2doc)
        if spans
        else tk.lstm_seq(
            tk.concat([state.c, Tensor(np.zeros((state.c.shape[0], params.d2)))], axis=1),
            params.graph2doc,
        )
    )
    return FusionState(c=injected, q=q_next, e=e, m=m, alpha=alpha, e_out=e_out)


def run_hops(
    c0: Tensor,
    q0: Tensor,
    graph: EntityGraph,
    binding: np.ndarray,
    blocks: list[FusionBlockParams],
    dropout_gat: float = 0.0,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, Tensor, list[Tensor], list[Tensor]]:
    """Compose T fusion blocks; keep per-hop masks and attentions."""
    if not blocks:
        raise tk.ShapeError("run_hops needs at least one block")
    state = FusionState(c=c0, q=q0)
    masks, alphas = [], []
    for params in blocks:
        state = fusion_step(state, graph, binding, params, dropout_gat, training, rng)
        masks.append(state.m)
        alphas.append(state.alpha)
    return state.c, state.q, masks, alphas
