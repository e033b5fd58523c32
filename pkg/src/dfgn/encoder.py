"""Joint query/context encoding and bi-attention.

The question and context are embedded as one sequence separated by a learned
separator token, contextualized with a bidirectional LSTM, then cross-attended
both ways.  The query-side output mirrors the context-side construction with
roles swapped, so both come out at width d2.
"""

from __future__ import annotations

import numpy as np

from . import tensorkit as tk
from .tensorkit import Tensor


class BiAttentionParams:
    """Similarity vector over [c; q; c*q] plus per-side output projections."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, prefix: str):
        s = 1.0 / np.sqrt(d_in)
        self.w_c = Tensor(rng.uniform(-s, s, (d_in, 1)), requires_grad=True)
        self.w_q = Tensor(rng.uniform(-s, s, (d_in, 1)), requires_grad=True)
        self.w_cq = Tensor(rng.uniform(-s, s, (1, d_in)), requires_grad=True)
        p = 1.0 / np.sqrt(4 * d_in)
        self.proj_c = Tensor(rng.uniform(-p, p, (4 * d_in, d_out)), requires_grad=True)
        self.proj_q = Tensor(rng.uniform(-p, p, (4 * d_in, d_out)), requires_grad=True)
        self.prefix = prefix

    def named(self) -> dict[str, Tensor]:
        return {
            f"{self.prefix}.w_c": self.w_c,
            f"{self.prefix}.w_q": self.w_q,
            f"{self.prefix}.w_cq": self.w_cq,
            f"{self.prefix}.proj_c": self.proj_c,
            f"{self.prefix}.proj_q": self.proj_q,
        }


def _similarity(c: Tensor, q: Tensor, params: BiAttentionParams) -> Tensor:
    """S[i, j] = w . [c_i; q_j; c_i * q_j], computed as three rank-1 pieces."""
    part_c = tk.matmul(c, params.w_c)                      # M x 1
    part_q = tk.transpose(tk.matmul(q, params.w_q))        # 1 x L
    part_cq = tk.matmul(tk.mul(c, params.w_cq), tk.transpose(q))  # M x L
    return tk.add(tk.add(part_cq, part_c), part_q)


def _attended_output(x: Tensor, other: Tensor, s: Tensor, proj: Tensor) -> Tensor:
    """One side of BiDAF: attend ``other`` with rows of ``s``, pool the other
    direction through the row-max, and project the fused features."""
    att = tk.softmax(s, axis=1)                 # rows over `other`
    x_hat = tk.matmul(att, other)
    row_max = tk.reduce_max(s, axis=1)          # len(x)
    pooled_w = tk.softmax(tk.reshape(row_max, (1, -1)), axis=1)
    pooled = tk.matmul(pooled_w, x)             # 1 x d
    fused = tk.concat(
        [x, x_hat, tk.mul(x, x_hat), tk.mul(x, pooled)], axis=1
    )
    return tk.matmul(fused, proj)


def bi_attention(q: Tensor, c: Tensor, params: BiAttentionParams) -> tuple[Tensor, Tensor]:
    """Return (Q0: L x d2, C0: M x d2)."""
    if q.shape[1] != c.shape[1]:
        raise tk.ShapeError(f"query width {q.shape} != context width {c.shape}")
    s = _similarity(c, q, params)               # M x L
    c0 = _attended_output(c, q, s, params.proj_c)
    q0 = _attended_output(q, c, tk.transpose(s), params.proj_q)
    return q0, c0


class EncoderModel:
    """Embedding table + BiLSTM contextualizer + bi-attention to d2."""

    def __init__(
        self,
        vocab_size: int,
        d1: int,
        d2: int,
        rng: np.random.Generator,
        max_seq_len: int = 512,
        dropout_lstm: float = 0.3,
    ):
        if d1 % 2 != 0:
            raise ValueError("d1 must be even (two LSTM directions)")
        self.d1 = d1
        self.d2 = d2
        self.max_seq_len = max_seq_len
        self.dropout_lstm = dropout_lstm
        s = 1.0 / np.sqrt(d1)
        self.embedding = Tensor(rng.uniform(-s, s, (vocab_size, d1)), requires_grad=True)
        self.fwd = tk.LSTMParams.create(d1, d1 // 2, rng)
        self.bwd = tk.LSTMParams.create(d1, d1 // 2, rng)
        self.biattn = BiAttentionParams(d1, d2, rng, "encoder.biattn")

    def params(self) -> dict[str, Tensor]:
        out = {"encoder.embedding": self.embedding}
        out.update(self.fwd.named("encoder.lstm_fwd"))
        out.update(self.bwd.named("encoder.lstm_bwd"))
        out.update(self.biattn.named())
        return out

    def encode(
        self,
        question_ids: list[int],
        context_ids: list[int],
        sep_id: int,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> tuple[Tensor, Tensor]:
        """Contextualize [question; SEP; context] jointly, split back to Q, C."""
        L, M = len(question_ids), len(context_ids)
        if L < 1 or M < 1:
            raise tk.ShapeError("question and context must be non-empty")
        total = L + 1 + M
        if total > self.max_seq_len:
            raise tk.ShapeError(f"sequence length {total} exceeds max {self.max_seq_len}")
        ids = list(question_ids) + [sep_id] + list(context_ids)
        emb = tk.gather_rows(self.embedding, ids)
        hidden = tk.bilstm_seq(emb, self.fwd, self.bwd)
        if training and self.dropout_lstm > 0:
            hidden = tk.dropout(hidden, self.dropout_lstm, True, rng)
        q = tk.rows(hidden, 0, L)
        c = tk.rows(hidden, L + 1, total)
        return q, c

    def forward(
        self,
        question_ids: list[int],
        context_ids: list[int],
        sep_id: int,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> tuple[Tensor, Tensor]:
        """Full encoder: joint encoding then bi-attention; returns (Q0, C0)."""
        q, c = self.encode(question_ids, context_ids, sep_id, training, rng)
        return bi_attention(q, c, self.biattn)
