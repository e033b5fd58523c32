"""Paragraph relevance scoring and context assembly.

A small pair encoder ([question; SEP; paragraph] through one LSTM, last
hidden state to a sigmoid logit) trained against supporting-fact-derived
binary labels.  Paragraphs scoring above the threshold are concatenated, in
original order, into the reasoning context.
"""

from __future__ import annotations

import numpy as np

from . import tensorkit as tk
from .config import RunConfig
from .data import ContextLayout, QAExample, Vocabulary, build_context
from .tensorkit import Tensor


class SelectorModel:
    def __init__(self, vocab_size: int, dim: int, rng: np.random.Generator):
        s = 1.0 / np.sqrt(dim)
        self.dim = dim
        self.embedding = Tensor(rng.uniform(-s, s, (vocab_size, dim)), requires_grad=True)
        self.lstm = tk.LSTMParams.create(dim, dim, rng)
        self.head_w = Tensor(np.zeros((dim, 1)), requires_grad=True)
        self.head_b = Tensor(np.zeros((1, 1)), requires_grad=True)

    def params(self) -> dict[str, Tensor]:
        out = {
            "selector.embedding": self.embedding,
            "selector.head_w": self.head_w,
            "selector.head_b": self.head_b,
        }
        out.update(self.lstm.named("selector.lstm"))
        return out

    def score(self, question_ids: list[int], para_ids: list[int], sep_id: int) -> Tensor:
        """Relevance in (0, 1); a zero-weight head scores exactly 0.5."""
        if not question_ids:
            raise tk.ShapeError("selector needs a non-empty question")
        ids = list(question_ids) + [sep_id] + list(para_ids)
        emb = tk.gather_rows(self.embedding, ids)
        hidden = tk.lstm_seq(emb, self.lstm)
        last = tk.rows(hidden, len(ids) - 1, len(ids))
        logit = tk.add(tk.matmul(last, self.head_w), self.head_b)
        return tk.sigmoid(logit)


def paragraph_labels(example: QAExample) -> list[int]:
    """1 for every paragraph holding at least one supporting sentence."""
    supported = {pi for pi, _ in example.supporting_facts}
    return [1 if i in supported else 0 for i in range(len(example.paragraphs))]


def score_paragraphs(
    model: SelectorModel, example: QAExample, vocab: Vocabulary, sep_id: int
) -> list[float]:
    q_ids = vocab.encode(example.question)
    return [
        model.score(q_ids, vocab.encode(p.all_tokens()), sep_id).item()
        for p in example.paragraphs
    ]


def select_context(
    example: QAExample, scores: list[float], eta: float = 0.1
) -> tuple[list[int], ContextLayout]:
    """Keep paragraphs with score > eta in original order; never go empty."""
    if len(scores) != len(example.paragraphs):
        raise ValueError("one score per paragraph required")
    kept = [i for i, s in enumerate(scores) if s > eta]
    if not kept:
        kept = [int(np.argmax(scores))]
    return kept, build_context(example, kept)


def train_selector(
    examples: list[QAExample],
    vocab: Vocabulary,
    config: RunConfig,
    rng: np.random.Generator,
) -> SelectorModel:
    if not examples:
        raise ValueError("cannot train the selector on an empty dataset")
    sep_id = vocab.encode(["<sep>"])[0]
    model = SelectorModel(len(vocab), config.selector_dim, rng)
    state = tk.AdamState(lr=config.selector_lr)
    params = model.params()
    for _ in range(config.selector_epochs):
        order = rng.permutation(len(examples))
        for ei in order:
            ex = examples[int(ei)]
            labels = paragraph_labels(ex)
            q_ids = vocab.encode(ex.question)
            for p, label in zip(ex.paragraphs, labels):
                with tk.Tape() as tape:
                    prob = model.score(q_ids, vocab.encode(p.all_tokens()), sep_id)
                    loss = tk.bce(prob, np.array([float(label)]))
                    tape.backward(loss)
                tk.adam_step(params, state)
    return model


def selector_metrics(
    model: SelectorModel,
    examples: list[QAExample],
    vocab: Vocabulary,
    eta: float,
) -> dict[str, float]:
    """Precision/recall of supporting paragraphs at the selection threshold."""
    sep_id = vocab.encode(["<sep>"])[0]
    tp = fp = fn = 0
    for ex in examples:
        scores = score_paragraphs(model, ex, vocab, sep_id)
        kept, _ = select_context(ex, scores, eta)
        gold = {pi for pi, _ in ex.supporting_facts}
        kept_set = set(kept)
        tp += len(gold & kept_set)
        fp += len(kept_set - gold)
        fn += len(gold - kept_set)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return {"precision": precision, "recall": recall}
