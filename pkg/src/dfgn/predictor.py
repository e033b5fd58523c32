"""Cascaded output heads, weak supervision, joint loss, training, metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import tensorkit as tk
from .config import RunConfig
from .data import (
    SEP_TOKEN,
    Answer,
    ContextLayout,
    QAExample,
    Vocabulary,
    build_context,
)
from .encoder import EncoderModel
from .fusion import FusionBlockParams, run_hops
from .nerlink import (
    EntityGraph,
    binding_matrix,
    build_graph,
    missing_support_flag,
    recognize_in_context,
)
from .selector import (
    SelectorModel,
    score_paragraphs,
    select_context,
    train_selector,
)
from .tensorkit import Tensor

TYPE_SPAN, TYPE_YES, TYPE_NO = 0, 1, 2
_TYPE_NAMES = {TYPE_SPAN: "span", TYPE_YES: "yes", TYPE_NO: "no"}


# ---------------------------------------------------------------------------
# heads


class PredictionHeads:
    """Four stacked LSTM heads wired as a cascade: support feeds start, start
    feeds end, end feeds the answer-type head."""

    def __init__(self, d2: int, rng: np.random.Generator):
        self.f0 = tk.LSTMParams.create(d2, d2, rng)
        self.f1 = tk.LSTMParams.create(2 * d2, d2, rng)
        self.f2 = tk.LSTMParams.create(3 * d2, d2, rng)
        self.f3 = tk.LSTMParams.create(3 * d2, d2, rng)
        s = 1.0 / np.sqrt(d2)
        self.proj_sup = Tensor(rng.uniform(-s, s, (d2, 1)), requires_grad=True)
        self.proj_start = Tensor(rng.uniform(-s, s, (d2, 1)), requires_grad=True)
        self.proj_end = Tensor(rng.uniform(-s, s, (d2, 1)), requires_grad=True)
        self.proj_type = Tensor(rng.uniform(-s, s, (d2, 3)), requires_grad=True)
        self.bias_type = Tensor(np.zeros((1, 3)), requires_grad=True)

    def named(self) -> dict[str, Tensor]:
        out = {}
        for name, lstm in (("f0", self.f0), ("f1", self.f1), ("f2", self.f2), ("f3", self.f3)):
            out.update(lstm.named(f"heads.{name}"))
        out.update(
            {
                "heads.proj_sup": self.proj_sup,
                "heads.proj_start": self.proj_start,
                "heads.proj_end": self.proj_end,
                "heads.proj_type": self.proj_type,
                "heads.bias_type": self.bias_type,
            }
        )
        return out


@dataclass
class ModelOutputs:
    sentences: list[tuple[int, int]]       # (paragraph, sentence) per logit row
    sup_logits: Tensor                     # S x 1
    start_logits: Tensor                   # M x 1
    end_logits: Tensor                     # M x 1
    type_logits: Tensor                    # 1 x 3


def predict(c_t: Tensor, layout: ContextLayout, heads: PredictionHeads) -> ModelOutputs:
    """Run the cascade over the final context representation."""
    if c_t.shape[0] == 0:
        raise tk.ShapeError("empty context")
    o_sup = tk.lstm_seq(c_t, heads.f0)
    sup_tok = tk.matmul(o_sup, heads.proj_sup)
    o_start = tk.lstm_seq(tk.concat([c_t, o_sup], axis=1), heads.f1)
    start_logits = tk.matmul(o_start, heads.proj_start)
    o_end = tk.lstm_seq(tk.concat([c_t, o_sup, o_start], axis=1), heads.f2)
    end_logits = tk.matmul(o_end, heads.proj_end)
    o_type = tk.lstm_seq(tk.concat([c_t, o_sup, o_end], axis=1), heads.f3)
    pooled = tk.reshape(tk.reduce_mean(o_type, axis=0), (1, -1))
    type_logits = tk.add(tk.matmul(pooled, heads.proj_type), heads.bias_type)

    sentences = []
    sent_logits = []
    for p, si, s, e in layout.sentence_spans:
        sentences.append((p, si))
        sent_logits.append(tk.reduce_mean(tk.rows(sup_tok, s, e), axis=0))
    sup_logits = tk.reshape(tk.concat([tk.reshape(t, (1, 1)) for t in sent_logits], axis=0), (-1, 1))
    return ModelOutputs(sentences, sup_logits, start_logits, end_logits, type_logits)


def decode_answer(
    start_logits: np.ndarray,
    end_logits: np.ndarray,
    type_logits: np.ndarray,
    layout: ContextLayout,
    max_span: int = 15,
) -> Answer:
    """Best span under start+end with ties to the smallest (i, j); yes/no
    short-circuits on the type head."""
    t = int(np.argmax(type_logits.reshape(-1)))
    if t == TYPE_YES:
        return Answer(type="yes")
    if t == TYPE_NO:
        return Answer(type="no")
    start = start_logits.reshape(-1)
    end = end_logits.reshape(-1)
    m = len(start)
    best_i = best_j = 0
    best = -np.inf
    for i in range(m):
        for j in range(i, min(i + max_span, m)):
            v = start[i] + end[j]
            if v > best:
                best, best_i, best_j = v, i, j
    return Answer(type="span", text=" ".join(layout.tokens[best_i:best_j + 1]))


# ---------------------------------------------------------------------------
# weak supervision


@dataclass
class HeuristicMasks:
    start: Optional[np.ndarray]           # bool N
    bfs: Optional[list[np.ndarray]]       # per hop, bool N
    skip_weak: bool = False


def _is_subsequence(surface: list[str], question: list[str]) -> bool:
    n = len(surface)
    q = [t.lower() for t in question]
    return any(q[i:i + n] == surface for i in range(len(q) - n + 1))


def bfs_masks(graph: EntityGraph, question: list[str], hops: int) -> HeuristicMasks:
    """Start nodes come from question mentions; later hops are pure BFS
    frontiers (distance exactly t-1 from the start set)."""
    n = graph.n
    start = np.array([_is_subsequence(node.surface, question) for node in graph.nodes], dtype=bool)
    if n == 0 or not start.any():
        return HeuristicMasks(start=None, bfs=None, skip_weak=True)
    levels = [start]
    visited = start.copy()
    for _ in range(hops - 1):
        frontier = np.zeros(n, dtype=bool)
        for i in np.flatnonzero(levels[-1]):
            frontier |= graph.adjacency[i]
        frontier &= ~visited
        visited |= frontier
        levels.append(frontier)
    return HeuristicMasks(start=start, bfs=levels, skip_weak=False)


# ---------------------------------------------------------------------------
# prepared examples and the full model


@dataclass
class PreparedExample:
    example: QAExample
    layout: ContextLayout
    graph: EntityGraph
    binding: np.ndarray
    question_ids: list[int]
    context_ids: list[int]
    sup_targets: np.ndarray               # float S, aligned with layout sentences
    answer_type: int
    span_start: Optional[int]
    span_end: Optional[int]
    heuristics: HeuristicMasks
    missing_support: bool = False


def find_span(tokens: list[str], span: list[str]) -> Optional[tuple[int, int]]:
    """First occurrence of ``span`` in ``tokens``; [start, end] inclusive."""
    n = len(span)
    for i in range(len(tokens) - n + 1):
        if tokens[i:i + n] == span:
            return (i, i + n - 1)
    return None


def prepare_example(
    example: QAExample,
    layout: ContextLayout,
    gazetteer: list[list[str]],
    vocab: Vocabulary,
    config: RunConfig,
) -> PreparedExample:
    mentions = recognize_in_context(layout, gazetteer)
    graph = build_graph(mentions, config.max_nodes)
    binding = binding_matrix(graph.nodes, len(layout.tokens))
    sup_targets = np.array(
        [float((p, si) in example.supporting_facts) for p, si, _, _ in layout.sentence_spans]
    )
    if example.answer.type == "span":
        answer_type = TYPE_SPAN
        span = find_span(layout.tokens, example.answer.text.lower().split())
    else:
        answer_type = TYPE_YES if example.answer.type == "yes" else TYPE_NO
        span = None
    return PreparedExample(
        example=example,
        layout=layout,
        graph=graph,
        binding=binding,
        question_ids=vocab.encode(example.question),
        context_ids=vocab.encode(layout.tokens),
        sup_targets=sup_targets,
        answer_type=answer_type,
        span_start=span[0] if span else None,
        span_end=span[1] if span else None,
        heuristics=bfs_masks(graph, example.question, config.hops),
        missing_support=missing_support_flag(example, graph),
    )


class DFGNModel:
    """Encoder, T fusion blocks, and the prediction cascade."""

    def __init__(self, vocab_size: int, config: RunConfig, rng: np.random.Generator):
        self.config = config
        self.encoder = EncoderModel(
            vocab_size,
            config.d1,
            config.d2,
            rng,
            max_seq_len=config.max_seq_len,
            dropout_lstm=config.dropout_lstm,
        )
        self.blocks = [
            FusionBlockParams(config.d2, rng, f"fusion.block{t}") for t in range(config.hops)
        ]
        self.heads = PredictionHeads(config.d2, rng)

    def params(self) -> dict[str, Tensor]:
        out = self.encoder.params()
        for block in self.blocks:
            out.update(block.named())
        out.update(self.heads.named())
        return out

    def forward(
        self,
        prep: PreparedExample,
        sep_id: int,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> tuple[ModelOutputs, list, list]:
        q0, c0 = self.encoder.forward(
            prep.question_ids, prep.context_ids, sep_id, training, rng
        )
        c_t, _, masks, alphas = run_hops(
            c0,
            q0,
            prep.graph,
            prep.binding,
            self.blocks,
            dropout_gat=self.config.dropout_gat,
            training=training,
            rng=rng,
        )
        return predict(c_t, prep.layout, self.heads), masks, alphas


# ---------------------------------------------------------------------------
# loss


def joint_loss(
    outputs: ModelOutputs,
    prep: PreparedExample,
    masks: list[Optional[Tensor]],
    config: RunConfig,
) -> Tensor:
    """Weighted sum of span, support, type, and weak-supervision terms.

    Yes/no answers contribute no span terms; the mask term drops out when
    the start mask is undetectable or supervision is disabled.
    """
    terms = []
    if prep.answer_type == TYPE_SPAN and prep.span_start is not None:
        terms.append(tk.ce_over_positions(outputs.start_logits, prep.span_start))
        terms.append(tk.ce_over_positions(outputs.end_logits, prep.span_end))
    if config.lambda_s > 0 and len(outputs.sentences) > 0:
        sup_probs = tk.sigmoid(outputs.sup_logits)
        terms.append(tk.scale(tk.bce(sup_probs, prep.sup_targets), config.lambda_s))
    if config.lambda_t > 0:
        terms.append(
            tk.scale(tk.ce_over_positions(outputs.type_logits, prep.answer_type), config.lambda_t)
        )
    if (
        config.use_bfs_supervision
        and config.lambda_mask > 0
        and not prep.heuristics.skip_weak
    ):
        for m, target in zip(masks, prep.heuristics.bfs):
            if m is not None:
                terms.append(
                    tk.scale(tk.bce(m, target.astype(float).reshape(1, -1)), config.lambda_mask)
                )
    if not terms:
        raise tk.ShapeError("no loss terms for example")
    total = terms[0]
    for t in terms[1:]:
        total = tk.add(total, t)
    return total


# ---------------------------------------------------------------------------
# metrics

_ARTICLES = {"a", "an", "the"}
_PUNCT = {".", ",", "?", "!", ";", ":", "'", '"', "(", ")"}


def normalize_answer(text: str) -> list[str]:
    out = []
    for tok in text.lower().split():
        tok = "".join(ch for ch in tok if ch not in _PUNCT)
        if tok and tok not in _ARTICLES:
            out.append(tok)
    return out


def answer_scores(pred: str, gold: str) -> tuple[float, float, float, float]:
    """(em, f1, precision, recall) over normalized tokens."""
    p_toks = normalize_answer(pred)
    g_toks = normalize_answer(gold)
    em = float(p_toks == g_toks)
    if not p_toks or not g_toks:
        f1 = pr = rc = float(p_toks == g_toks)
        return em, f1, pr, rc
    common = 0
    g_pool = list(g_toks)
    for t in p_toks:
        if t in g_pool:
            g_pool.remove(t)
            common += 1
    if common == 0:
        return em, 0.0, 0.0, 0.0
    pr = common / len(p_toks)
    rc = common / len(g_toks)
    return em, 2 * pr * rc / (pr + rc), pr, rc


def support_scores(pred: set, gold: set) -> tuple[float, float, float, float]:
    em = float(pred == gold)
    if not pred and not gold:
        return 1.0, 1.0, 1.0, 1.0
    common = len(pred & gold)
    pr = common / len(pred) if pred else 0.0
    rc = common / len(gold) if gold else 0.0
    f1 = 2 * pr * rc / (pr + rc) if pr + rc else 0.0
    return em, f1, pr, rc


@dataclass
class MetricsReport:
    answer_em: float = 0.0
    answer_f1: float = 0.0
    sup_em: float = 0.0
    sup_f1: float = 0.0
    joint_em: float = 0.0
    joint_f1: float = 0.0
    n: int = 0

    def as_dict(self) -> dict:
        return {
            "answer_em": self.answer_em,
            "answer_f1": self.answer_f1,
            "sup_em": self.sup_em,
            "sup_f1": self.sup_f1,
            "joint_em": self.joint_em,
            "joint_f1": self.joint_f1,
            "n": self.n,
        }


def evaluate(
    model: DFGNModel,
    prepared: list[PreparedExample],
    sep_id: int,
) -> MetricsReport:
    rows = []
    for prep in prepared:
        outputs, _, _ = model.forward(prep, sep_id, training=False)
        pred_answer = decode_answer(
            outputs.start_logits.data,
            outputs.end_logits.data,
            outputs.type_logits.data,
            prep.layout,
            model.config.max_span,
        )
        pred_sup = {
            sent
            for sent, logit in zip(outputs.sentences, outputs.sup_logits.data.reshape(-1))
            if 1.0 / (1.0 + np.exp(-logit)) > 0.5
        }
        rows.append(score_prediction(prep.example, pred_answer, pred_sup))
    return aggregate_metrics(rows)


def score_prediction(example: QAExample, pred_answer: Answer, pred_sup: set) -> dict:
    a_em, a_f1, a_pr, a_rc = answer_scores(pred_answer.as_text(), example.answer.as_text())
    s_em, s_f1, s_pr, s_rc = support_scores(pred_sup, set(example.supporting_facts))
    j_pr = a_pr * s_pr
    j_rc = a_rc * s_rc
    j_f1 = 2 * j_pr * j_rc / (j_pr + j_rc) if j_pr + j_rc else 0.0
    return {
        "answer_em": a_em, "answer_f1": a_f1,
        "sup_em": s_em, "sup_f1": s_f1,
        "joint_em": a_em * s_em, "joint_f1": j_f1,
    }


def aggregate_metrics(rows: list[dict]) -> MetricsReport:
    if not rows:
        return MetricsReport()
    report = MetricsReport(n=len(rows))
    for key in ("answer_em", "answer_f1", "sup_em", "sup_f1", "joint_em", "joint_f1"):
        setattr(report, key, float(np.mean([r[key] for r in rows])))
    return report


# ---------------------------------------------------------------------------
# training


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    metrics: MetricsReport


def train_model(
    model: DFGNModel,
    train_prepared: list[PreparedExample],
    dev_prepared: list[PreparedExample],
    config: RunConfig,
    rng: np.random.Generator,
    sep_id: int,
    on_epoch: Optional[Callable[[EpochLog], None]] = None,
) -> list[EpochLog]:
    params = model.params()
    state = tk.AdamState(lr=config.lr)
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(train_prepared))
        losses = []
        for idx in order:
            prep = train_prepared[int(idx)]
            with tk.Tape() as tape:
                outputs, masks, _ = model.forward(prep, sep_id, training=True, rng=rng)
                loss = joint_loss(outputs, prep, masks, config)
                tape.backward(loss)
            losses.append(loss.item())
            tk.adam_step(params, state)
        metrics = evaluate(model, dev_prepared, sep_id) if dev_prepared else MetricsReport()
        log = EpochLog(epoch=epoch, train_loss=float(np.mean(losses)), metrics=metrics)
        history.append(log)
        if on_epoch:
            on_epoch(log)
        if (config.early_stop_em > 0
                and metrics.answer_em >= config.early_stop_em
                and metrics.sup_f1 >= config.early_stop_sup_f1):
            break
    return history


# ---------------------------------------------------------------------------
# full pipeline


@dataclass
class Pipeline:
    vocab: Vocabulary
    gazetteer: list[list[str]]
    selector: SelectorModel
    model: DFGNModel
    sep_id: int
    history: list[EpochLog] = field(default_factory=list)

    def params(self) -> dict[str, Tensor]:
        out = self.selector.params()
        out.update(self.model.params())
        return out


def prepare_with_selector(
    examples: list[QAExample],
    selector: SelectorModel,
    vocab: Vocabulary,
    gazetteer: list[list[str]],
    config: RunConfig,
    sep_id: int,
) -> list[PreparedExample]:
    prepared = []
    for ex in examples:
        scores = score_paragraphs(selector, ex, vocab, sep_id)
        _, layout = select_context(ex, scores, config.eta)
        prepared.append(prepare_example(ex, layout, gazetteer, vocab, config))
    return prepared


def train_pipeline(
    train_examples: list[QAExample],
    dev_examples: list[QAExample],
    vocab: Vocabulary,
    gazetteer: list[list[str]],
    config: RunConfig,
    on_epoch: Optional[Callable[[EpochLog], None]] = None,
) -> Pipeline:
    """Selector training, context selection, graph building, then DFGN training."""
    rng = np.random.default_rng(config.seed)
    sep_id = vocab.encode([SEP_TOKEN])[0]
    selector = train_selector(train_examples, vocab, config, rng)
    train_prepared = prepare_with_selector(
        train_examples, selector, vocab, gazetteer, config, sep_id
    )
    dev_prepared = prepare_with_selector(
        dev_examples, selector, vocab, gazetteer, config, sep_id
    )
    model = DFGNModel(len(vocab), config, rng)
    history = train_model(model, train_prepared, dev_prepared, config, rng, sep_id, on_epoch)
    return Pipeline(
        vocab=vocab,
        gazetteer=gazetteer,
        selector=selector,
        model=model,
        sep_id=sep_id,
        history=history,
    )
