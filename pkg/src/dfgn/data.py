"""Dataset schema, JSON ingestion, vocabulary, and the synthetic generator.

The synthetic corpus provides chain-labeled two-hop questions: one gold
paragraph states rel1(A, B), a second gold paragraph (titled by the bridge
entity B) restates the link and states rel2(B, C).  Distractor paragraphs
reuse the same relation words over unrelated entities, so lexical matching
on the relation alone cannot identify the answer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

PAD_ID = 0
UNK_ID = 1
SEP_TOKEN = "<sep>"

_ADJECTIVES = [
    "fort", "green", "old", "north", "silver", "red", "lower", "grand",
    "royal", "east", "stone", "white", "high", "wild", "black", "golden",
    "west", "quiet", "broad", "clear",
]
_NOUNS = [
    "river", "lake", "ridge", "harbor", "field", "grove", "cliff", "bay",
    "marsh", "summit", "canyon", "shore", "meadow", "glen", "falls", "hollow",
]
_SUFFIXES = ["bridge", "valley", "crossing"]
_RELATIONS = [
    "leader", "capital", "founder", "anthem", "port", "mayor", "patron",
    "emblem", "treasurer", "harbinger", "archivist", "warden",
]


class DatasetError(Exception):
    pass


@dataclass
class Paragraph:
    title: list[str]
    sentences: list[list[str]]

    def all_tokens(self) -> list[str]:
        out = list(self.title)
        for s in self.sentences:
            out.extend(s)
        return out


@dataclass
class Answer:
    type: str  # "span" | "yes" | "no"
    text: Optional[str] = None

    def as_text(self) -> str:
        return self.text if self.type == "span" else self.type


@dataclass
class QAExample:
    id: str
    question: list[str]
    paragraphs: list[Paragraph]
    supporting_facts: set[tuple[int, int]]
    answer: Answer
    gold_chain: Optional[list[str]] = None


@dataclass
class SyntheticSpec:
    n_entities: int = 40
    n_relations: int = 6
    n_examples: int = 100
    paragraphs_per_example: int = 10
    hops: int = 2
    distractors: int = 8
    seed: int = 0
    comparison_fraction: float = 0.0
    yesno_fraction: float = 0.1
    # fraction of distractor paragraphs that mirror the bridge paragraph's
    # two-sentence shape (restatement + fact over a fake chain w -> x -> y),
    # so the answer paragraph cannot be singled out by structure alone
    mirror_fraction: float = 0.0
    # fraction of mirrored distractors whose restatement is about the
    # question entity A (with a relation other than rel1), so that finding
    # the bridge paragraph requires matching the relation, not just A
    overlap_fraction: float = 0.0

    def validate(self) -> "SyntheticSpec":
        if self.hops != 2:
            raise DatasetError("only 2-hop generation is supported")
        if self.distractors + 2 != self.paragraphs_per_example:
            raise DatasetError("distractors + gold paragraphs must equal paragraphs_per_example")
        if self.n_entities < 8:
            raise DatasetError("need at least 8 entities to avoid collisions")
        if self.n_relations < 3 or self.n_relations > len(_RELATIONS):
            raise DatasetError(f"n_relations must be in [3, {len(_RELATIONS)}]")
        if self.comparison_fraction != 0.0:
            raise DatasetError("comparison-type questions are out of scope")
        if not 0.0 <= self.yesno_fraction < 1.0:
            raise DatasetError("yesno_fraction out of [0, 1)")
        for name in ("mirror_fraction", "overlap_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise DatasetError(f"{name} out of [0, 1]")
        return self


# ---------------------------------------------------------------------------
# validation / io


def _contains_span(tokens: list[str], span: list[str]) -> bool:
    n = len(span)
    if n == 0 or n > len(tokens):
        return False
    return any(tokens[i:i + n] == span for i in range(len(tokens) - n + 1))


def validate_example(ex: QAExample) -> list[str]:
    problems = []
    if not ex.question:
        problems.append("empty question")
    for pi, para in enumerate(ex.paragraphs):
        if not para.sentences:
            problems.append(f"paragraph {pi} has no sentences")
        if any(len(s) == 0 for s in para.sentences):
            problems.append(f"paragraph {pi} has an empty sentence")
    for (pi, si) in ex.supporting_facts:
        if not 0 <= pi < len(ex.paragraphs):
            problems.append(f"supporting fact paragraph index {pi} out of range")
        elif not 0 <= si < len(ex.paragraphs[pi].sentences):
            problems.append(f"supporting fact sentence index ({pi}, {si}) out of range")
    if ex.answer.type == "span":
        if not ex.answer.text:
            problems.append("span answer without text")
        else:
            span = ex.answer.text.split()
            if not any(_contains_span(p.all_tokens(), span) for p in ex.paragraphs):
                problems.append("answer span not found in any paragraph")
    elif ex.answer.type not in ("yes", "no"):
        problems.append(f"unknown answer type {ex.answer.type!r}")
    if ex.gold_chain is not None:
        supp_paras = {pi for pi, _ in ex.supporting_facts}
        if len(supp_paras) < 2:
            problems.append("multi-hop example with supporting facts in fewer than 2 paragraphs")
    return problems


def example_to_dict(ex: QAExample) -> dict:
    d = {
        "id": ex.id,
        "question": ex.question,
        "paragraphs": [
            {"title": p.title, "sentences": p.sentences} for p in ex.paragraphs
        ],
        "supporting_facts": [list(sf) for sf in sorted(ex.supporting_facts)],
        "answer": {"type": ex.answer.type},
    }
    if ex.answer.text is not None:
        d["answer"]["text"] = ex.answer.text
    if ex.gold_chain is not None:
        d["gold_chain"] = ex.gold_chain
    return d


def example_from_dict(d: dict) -> QAExample:
    try:
        answer = Answer(type=d["answer"]["type"], text=d["answer"].get("text"))
        return QAExample(
            id=d["id"],
            question=[str(t) for t in d["question"]],
            paragraphs=[
                Paragraph(
                    title=[str(t) for t in p["title"]],
                    sentences=[[str(t) for t in s] for s in p["sentences"]],
                )
                for p in d["paragraphs"]
            ],
            supporting_facts={(int(a), int(b)) for a, b in d["supporting_facts"]},
            answer=answer,
            gold_chain=list(d["gold_chain"]) if d.get("gold_chain") is not None else None,
        )
    except (KeyError, TypeError, ValueError) as e:
        raise DatasetError(f"malformed example record ({e})") from None


def load_dataset(path: str) -> list[QAExample]:
    with open(path, encoding="utf-8") as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise DatasetError(f"cannot parse {path}: {e}") from None
    if not isinstance(raw, list):
        raise DatasetError(f"{path}: expected a JSON array of examples")
    examples = [example_from_dict(d) for d in raw]
    bad = {}
    for ex in examples:
        problems = validate_example(ex)
        if problems:
            bad[ex.id] = problems
    if bad:
        lines = "; ".join(f"{k}: {', '.join(v)}" for k, v in sorted(bad.items()))
        raise DatasetError(f"invalid examples in {path}: {lines}")
    return examples


def save_dataset(examples: Iterable[QAExample], path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump([example_to_dict(ex) for ex in examples], f, ensure_ascii=False, indent=1)
        f.write("\n")


# ---------------------------------------------------------------------------
# context assembly


@dataclass
class ContextLayout:
    """Concatenated context for a subset of paragraphs, with token ranges.

    Titles are part of the context (they carry the central entities);
    ``sentence_spans`` indexes body sentences only, keyed by the paragraph's
    index in the *original* example so labels survive selection.
    """

    tokens: list[str]
    kept: list[int]
    para_spans: dict[int, tuple[int, int]] = field(default_factory=dict)
    title_spans: dict[int, tuple[int, int]] = field(default_factory=dict)
    sentence_spans: list[tuple[int, int, int, int]] = field(default_factory=list)

    def sentence_of(self, pos: int) -> Optional[tuple[int, int]]:
        """(paragraph, sentence) holding a token position; -1 for titles."""
        for p, (s, e) in self.title_spans.items():
            if s <= pos < e:
                return (p, -1)
        for p, si, s, e in self.sentence_spans:
            if s <= pos < e:
                return (p, si)
        return None

    def paragraph_of(self, pos: int) -> Optional[int]:
        for p, (s, e) in self.para_spans.items():
            if s <= pos < e:
                return p
        return None

    def sentence_span(self, para: int, sent: int) -> Optional[tuple[int, int]]:
        for p, si, s, e in self.sentence_spans:
            if p == para and si == sent:
                return (s, e)
        return None


def build_context(example: QAExample, kept: list[int]) -> ContextLayout:
    """Concatenate kept paragraphs (in original order) into one token stream."""
    layout = ContextLayout(tokens=[], kept=list(kept))
    for p in kept:
        para = example.paragraphs[p]
        start = len(layout.tokens)
        layout.tokens.extend(t.lower() for t in para.title)
        layout.title_spans[p] = (start, len(layout.tokens))
        for si, sent in enumerate(para.sentences):
            s0 = len(layout.tokens)
            layout.tokens.extend(t.lower() for t in sent)
            layout.sentence_spans.append((p, si, s0, len(layout.tokens)))
        layout.para_spans[p] = (start, len(layout.tokens))
    return layout


# ---------------------------------------------------------------------------
# vocabulary


class Vocabulary:
    """Token -> id map with PAD=0 and UNK=1 reserved."""

    def __init__(self):
        self.token_to_id: dict[str, int] = {}
        self.id_to_token: dict[int, str] = {}

    def __len__(self) -> int:
        return len(self.token_to_id) + 2

    def add(self, token: str) -> int:
        token = token.lower()
        if token not in self.token_to_id:
            idx = len(self.token_to_id) + 2
            self.token_to_id[token] = idx
            self.id_to_token[idx] = token
        return self.token_to_id[token]

    def encode(self, tokens: list[str]) -> list[int]:
        return [self.token_to_id.get(t.lower(), UNK_ID) for t in tokens]

    def decode(self, ids: list[int]) -> list[str]:
        return [self.id_to_token.get(i, "<unk>") for i in ids]


def build_vocab(examples: Iterable[QAExample]) -> Vocabulary:
    vocab = Vocabulary()
    vocab.add(SEP_TOKEN)
    for ex in examples:
        for t in ex.question:
            vocab.add(t)
        for p in ex.paragraphs:
            for t in p.all_tokens():
                vocab.add(t)
    return vocab


def encode_tokens(vocab: Vocabulary, tokens: list[str]) -> list[int]:
    return vocab.encode(tokens)


# ---------------------------------------------------------------------------
# synthetic generation


def make_entity_surfaces(n: int, rng: np.random.Generator) -> list[list[str]]:
    """Multi-token surfaces over a shared word pool; some extend others."""
    combos = [[a, b] for a in _ADJECTIVES for b in _NOUNS]
    order = rng.permutation(len(combos))
    surfaces: list[list[str]] = []
    for k in order:
        base = combos[int(k)]
        surfaces.append(list(base))
        if len(surfaces) == n:
            break
        # every fifth entity is a three-token extension of the previous one,
        # so longest-match recognition is exercised
        if len(surfaces) % 5 == 0:
            suffix = _SUFFIXES[int(rng.integers(len(_SUFFIXES)))]
            surfaces.append(base + [suffix])
            if len(surfaces) == n:
                break
    if len(surfaces) < n:
        raise DatasetError(f"cannot build {n} distinct entity surfaces")
    return surfaces


def _fact_sentence(rel: str, subject: list[str], obj: list[str]) -> list[str]:
    return ["the", rel, "of"] + subject + ["is"] + obj + ["."]


def generate_synthetic(spec: SyntheticSpec) -> list[QAExample]:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    entities = make_entity_surfaces(spec.n_entities, rng)
    relations = [_RELATIONS[i] for i in range(spec.n_relations)]
    examples = []
    for i in range(spec.n_examples):
        ai, bi, ci = [int(x) for x in rng.choice(spec.n_entities, size=3, replace=False)]
        a, b, c = entities[ai], entities[bi], entities[ci]
        r1i, r2i = [int(x) for x in rng.choice(spec.n_relations, size=2, replace=False)]
        rel1, rel2 = relations[r1i], relations[r2i]

        para_a = Paragraph(title=list(a), sentences=[_fact_sentence(rel1, a, b)])
        para_b = Paragraph(
            title=list(b),
            sentences=[
                list(b) + ["is", "the", rel1, "of"] + a + ["."],
                _fact_sentence(rel2, b, c),
            ],
        )

        # distractors avoid the chain entities entirely and never contain the
        # answer, but deliberately reuse the question's relations; a
        # mirror_fraction of them copy the gold bridge paragraph's shape
        # (restatement + fact over a fake chain w -> x -> y) so the answer
        # paragraph cannot be singled out by surface structure alone
        def contains_answer(surface: list[str]) -> bool:
            return any(surface[k:k + len(c)] == c for k in range(len(surface)))

        pool = [
            j for j in range(spec.n_entities)
            if j not in (ai, bi, ci) and not contains_answer(entities[j])
        ]
        distractor_objects: list[list[str]] = []
        distractor_paras = []
        for k in range(spec.distractors):
            wi, xi, yi = [int(v) for v in rng.choice(len(pool), size=3, replace=False)]
            w, x, y = entities[pool[wi]], entities[pool[xi]], entities[pool[yi]]
            if k % 2 == 0:
                rel_in, rel_out = rel1, rel2
                distractor_objects.append(y)
            elif k % 4 == 1:
                rel_in, rel_out = rel2, rel1
            else:
                rel_in = relations[int(rng.integers(spec.n_relations))]
                rel_out = relations[int(rng.integers(spec.n_relations))]
            if rng.random() < spec.mirror_fraction:
                if rng.random() < spec.overlap_fraction:
                    # restate about the question entity A itself, under a
                    # relation other than rel1 so the true chain stays unique
                    w = a
                    if rel_in == rel1:
                        others = [r for r in relations if r != rel1]
                        rel_in = others[int(rng.integers(len(others)))]
                sentences = [
                    list(x) + ["is", "the", rel_in, "of"] + w + ["."],
                    _fact_sentence(rel_out, x, y),
                ]
            else:
                sentences = [_fact_sentence(rel_out, x, y)]
            distractor_paras.append(Paragraph(title=list(x), sentences=sentences))

        paras = [("a", para_a), ("b", para_b)] + [("d", p) for p in distractor_paras]
        order = [int(v) for v in rng.permutation(len(paras))]
        shuffled = [paras[v] for v in order]
        pa_idx = next(idx for idx, (tag, _) in enumerate(shuffled) if tag == "a")
        pb_idx = next(idx for idx, (tag, _) in enumerate(shuffled) if tag == "b")
        paragraphs = [p for _, p in shuffled]
        supporting = {(pa_idx, 0), (pb_idx, 1)}

        if rng.random() < spec.yesno_fraction:
            if rng.random() < 0.5 or not distractor_objects:
                candidate, ans_type = c, "yes"
            else:
                pick = int(rng.integers(len(distractor_objects)))
                candidate, ans_type = distractor_objects[pick], "no"
            question = (
                ["is", "the", rel2, "of", "the", rel1, "of"] + a + candidate + ["?"]
            )
            answer = Answer(type=ans_type)
        else:
            question = ["what", "is", "the", rel2, "of", "the", rel1, "of"] + a + ["?"]
            answer = Answer(type="span", text=" ".join(c))

        examples.append(
            QAExample(
                id=f"syn-{spec.seed}-{i:05d}",
                question=question,
                paragraphs=paragraphs,
                supporting_facts=supporting,
                answer=answer,
                gold_chain=[" ".join(a), " ".join(b), " ".join(c)],
            )
        )
    return examples


def gazetteer_for(examples: Iterable[QAExample]) -> list[list[str]]:
    """All distinct entity surfaces used by a synthetic dataset's chains."""
    seen: dict[tuple[str, ...], None] = {}
    for ex in examples:
        for p in ex.paragraphs:
            seen.setdefault(tuple(p.title), None)
        if ex.gold_chain:
            for surf in ex.gold_chain:
                seen.setdefault(tuple(surf.split()), None)
    return [list(s) for s in seen]
