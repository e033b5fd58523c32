"""Command-line entry point: gen-data, train, eval, trace, graph-stats."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys

import numpy as np

from . import chains as chains_mod
from . import tensorkit as tk
from .config import ConfigError, RunConfig, resolve_seed
from .data import (
    SEP_TOKEN,
    DatasetError,
    SyntheticSpec,
    Vocabulary,
    build_context,
    build_vocab,
    gazetteer_for,
    generate_synthetic,
    load_dataset,
    save_dataset,
)
from .nerlink import build_graph, graph_stats_row, recognize_in_context
from .predictor import (
    DFGNModel,
    Pipeline,
    decode_answer,
    prepare_with_selector,
    score_prediction,
    train_pipeline,
)
from .selector import SelectorModel, score_paragraphs, select_context, selector_metrics

VERSION = "dfgn-0.1.0"


def _write_manifest(out_dir: str, command: str, config: RunConfig, seed: int, extra: dict | None = None) -> None:
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "command": command,
        "version": VERSION,
        "seed": seed,
        "config": config.to_dict(),
    }
    if extra:
        manifest.update(extra)
    with open(os.path.join(out_dir, "run.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=1)
        f.write("\n")


def _load_config(args) -> RunConfig:
    config = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "eta", None) is not None:
        config.eta = args.eta
    config.seed = resolve_seed(getattr(args, "seed", None))
    return config.validate()


# ---------------------------------------------------------------------------
# checkpoint round trip for the whole pipeline


def save_pipeline(pipeline: Pipeline, path: str) -> None:
    vocab_tokens = [pipeline.vocab.id_to_token[i] for i in sorted(pipeline.vocab.id_to_token)]
    extra = {
        "config": pipeline.model.config.to_dict(),
        "vocab": vocab_tokens,
        "gazetteer": pipeline.gazetteer,
    }
    tk.save_checkpoint(pipeline.params(), path, extra=extra)


def load_pipeline(path: str) -> Pipeline:
    arrays, extra = tk.load_checkpoint(path)
    config = RunConfig.from_dict(extra["config"])
    vocab = Vocabulary()
    for token in extra["vocab"]:
        vocab.add(token)
    rng = np.random.default_rng(config.seed)
    selector = SelectorModel(len(vocab), config.selector_dim, rng)
    model = DFGNModel(len(vocab), config, rng)
    params = selector.params()
    params.update(model.params())
    tk.restore_params(params, arrays)
    return Pipeline(
        vocab=vocab,
        gazetteer=[list(s) for s in extra["gazetteer"]],
        selector=selector,
        model=model,
        sep_id=vocab.encode([SEP_TOKEN])[0],
    )


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_data(args) -> int:
    config = _load_config(args)
    spec = SyntheticSpec(
        n_entities=args.n_entities,
        n_relations=args.n_relations,
        n_examples=args.n_examples,
        paragraphs_per_example=args.paragraphs,
        distractors=args.paragraphs - 2,
        seed=config.seed,
        yesno_fraction=args.yesno_fraction,
        mirror_fraction=args.mirror_fraction,
        overlap_fraction=args.overlap_fraction,
    )
    examples = generate_synthetic(spec)
    os.makedirs(args.out, exist_ok=True)
    save_dataset(examples, os.path.join(args.out, "dataset.json"))
    with open(os.path.join(args.out, "gazetteer.json"), "w", encoding="utf-8") as f:
        json.dump(gazetteer_for(examples), f)
        f.write("\n")
    _write_manifest(args.out, "gen-data", config, config.seed, {"spec": dataclasses.asdict(spec)})
    print(f"wrote {len(examples)} examples to {args.out}/dataset.json")
    return 0


def _read_gazetteer(path: str | None, examples) -> list[list[str]]:
    if path:
        with open(path, encoding="utf-8") as f:
            return [list(s) for s in json.load(f)]
    return gazetteer_for(examples)


def cmd_train(args) -> int:
    config = _load_config(args)
    train_examples = load_dataset(args.data)
    dev_examples = load_dataset(args.dev) if args.dev else []
    gazetteer = _read_gazetteer(args.gazetteer, train_examples + dev_examples)
    vocab = build_vocab(train_examples)
    os.makedirs(args.out, exist_ok=True)
    metrics_path = os.path.join(args.out, "metrics.csv")
    with open(metrics_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["epoch", "train_loss", "answer_em", "answer_f1", "sup_em", "sup_f1", "joint_em", "joint_f1"]
        )

        def on_epoch(log):
            m = log.metrics
            writer.writerow(
                [log.epoch, f"{log.train_loss:.6f}", m.answer_em, m.answer_f1,
                 m.sup_em, m.sup_f1, m.joint_em, m.joint_f1]
            )
            f.flush()
            print(
                f"epoch {log.epoch}: loss {log.train_loss:.4f} "
                f"dev answer EM {m.answer_em:.3f} F1 {m.answer_f1:.3f} sup F1 {m.sup_f1:.3f}"
            )

        pipeline = train_pipeline(train_examples, dev_examples, vocab, gazetteer, config, on_epoch)

    ckpt_path = os.path.join(args.out, "checkpoint.json")
    save_pipeline(pipeline, ckpt_path)

    # selection report over the dev split
    report_examples = dev_examples or train_examples
    with open(os.path.join(args.out, "selection.csv"), "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["example_id", "paragraph_idx", "score", "kept", "is_gold"])
        for ex in report_examples:
            scores = score_paragraphs(pipeline.selector, ex, pipeline.vocab, pipeline.sep_id)
            kept, _ = select_context(ex, scores, config.eta)
            gold = {pi for pi, _ in ex.supporting_facts}
            for pi, s in enumerate(scores):
                writer.writerow([ex.id, pi, f"{s:.6f}", int(pi in kept), int(pi in gold)])
    sel = selector_metrics(pipeline.selector, report_examples, pipeline.vocab, config.eta)
    print(f"selector precision {sel['precision']:.3f} recall {sel['recall']:.3f}")
    _write_manifest(args.out, "train", config, config.seed, {"data": args.data, "dev": args.dev})
    print(f"checkpoint written to {ckpt_path}")
    return 0


def cmd_eval(args) -> int:
    pipeline = load_pipeline(args.ckpt)
    config = pipeline.model.config
    examples = load_dataset(args.data)
    prepared = prepare_with_selector(
        examples, pipeline.selector, pipeline.vocab, pipeline.gazetteer, config, pipeline.sep_id
    )
    rows = []
    for prep in prepared:
        outputs, _, _ = pipeline.model.forward(prep, pipeline.sep_id, training=False)
        pred_answer = decode_answer(
            outputs.start_logits.data, outputs.end_logits.data,
            outputs.type_logits.data, prep.layout, config.max_span,
        )
        pred_sup = {
            sent
            for sent, logit in zip(outputs.sentences, outputs.sup_logits.data.reshape(-1))
            if 1.0 / (1.0 + np.exp(-logit)) > 0.5
        }
        row = {"example_id": prep.example.id, "prediction": pred_answer.as_text()}
        row.update(score_prediction(prep.example, pred_answer, pred_sup))
        rows.append(row)
    os.makedirs(os.path.dirname(os.path.abspath(args.report)), exist_ok=True)
    keys = ["example_id", "prediction", "answer_em", "answer_f1", "sup_em", "sup_f1", "joint_em", "joint_f1"]
    with open(args.report, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(keys)
        for row in rows:
            writer.writerow([row[k] for k in keys])
        if rows:
            agg = ["ALL", ""] + [
                f"{float(np.mean([r[k] for r in rows])):.6f}" for k in keys[2:]
            ]
            writer.writerow(agg)
    print(f"evaluated {len(rows)} examples; report at {args.report}")
    return 0


def _esp_svg(report, path: str) -> None:
    """Tiny hand-rolled grouped bar chart of ESP EM / Recall against k."""
    ks = report.ks
    width, height, pad = 420, 220, 36
    bar_w = (width - 2 * pad) / (len(ks) * 2 + 1)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<line x1="{pad}" y1="{height-pad}" x2="{width-pad}" y2="{height-pad}" stroke="black"/>',
    ]
    for i, k in enumerate(ks):
        for j, (val, color) in enumerate(
            [(report.esp_em.get(k, 0.0), "#4878cf"), (report.esp_recall.get(k, 0.0), "#d65f5f")]
        ):
            h = (height - 2 * pad) * val
            x = pad + bar_w * (2 * i + j) + bar_w * i / 2
            y = height - pad - h
            parts.append(
                f'<rect x="{x:.1f}" y="{y:.1f}" width="{bar_w:.1f}" height="{h:.1f}" fill="{color}"/>'
            )
        parts.append(
            f'<text x="{pad + bar_w * (2 * i) + bar_w * i / 2:.1f}" y="{height - pad + 16}" '
            f'font-size="11">k={k}</text>'
        )
    parts.append(f'<text x="{pad}" y="16" font-size="11">ESP EM (blue) / Recall (red)</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(parts) + "\n")


def cmd_trace(args) -> int:
    pipeline = load_pipeline(args.ckpt)
    config = pipeline.model.config
    examples = load_dataset(args.data)
    prepared = prepare_with_selector(
        examples, pipeline.selector, pipeline.vocab, pipeline.gazetteer, config, pipeline.sep_id
    )
    ks = sorted(int(k) for k in args.k.split(","))
    os.makedirs(args.out, exist_ok=True)
    traces = []
    for prep in prepared:
        if prep.graph.n == 0:
            traces.append({"example_id": prep.example.id, "paths": [], "masks": []})
            continue
        masks, alphas = chains_mod.model_masks_alphas(pipeline.model, prep, pipeline.sep_id)
        top = chains_mod.top_k_paths(prep.graph, masks, alphas, max(ks))
        traces.append(
            {
                "example_id": prep.example.id,
                "masks": [m.tolist() for m in masks],
                "top_attention": [
                    {
                        "node": i,
                        "surface": " ".join(prep.graph.nodes[i].surface),
                        "edges": [
                            {"to": int(j), "alpha": float(a[i, j])}
                            for j in np.argsort(-a[i])[:3]
                            if a[i, j] > 0
                        ],
                    }
                    for a in alphas[-1:]
                    for i in range(prep.graph.n)
                ],
                "paths": [
                    {"nodes": p.nodes, "surfaces": p.surfaces(prep.graph), "score": p.score}
                    for p in top
                ],
            }
        )
    with open(os.path.join(args.out, "traces.json"), "w", encoding="utf-8") as f:
        json.dump(traces, f, indent=1)
        f.write("\n")
    report = chains_mod.esp_scores(pipeline.model, prepared, ks, pipeline.sep_id)
    with open(os.path.join(args.out, "esp.csv"), "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["k", "esp_em", "esp_recall", "n_good_cases", "missing_support_ratio"])
        for k in ks:
            writer.writerow(
                [k, report.esp_em.get(k, 0.0), report.esp_recall.get(k, 0.0),
                 report.n_good_cases, report.missing_support_ratio]
            )
    if args.svg:
        _esp_svg(report, os.path.join(args.out, "esp.svg"))
    _write_manifest(args.out, "trace", config, config.seed, {"data": args.data, "k": ks})
    print(f"traced {len(traces)} examples; ESP report at {args.out}/esp.csv")
    return 0


def cmd_graph_stats(args) -> int:
    config = _load_config(args)
    examples = load_dataset(args.data)
    gazetteer = _read_gazetteer(args.gazetteer, examples)
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "graph_stats.csv")
    degrees = []
    with open(out_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["example_id", "n_nodes", "n_edges_sentence", "n_edges_context",
             "n_edges_paragraph", "mean_degree", "missing_support_flag"]
        )
        for ex in examples:
            layout = build_context(ex, list(range(len(ex.paragraphs))))
            mentions = recognize_in_context(layout, gazetteer)
            graph = build_graph(mentions, config.max_nodes)
            row = graph_stats_row(ex.id, ex, graph)
            degrees.append(row["mean_degree"])
            writer.writerow([row[k] for k in (
                "example_id", "n_nodes", "n_edges_sentence", "n_edges_context",
                "n_edges_paragraph", "mean_degree", "missing_support_flag")])
    _write_manifest(args.out, "graph-stats", config, config.seed, {"data": args.data})
    if degrees:
        print(f"mean node degree over {len(degrees)} examples: {float(np.mean(degrees)):.3f}")
    print(f"graph stats at {out_path}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dfgn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic two-hop dataset")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--n-examples", type=int, default=100)
    p.add_argument("--n-entities", type=int, default=40)
    p.add_argument("--n-relations", type=int, default=6)
    p.add_argument("--paragraphs", type=int, default=10)
    p.add_argument("--yesno-fraction", type=float, default=0.1)
    p.add_argument("--mirror-fraction", type=float, default=0.0)
    p.add_argument("--overlap-fraction", type=float, default=0.0)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train selector and reasoning model")
    p.add_argument("--data", required=True)
    p.add_argument("--dev", default=None)
    p.add_argument("--gazetteer", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--eta", type=float, default=None)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("trace", help="dump reasoning chains and ESP scores")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--k", default="1,2,5,10")
    p.add_argument("--out", required=True)
    p.add_argument("--svg", action="store_true")
    p.set_defaults(fn=cmd_trace)

    p = sub.add_parser("graph-stats", help="entity graph statistics CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--gazetteer", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_graph_stats)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, DatasetError, tk.TensorkitError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
