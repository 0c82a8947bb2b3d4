"""Command-line entry point. One subcommand per pipeline stage.

Machine-readable outputs are CSV; each report path also renders a matching
figure next to the CSV. Every run prints its resolved configuration first,
so logs identify the exact invocation.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_mod
from . import gqa, plots, synth
from .data import Dataset, load_features, load_splits, write_features
from .embeddings import (
    build_node_features,
    composition_features,
    concat_tables,
    load_embeddings,
    write_embeddings,
)
from .errors import CzslError
from .evaluate import curve_to_csv, evaluate_model, retrieve_topk
from .graph import GraphVariant, build_graph, normalize
from .model import ModelConfig, build_model, parse_model_config
from .train import TrainConfig, fit, grad_check

DEFAULT_HIDDEN = 4096  # graph stack hidden width for full-scale runs
DEFAULT_EXT_HIDDEN = (1024, 768)


def _print_config(command: str, args: argparse.Namespace) -> None:
    print(f"command: {command}")
    for key in sorted(vars(args)):
        if key in ("func", "command"):
            continue
        print(f"  {key}={getattr(args, key)}")


def _load_tables(paths: list[str]):
    return concat_tables([load_embeddings(p) for p in paths])


def _resolve_sources(sources, data_dir: Path) -> list[str]:
    out = []
    for src in sources:
        p = Path(src)
        if p.is_file():
            out.append(str(p))
        elif (data_dir / p.name).is_file():
            out.append(str(data_dir / p.name))
        else:
            raise CzslError(f"embedding source not found: {src}")
    return out


def _graph_inputs(split, config: ModelConfig, table, aux: str | None, oov_seed: int | None):
    """(prop, graph, node_features) triple per the configured graph variant."""
    variant = GraphVariant.from_letter(config.graph_variant)
    if variant is GraphVariant.DIRECT_EMBEDDING:
        return None, None, composition_features(split, table, oov_seed)
    graph = build_graph(split, variant, aux)
    prop = normalize(graph, split)
    return prop, graph, build_node_features(split, graph, table, oov_seed)


def _resolve_gcn_widths(args, p_dim: int, d: int) -> tuple[int, ...]:
    if args.gcn_widths:
        widths = tuple(int(tok) for tok in args.gcn_widths.split(","))
        if widths[0] != p_dim or widths[-1] != d:
            raise CzslError(
                f"--gcn-widths must start at the embedding width {p_dim} and end at {d}"
            )
        return widths
    hidden, depth = args.gcn_hidden, args.gcn_depth
    if depth < 1:
        raise CzslError("--gcn-depth must be >= 1")
    if args.gcn_mode == "gcnii":
        return (p_dim, *([hidden] * depth), d)
    return (p_dim, *([hidden] * (depth - 1)), d)


def _model_config_from_args(args, split, d_in: int, p_dim: int) -> ModelConfig:
    variant = GraphVariant.from_letter(args.graph_variant)
    direct = variant is GraphVariant.DIRECT_EMBEDDING
    if args.extractor == "identity":
        d = p_dim if direct else d_in
        ext_widths: tuple[int, ...] = ()
    else:
        d = p_dim if direct else (args.d or 512)
        hidden = tuple(int(tok) for tok in args.extractor_widths.split(","))
        if len(hidden) != 2:
            raise CzslError("--extractor-widths takes the two hidden sizes, e.g. 1024,768")
        ext_widths = (d_in, *hidden, d)
    config = ModelConfig(
        extractor_variant=args.extractor,
        extractor_widths=ext_widths,
        extractor_dropout=args.dropout,
        gcn_mode=args.gcn_mode,
        gcn_widths=() if direct else _resolve_gcn_widths(args, p_dim, d),
        gcn_alpha=args.gcn_alpha,
        gcn_lambda=args.gcn_lambda,
        graph_variant=args.graph_variant,
        embedding_sources=tuple(args.embeddings),
    )
    return config


def _add_train_flags(sub, with_variant: bool = True) -> None:
    sub.add_argument("--epochs", type=int, default=20)
    sub.add_argument("--batch-size", type=int, default=128)
    sub.add_argument("--lr-f", type=float, default=5e-6, help="extractor learning rate")
    sub.add_argument("--lr-g", type=float, default=5e-5, help="graph stack learning rate")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--dropout", type=float, default=0.0)
    sub.add_argument("--no-shuffle", action="store_true", help="keep sample order per epoch")
    sub.add_argument("--extractor", choices=("identity", "mlp3"), default="mlp3")
    sub.add_argument(
        "--extractor-widths", default=",".join(str(w) for w in DEFAULT_EXT_HIDDEN),
        help="two hidden widths of the mlp3 extractor",
    )
    sub.add_argument("--d", type=int, default=None, help="representation width (default 512)")
    if with_variant:
        sub.add_argument("--graph-variant", default="d", help="graph connection variant a-e")
    sub.add_argument("--gcn-mode", choices=("gcn", "gcnii"), default="gcn")
    sub.add_argument("--gcn-hidden", type=int, default=DEFAULT_HIDDEN)
    sub.add_argument("--gcn-depth", type=int, default=2)
    sub.add_argument("--gcn-widths", default="", help="full width chain, overrides hidden/depth")
    sub.add_argument("--gcn-alpha", type=float, default=0.1)
    sub.add_argument("--gcn-lambda", type=float, default=0.5)
    sub.add_argument("--aux", default=None, help="auxiliary edge file for variant e")
    sub.add_argument("--embeddings", nargs="*", default=None,
                     help="word-vector files (default: embeddings.txt in --data)")
    sub.add_argument("--oov", choices=("error", "seeded-random"), default="error")


def _train_one(split, train_ds: Dataset, args, val_ds: Dataset | None):
    data_dir = Path(args.data)
    if args.embeddings is None:
        args.embeddings = [str(data_dir / "embeddings.txt")]
    args.embeddings = _resolve_sources(args.embeddings, data_dir)
    table = _load_tables(args.embeddings)
    oov_seed = args.seed if args.oov == "seeded-random" else None
    config = _model_config_from_args(args, split, train_ds.dim, table.dim)
    prop, graph, node_features = _graph_inputs(split, config, table, args.aux, oov_seed)
    model = build_model(config, train_ds.dim, table.dim, seed=args.seed)
    train_config = TrainConfig(
        lr_extractor=args.lr_f,
        lr_gcn=args.lr_g,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        dropout=args.dropout,
        shuffle=not args.no_shuffle,
        eval_every=getattr(args, "val_every", 0),
    )
    log = fit(model, prop, graph, node_features, train_ds, split, train_config, val_ds)
    return model, log, config, (prop, graph, node_features)


def cmd_gen_synthetic(args) -> int:
    config = synth.SynthConfig(
        n_states=args.states,
        n_objects=args.objects,
        seen_fraction=args.seen_fraction,
        val_unseen=args.val_unseen,
        test_unseen=args.test_unseen,
        samples_per_pair=args.samples_per_pair,
        latent_dim=args.latent_dim,
        feature_dim=args.feature_dim,
        noise_sigma=args.noise,
        embed_noise_sigma=args.embed_noise,
        seed=args.seed,
    )
    split, datasets, table = synth.generate(config)
    out = Path(args.out)
    gqa.emit_splits(split, out, force=args.force)
    for phase, ds in datasets.items():
        write_features(out / f"features_{phase}.txt", ds)
    write_embeddings(out / "embeddings.txt", table)
    print(f"wrote synthetic dataset to {out}")
    print(f"  pairs: {len(split.seen_pairs)} seen, {len(split.val_unseen)} val-unseen, "
          f"{len(split.test_unseen)} test-unseen")
    print(f"  samples: " + ", ".join(f"{p}={len(d.samples)}" for p, d in datasets.items()))
    return 0


def cmd_make_splits(args) -> int:
    records = gqa.load_scene_graphs(args.scene_graphs)
    synonyms = gqa.load_synonym_map(args.synonyms) if args.synonyms else {}
    config = gqa.CurationConfig(
        min_box=args.min_box,
        train_graph_fraction_moved=args.move_fraction,
        val_prob=args.val_prob,
        test_prob=1.0 - args.val_prob,
        unseen_fraction=args.unseen_fraction,
        seed=args.seed,
        synonym_map=synonyms,
    )
    filtered = gqa.filter_boxes(records, config)
    vocab = gqa.build_vocab(filtered, synonyms)
    split, boxes = gqa.partition(records, config, vocab)
    out = Path(args.out)
    gqa.emit_splits(split, out, force=args.force)
    gqa.emit_box_lists(out, boxes, split)
    if vocab.report:
        (out / "vocab_report.txt").write_text(
            "".join(ln + "\n" for ln in vocab.report), encoding="utf-8"
        )
    print(f"wrote split directory {out}")
    print(f"  vocab: {len(split.states)} states, {len(split.objects)} objects "
          f"({len(vocab.report)} merges/removals)")
    print(f"  pairs: {len(split.seen_pairs)} seen, {len(split.val_unseen)}/{len(split.test_unseen)}"
          " val/test unseen")
    return 0


def cmd_build_graph(args) -> int:
    split = load_splits(args.data)
    graph = build_graph(split, GraphVariant.from_letter(args.variant), args.aux)
    normalize(graph, split)  # raises on zero-degree rows
    deg = graph.degrees()
    nnz = int(graph.adjacency.nnz)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stats = [
        ("K", graph.K),
        ("nnz", nnz),
        ("aux_nodes", len(graph.aux_names)),
        ("degree_min", int(deg.min())),
        ("degree_max", int(deg.max())),
        ("degree_mean", float(deg.mean())),
    ]
    (out / "graph_stats.csv").write_text(
        "metric,value\n" + "".join(f"{k},{v}\n" for k, v in stats), encoding="utf-8"
    )
    values, counts = np.unique(deg.astype(int), return_counts=True)
    (out / "degree_hist.csv").write_text(
        "degree,count\n" + "".join(f"{v},{c}\n" for v, c in zip(values, counts)),
        encoding="utf-8",
    )
    plots.save_degree_histogram(deg, out / "degree_hist.png")
    for k, v in stats:
        print(f"{k}: {v}")
    return 0


def cmd_train(args) -> int:
    split = load_splits(args.data)
    data_dir = Path(args.data)
    train_ds = load_features(data_dir / "features_train.txt", split, "train")
    val_ds = None
    if args.val_every:
        val_ds = load_features(data_dir / "features_val.txt", split, "val")
    model, log, config, _ = _train_one(split, train_ds, args, val_ds)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt_mod.save_checkpoint(out / "model.ckpt", model.parameters())
    (out / "config.txt").write_text(config.format(), encoding="utf-8")
    log_path = Path(args.log) if args.log else out / "train_log.csv"
    log_path.write_text(log.to_csv(include_timing=not args.no_timing), encoding="utf-8")
    plots.save_train_plot(log.entries, out / "loss.png")
    if log.best_params is not None:
        ckpt_mod.save_checkpoint(out / "best.ckpt", log.best_params)
        print(f"best val AUC {log.best_val_auc:.4f} (checkpoint: {out / 'best.ckpt'})")
    print(f"final epoch loss {log.entries[-1].loss:.6f}")
    print(f"wrote {out / 'model.ckpt'}, {out / 'config.txt'}, {log_path}, {out / 'loss.png'}")
    return 0


def _restore_model(args, split, dataset: Dataset):
    if not args.checkpoint:
        raise CzslError("missing --checkpoint")
    if not args.config:
        raise CzslError("missing --config")
    config = parse_model_config(args.config)
    data_dir = Path(args.data)
    sources = _resolve_sources(config.embedding_sources, data_dir)
    table = _load_tables(sources)
    oov_seed = args.seed if args.oov == "seeded-random" else None
    prop, graph, node_features = _graph_inputs(split, config, table, args.aux, oov_seed)
    model = build_model(config, dataset.dim, table.dim, seed=0)
    ckpt_mod.apply_params(model.parameters(), ckpt_mod.load_checkpoint(args.checkpoint))
    return model, (prop, graph, node_features)


def cmd_eval(args) -> int:
    split = load_splits(args.data)
    dataset = load_features(Path(args.data) / f"features_{args.phase}.txt", split, args.phase)
    model, (prop, graph, node_features) = _restore_model(args, split, dataset)
    result = evaluate_model(
        model, prop, graph, node_features, dataset, split, args.phase,
        primitive_at=args.primitive_at,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "result.csv").write_text(result.to_csv(), encoding="utf-8")
    (out / "curve.csv").write_text(curve_to_csv(result.curve), encoding="utf-8")
    plots.save_curve_plot(result.curve.points, out / "curve.png")
    if result.flags:
        print("flags: " + ",".join(result.flags), file=sys.stderr)
    if args.pretty:
        print(f"{'metric':<12} value")
        for name in ("auc", "best_hm", "best_seen", "best_unseen", "state_acc", "obj_acc"):
            print(f"{name:<12} {getattr(result, name):.4f}")
    else:
        print(result.to_csv(), end="")
    print(f"wrote {out / 'result.csv'}, {out / 'curve.csv'}, {out / 'curve.png'}")
    return 0


def cmd_ablate_graph(args) -> int:
    split = load_splits(args.data)
    data_dir = Path(args.data)
    train_ds = load_features(data_dir / "features_train.txt", split, "train")
    val_ds = load_features(data_dir / "features_val.txt", split, "val")
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    rows = []
    for letter in variants:
        sub = argparse.Namespace(**vars(args))
        sub.graph_variant = letter
        sub.val_every = 0
        model, _, config, (prop, graph, node_features) = _train_one(split, train_ds, sub, None)
        result = evaluate_model(model, prop, graph, node_features, val_ds, split, "val")
        rows.append((letter, result.auc, result.best_hm))
        print(f"variant {letter}: val AUC {result.auc:.4f}, best HM {result.best_hm:.4f}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.csv").write_text(
        "variant,val_auc,best_hm\n"
        + "".join(f"{v},{repr(float(a))},{repr(float(h))}\n" for v, a, h in rows),
        encoding="utf-8",
    )
    plots.save_ablation_plot(rows, out / "ablation.png")
    print(f"wrote {out / 'ablation.csv'}, {out / 'ablation.png'}")
    return 0


def cmd_grad_check(args) -> int:
    config = synth.SynthConfig(
        n_states=4, n_objects=4, seen_fraction=0.6, val_unseen=2, test_unseen=2,
        samples_per_pair=2, latent_dim=4, feature_dim=6, noise_sigma=0.1, seed=args.seed,
    )
    split, datasets, table = synth.generate(config)
    graph = build_graph(split, GraphVariant.FULL)
    prop = normalize(graph, split)
    e = build_node_features(split, graph, table)
    d = 5
    widths = ((table.dim, *([7] * args.depth), d) if args.mode == "gcnii"
              else (table.dim, *([7] * (args.depth - 1)), d))
    model_config = ModelConfig(
        extractor_variant=args.extractor,
        extractor_widths=(config.feature_dim, 9, 8, d) if args.extractor == "mlp3" else (),
        gcn_mode=args.mode,
        gcn_widths=widths,
        graph_variant="d",
    )
    d_in = config.feature_dim if args.extractor == "mlp3" else d
    train_ds = datasets["train"]
    x = train_ds.feature_matrix()[:12, :d_in]
    from .train import seen_label_indices

    y = seen_label_indices(train_ds, split)[:12]
    model = build_model(model_config, d_in, table.dim, seed=args.seed)
    err = grad_check(
        model, prop, graph, e, x, y, n_seen=len(split.seen_pairs),
        step=args.step, n_samples=args.samples, seed=args.seed,
    )
    print(f"max relative gradient error: {err:.3e} (threshold {args.threshold:.1e})")
    return 0 if err <= args.threshold else 1


def cmd_retrieve(args) -> int:
    split = load_splits(args.data)
    dataset = load_features(Path(args.data) / f"features_{args.phase}.txt", split, args.phase)
    model, (prop, graph, node_features) = _restore_model(args, split, dataset)
    from .data import Pair, normalize_name

    s_name, o_name = normalize_name(args.state), normalize_name(args.object)
    try:
        pair = Pair(split.states.index(s_name), split.objects.index(o_name))
    except ValueError:
        raise CzslError(f"unknown composition ({s_name}, {o_name})") from None
    if args.k > len(dataset.samples):
        print(f"k={args.k} exceeds dataset size {len(dataset.samples)}; truncating",
              file=sys.stderr)
    entries = retrieve_topk(pair, dataset, model, node_features, prop, graph, k=args.k)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "retrieval.csv").write_text(
        "rank,sample_id,score\n"
        + "".join(f"{i},{sid},{repr(score)}\n" for i, (sid, score) in enumerate(entries, 1)),
        encoding="utf-8",
    )
    plots.save_retrieval_plot(entries, out / "retrieval.png", f"top-{args.k}: {s_name} {o_name}")
    for i, (sid, score) in enumerate(entries, 1):
        print(f"{i}\t{sid}\t{score:.6f}")
    print(f"wrote {out / 'retrieval.csv'}, {out / 'retrieval.png'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="czsl",
        description="Compositional zero-shot learning with graph-embedded classifiers.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    def sub(name: str, handler, help_text: str):
        p = subs.add_parser(
            name, help=help_text, formatter_class=argparse.ArgumentDefaultsHelpFormatter
        )
        p.set_defaults(func=handler)
        return p

    p = sub("gen-synthetic", cmd_gen_synthetic, "write a synthetic dataset directory")
    p.add_argument("--out", required=True)
    p.add_argument("--states", type=int, default=8)
    p.add_argument("--objects", type=int, default=8)
    p.add_argument("--seen-fraction", type=float, default=0.625)
    p.add_argument("--val-unseen", type=int, default=6)
    p.add_argument("--test-unseen", type=int, default=6)
    p.add_argument("--samples-per-pair", type=int, default=10)
    p.add_argument("--latent-dim", type=int, default=8)
    p.add_argument("--feature-dim", type=int, default=32)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--embed-noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true")

    p = sub("make-splits", cmd_make_splits, "curate a split directory from scene graphs")
    p.add_argument("--scene-graphs", required=True)
    p.add_argument("--synonyms", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--min-box", type=int, default=112)
    p.add_argument("--move-fraction", type=float, default=0.20)
    p.add_argument("--val-prob", type=float, default=0.45)
    p.add_argument("--unseen-fraction", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true")

    p = sub("build-graph", cmd_build_graph, "emit adjacency statistics for one variant")
    p.add_argument("--data", required=True)
    p.add_argument("--variant", default="d")
    p.add_argument("--aux", default=None)
    p.add_argument("--out", required=True)

    p = sub("train", cmd_train, "train extractor and graph stack end to end")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", default=None, help="training log CSV path (default <out>/train_log.csv)")
    p.add_argument("--val-every", type=int, default=0,
                   help="evaluate validation AUC every N epochs (0 = never)")
    p.add_argument("--no-timing", action="store_true",
                   help="write 0.000 in the seconds column for reproducible logs")
    _add_train_flags(p)

    p = sub("eval", cmd_eval, "evaluate a checkpoint under the calibrated protocol")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--phase", choices=("val", "test"), default="test")
    p.add_argument("--out", required=True)
    p.add_argument("--aux", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--oov", choices=("error", "seeded-random"), default="error")
    p.add_argument("--primitive-at", choices=("sentinel", "best-hm"), default="sentinel")
    p.add_argument("--pretty", action="store_true")

    p = sub("ablate-graph", cmd_ablate_graph, "train and evaluate several graph variants")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variants", default="a,b,c,d")
    _add_train_flags(p, with_variant=False)

    p = sub("grad-check", cmd_grad_check, "finite-difference check on a reference config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=("gcn", "gcnii"), default="gcn")
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--extractor", choices=("identity", "mlp3"), default="mlp3")
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--threshold", type=float, default=1e-4)

    p = sub("retrieve", cmd_retrieve, "rank samples by compatibility with one composition")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--phase", choices=("train", "val", "test"), default="test")
    p.add_argument("--state", required=True)
    p.add_argument("--object", required=True)
    p.add_argument("-k", type=int, default=5)
    p.add_argument("--out", required=True)
    p.add_argument("--aux", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--oov", choices=("error", "seeded-random"), default="error")

    return parser


def main(argv: list[str] | None = None) -> int:
    threads = os.environ.get("CZSL_THREADS")
    if threads is not None:
        try:
            if int(threads) < 0:
                raise ValueError
        except ValueError:
            print(f"CZSL_THREADS must be a non-negative integer, got {threads!r}",
                  file=sys.stderr)
            return 1
    parser = build_parser()
    args = parser.parse_args(argv)
    _print_config(args.command, args)
    try:
        return args.func(args)
    except CzslError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
