"""Command-line front end: train, eval, export, synth.

Every command validates its inputs before writing anything. Exit codes:
0 success, 2 configuration error, 3 data error, 4 numerical abort.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError
from .config import ConfigError, RunSettings, parse_run_config, write_snapshot
from .data import (
    DatasetError,
    dataset_max_degree,
    load_tudataset,
    synthetic_dataset,
    with_degree_features,
    write_tudataset,
)
from .evaluation import EvalConfig, evaluate_linear
from .model import Model
from .subgraphs import reconstruct
from .training import (
    NumericalAbort,
    embed_dataset,
    train_semisupervised,
    train_unsupervised,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _load_graphs(data_dir: str | None, name: str | None):
    if not data_dir or not name:
        raise ConfigError("dataset path and name are required ([data] path/name)")
    directory = Path(data_dir)
    if not directory.is_dir():
        raise DatasetError(f"dataset directory not found: {directory}")
    return load_tudataset(directory, name)


def _featurize_for_model(model: Model, graphs):
    if graphs and graphs[0].node_attrs is None:
        max_degree = model.max_degree
        if max_degree is None:
            max_degree = dataset_max_degree(graphs)
        graphs = with_degree_features(graphs, max_degree)
    width = graphs[0].node_attrs.shape[1]
    if width != model.encoder.node_dim:
        raise DatasetError(
            f"feature width mismatch: checkpoint expects {model.encoder.node_dim}, "
            f"dataset provides {width}"
        )
    edge_width = graphs[0].edge_attrs.shape[1] if graphs[0].edge_attrs is not None else None
    if edge_width != model.encoder.edge_dim:
        raise DatasetError(
            f"edge attribute mismatch: checkpoint expects {model.encoder.edge_dim}, "
            f"dataset provides {edge_width}"
        )
    return graphs


def _semi_split(graphs, settings: RunSettings, seed: int):
    rng = np.random.default_rng([seed, len(graphs)])
    order = rng.permutation(len(graphs))
    n = len(graphs)
    n_lab = max(1, round(settings.labeled_fraction * n))
    n_val = max(1, round(settings.val_fraction * n))
    n_test = max(1, round(settings.test_fraction * n))
    if n_lab + n_val + n_test >= n:
        raise DatasetError(f"dataset of {n} graphs is too small for the semi split")
    pick = lambda sl: [graphs[i] for i in order[sl]]
    labeled = pick(slice(0, n_lab))
    val = pick(slice(n_lab, n_lab + n_val))
    test = pick(slice(n_lab + n_val, n_lab + n_val + n_test))
    unlabeled = pick(slice(n_lab + n_val + n_test, n))
    return labeled, unlabeled, val, test


def cmd_train(args) -> int:
    settings = parse_run_config(args.config)
    if args.seed is not None:
        settings.train.seed = args.seed
    graphs, meta = _load_graphs(args.data or settings.data_path,
                                args.name or settings.data_name)
    out_dir = Path(args.out)
    if args.semi:
        labeled, unlabeled, val, test = _semi_split(graphs, settings, settings.train.seed)
        model, record = train_semisupervised(
            settings.train, labeled, unlabeled, val, test, log=print,
        )
    else:
        model, record = train_unsupervised(
            settings.train, graphs, eval_config=settings.eval, log=print,
        )
    out_dir.mkdir(parents=True, exist_ok=True)
    write_snapshot(settings, out_dir / "config_snapshot.ini")
    (out_dir / "metrics.csv").write_text(record.metrics_csv(), encoding="utf-8")
    model.save(out_dir / "checkpoint_final.bin")
    if record.best_state is not None:
        final_state = model.store.arrays()
        model.store.load_arrays(record.best_state)
        model.save(out_dir / "checkpoint_best.bin")
        model.store.load_arrays(final_state)
    summary = [f"dataset {meta.name}: {meta.num_graphs} graphs"]
    if record.evals:
        epoch, acc, std = record.evals[-1]
        summary.append(f"last eval (epoch {epoch}): {acc:.4f} +/- {std:.4f}")
    if record.test_metric is not None:
        summary.append(f"test metric: {record.test_metric:.4f}")
    summary.append(f"wall clock: {record.wall_clock:.1f}s")
    print("; ".join(summary))
    return EXIT_OK


def _read_embedding_csv(path: Path):
    if not path.is_file():
        raise DatasetError(f"embeddings file not found: {path}")
    rows = np.loadtxt(path, delimiter=",", ndmin=2)
    if rows.shape[1] < 2:
        raise DatasetError("embeddings file needs at least one feature column plus labels")
    return rows[:, :-1], rows[:, -1].astype(np.int64)


def cmd_eval(args) -> int:
    eval_config = EvalConfig()
    if args.folds:
        eval_config.folds = args.folds
    if args.repetitions:
        eval_config.repetitions = args.repetitions
    eval_config.validate()
    if args.embeddings:
        embeddings, labels = _read_embedding_csv(Path(args.embeddings))
    else:
        if not args.checkpoint:
            raise ConfigError("cmd_eval needs --checkpoint or --embeddings")
        model = Model.load(args.checkpoint)
        graphs, _ = _load_graphs(args.data, args.name)
        graphs = _featurize_for_model(model, graphs)
        embeddings, labels = embed_dataset(model, graphs)
        if labels is None or labels.dtype.kind not in "iu":
            raise DatasetError("evaluation needs integer class labels on every graph")
    mean, std = evaluate_linear(embeddings, labels, eval_config, seed=args.seed or 0)
    print(f"accuracy {mean!r} {std!r}")
    return EXIT_OK


def cmd_export(args) -> int:
    model = Model.load(args.checkpoint)
    graphs, _ = _load_graphs(args.data, args.name)
    graphs = _featurize_for_model(model, graphs)
    out = Path(args.out)
    if args.what == "embeddings":
        embeddings, labels = embed_dataset(model, graphs)
        if labels is None:
            labels = np.full(len(graphs), np.nan)
        lines = []
        for row, label in zip(embeddings, labels):
            lines.append(",".join([repr(float(x)) for x in row] + [repr(float(label))]))
        out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    else:
        from .data import make_batch

        lines = ["graph_id,node_id,subgraph_id,weight"]
        for gi, graph in enumerate(graphs):
            batch = make_batch([graph])
            _, node_embed, _ = model.encoder.encode(batch)
            _, masks = reconstruct(node_embed, batch, model.generator, model.subgraph_conv)
            for si, mask in enumerate(masks):
                weights = mask.data.reshape(-1)
                for node, w in enumerate(weights):
                    lines.append(f"{gi},{node},{si},{float(w)!r}")
        out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    graphs = synthetic_dataset(args.seed, args.graphs, args.classes)
    out = Path(args.out)
    write_tudataset(graphs, out, args.name)
    print(f"wrote {args.graphs} graphs ({args.classes} classes) to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sgmi",
        description="Self-supervised graph representation learning toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model from a run config")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--semi", action="store_true")
    p_train.add_argument("--data", help="override [data] path")
    p_train.add_argument("--name", help="override [data] name")
    p_train.add_argument("--seed", type=int)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="linear-evaluate a checkpoint or embeddings")
    p_eval.add_argument("--checkpoint")
    p_eval.add_argument("--data")
    p_eval.add_argument("--name")
    p_eval.add_argument("--embeddings", help="CSV of embeddings with label column last")
    p_eval.add_argument("--folds", type=int)
    p_eval.add_argument("--repetitions", type=int)
    p_eval.add_argument("--seed", type=int)
    p_eval.set_defaults(func=cmd_eval)

    p_export = sub.add_parser("export", help="export embeddings or membership masks")
    p_export.add_argument("--checkpoint", required=True)
    p_export.add_argument("--data", required=True)
    p_export.add_argument("--name", required=True)
    p_export.add_argument("--what", choices=("embeddings", "masks"), required=True)
    p_export.add_argument("--out", required=True)
    p_export.set_defaults(func=cmd_export)

    p_synth = sub.add_parser("synth", help="write a synthetic TUDataset-format dataset")
    p_synth.add_argument("--seed", type=int, required=True)
    p_synth.add_argument("--graphs", type=int, required=True)
    p_synth.add_argument("--classes", type=int, required=True)
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--name", default="SYNTH")
    p_synth.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, CheckpointError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
