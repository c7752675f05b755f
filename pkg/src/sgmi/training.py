"""Training loops, run records, and checkpointing.

The unsupervised loop maximizes the contrastive estimator over shuffled
mini-batches (last partial batch kept only if it still has 2+ graphs, since
tail negatives need a pair). The semi-supervised loop minimizes supervised
loss plus lambda times the negated estimator, selecting its checkpoint on a
validation split. All randomness flows from one master seed, so a given
(config, seed, data) triple reproduces its metrics byte for byte.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, Tape, adam_step, backward
from .data import Graph, dataset_max_degree, make_batch, with_degree_features
from .encoder import EncoderConfig
from .evaluation import EvalConfig, evaluate_linear
from .model import GeneratorConfig, Model
from .objective import LossReport, semi_supervised_loss, unsupervised_loss


class NumericalAbort(RuntimeError):
    """Training hit a non-finite loss; message names the failing step."""


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 128
    lr: float = 1e-3
    hidden_dim: int = 128
    num_layers: int = 4
    readout: str = "sum"
    generator: str = "tree"  # "tree" or "multihead"
    tree_depth: int = 2
    heads: int = 4
    estimator: str = "jsd"  # "jsd" or "dv"
    lam: float = 1e-3  # semi-supervised mixing weight
    seed: int = 0
    eval_every: int = 5
    max_degree: int | None = None  # degree-feature clamp; None = dataset max

    def validate(self) -> None:
        for name in ("epochs", "batch_size", "lr", "hidden_dim", "num_layers",
                     "tree_depth", "heads", "eval_every"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (tail negatives need pairs)")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.generator not in ("tree", "multihead"):
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.estimator not in ("jsd", "dv"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        num_subgraphs = self.generator_config().num_subgraphs
        if num_subgraphs not in (2, 4, 8):
            warnings.warn(f"{num_subgraphs} subgraphs is outside the usual {{2, 4, 8}} range")

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(self.num_layers, self.hidden_dim, self.readout)

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(self.generator, self.tree_depth, self.heads)

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class RunRecord:
    """Append-only trace of one run: losses, evaluations, timing, config."""

    config: dict
    step_rows: list[str] = field(default_factory=list)
    epoch_losses: list[float] = field(default_factory=list)
    evals: list[tuple[int, float, float]] = field(default_factory=list)
    best_epoch: int | None = None
    best_state: dict | None = None
    test_metric: float | None = None
    wall_clock: float = 0.0
    notes: list[str] = field(default_factory=list)
    semi: bool = False

    def metrics_csv(self) -> str:
        header = "step,total,pos,head_neg,tail_neg"
        if self.semi:
            header += ",sup"
        return "\n".join([header] + self.step_rows) + "\n"


def _featurized(graphs: list[Graph], config: TrainConfig) -> tuple[list[Graph], int | None]:
    """Attach degree features when node attrs are absent; report the clamp used."""
    if graphs[0].node_attrs is not None:
        return graphs, None
    max_degree = config.max_degree if config.max_degree is not None else dataset_max_degree(graphs)
    return with_degree_features(graphs, max_degree), max_degree


def _build_model(graphs: list[Graph], config: TrainConfig, rng: np.random.Generator,
                 num_classes: int | None = None, task: str | None = None) -> Model:
    node_dim = graphs[0].node_attrs.shape[1]
    edge_dim = graphs[0].edge_attrs.shape[1] if graphs[0].edge_attrs is not None else None
    return Model.build(
        node_dim=node_dim,
        edge_dim=edge_dim,
        encoder_config=config.encoder_config(),
        generator_config=config.generator_config(),
        rng=rng,
        num_classes=num_classes,
        task=task,
        max_degree=config.max_degree,
    )


def _batches(graphs: list[Graph], order: np.ndarray, batch_size: int, min_size: int = 2):
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        if idx.size >= min_size:
            yield make_batch([graphs[i] for i in idx])


def train_unsupervised(config: TrainConfig, graphs: list[Graph],
                       eval_config: EvalConfig | None = None,
                       periodic_repetitions: int = 2,
                       log=None) -> tuple[Model, RunRecord]:
    """Contrastive training; periodic linear evaluation picks the best checkpoint.

    Returns the final model plus a RunRecord whose best_state holds the
    parameter arrays from the best-scoring evaluation epoch (when labels are
    available to evaluate against).
    """
    config.validate()
    if not graphs:
        raise ValueError("empty dataset")
    started = time.perf_counter()
    graphs, used_max_degree = _featurized(graphs, config)
    if config.max_degree is None and used_max_degree is not None:
        config = TrainConfig(**{**config.as_dict(), "max_degree": used_max_degree})
    rng = np.random.default_rng(config.seed)
    model = _build_model(graphs, config, rng)
    adam = AdamState(lr=config.lr)
    labels = (
        np.asarray([g.label for g in graphs])
        if all(isinstance(g.label, (int, np.integer)) for g in graphs)
        else None
    )
    periodic_eval = EvalConfig(
        folds=(eval_config or EvalConfig()).folds,
        c_grid=(eval_config or EvalConfig()).c_grid,
        repetitions=periodic_repetitions,
    )
    record = RunRecord(config=config.as_dict())
    record.config["max_degree"] = used_max_degree if used_max_degree is not None else config.max_degree
    step = 0
    best_acc = -1.0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(graphs))
        epoch_totals = []
        for batch in _batches(graphs, order, config.batch_size):
            perm_seed = int(rng.integers(2 ** 63))
            with Tape() as tape:
                total, report = unsupervised_loss(batch, model, config.estimator, perm_seed)
                if not np.isfinite(total.data):
                    raise NumericalAbort(
                        f"non-finite loss at epoch {epoch}, step {step} (estimator forward)"
                    )
                loss = ad.neg(total)
                backward(tape, loss)
            adam_step(model.store, adam)
            record.step_rows.append(report.csv_row(step))
            epoch_totals.append(report.total)
            step += 1
        record.epoch_losses.append(float(np.mean(epoch_totals)) if epoch_totals else float("nan"))
        if labels is not None and (epoch % config.eval_every == 0 or epoch == config.epochs):
            acc, std = evaluate_linear(model.embed(graphs), labels, periodic_eval,
                                       seed=config.seed)
            record.evals.append((epoch, acc, std))
            if acc > best_acc:
                best_acc = acc
                record.best_epoch = epoch
                record.best_state = model.store.arrays()
            if log:
                log(f"epoch {epoch}: objective {record.epoch_losses[-1]:+.4f}, "
                    f"linear eval {acc:.4f} +/- {std:.4f}")
        elif log:
            log(f"epoch {epoch}: objective {record.epoch_losses[-1]:+.4f}")
    record.wall_clock = time.perf_counter() - started
    return model, record


def embed_dataset(model: Model, graphs: list[Graph]) -> tuple[np.ndarray, np.ndarray | None]:
    """Frozen h(G) row per graph, plus labels when every graph has one."""
    if graphs and graphs[0].node_attrs is None:
        max_degree = model.max_degree
        if max_degree is None:
            max_degree = dataset_max_degree(graphs)
        graphs = with_degree_features(graphs, max_degree)
    embeddings = model.embed(graphs)
    labels = (
        np.asarray([g.label for g in graphs])
        if all(g.label is not None for g in graphs)
        else None
    )
    return embeddings, labels


def _prediction_metric(model: Model, graphs: list[Graph]) -> float:
    """Accuracy for classification heads, mean absolute error for regression."""
    predictions = model.predict(graphs)
    targets = np.asarray([g.label for g in graphs])
    if model.task == "classification":
        return float(np.mean(predictions == targets.astype(np.int64)))
    return float(np.mean(np.abs(predictions - targets.astype(np.float64))))


def train_semisupervised(config: TrainConfig, labeled: list[Graph], unlabeled: list[Graph],
                         val: list[Graph], test: list[Graph],
                         log=None) -> tuple[Model, RunRecord]:
    """Joint supervised + contrastive training with validation-based selection.

    With lam == 0 the loop never touches the unlabeled graphs or the
    estimator, so it is exactly the purely supervised trajectory.
    """
    config.validate()
    if not labeled:
        raise ValueError("no labeled graphs")
    started = time.perf_counter()
    all_graphs = labeled + unlabeled + val + test
    featurized, used_max_degree = _featurized(all_graphs, config)
    if config.max_degree is None and used_max_degree is not None:
        config = TrainConfig(**{**config.as_dict(), "max_degree": used_max_degree})
    labeled = featurized[:len(labeled)]
    unlabeled = featurized[len(labeled):len(labeled) + len(unlabeled)]
    val = featurized[len(labeled) + len(unlabeled):len(labeled) + len(unlabeled) + len(val)]
    test = featurized[len(labeled) + len(unlabeled) + len(val):]
    regression = not all(isinstance(g.label, (int, np.integer)) for g in labeled)
    task = "regression" if regression else "classification"
    num_classes = None
    if not regression:
        num_classes = int(max(int(g.label) for g in labeled + val + test)) + 1
    rng = np.random.default_rng(config.seed)
    model = _build_model(labeled, config, rng, num_classes=num_classes, task=task)
    adam = AdamState(lr=config.lr)
    record = RunRecord(config=config.as_dict(), semi=True)
    record.config["max_degree"] = used_max_degree if used_max_degree is not None else config.max_degree
    record.notes.append(
        f"desk-scale semi-supervised run: {config.epochs} epochs, {len(labeled)} labeled "
        f"+ {len(unlabeled)} unlabeled graphs, {len(val)} val, {len(test)} test"
    )
    best_metric = None
    better = (lambda a, b: a > b) if task == "classification" else (lambda a, b: a < b)
    step = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(labeled))
        unlabeled_order = rng.permutation(len(unlabeled)) if (config.lam > 0 and unlabeled) else None
        unlabeled_pos = 0
        epoch_totals = []
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            if config.lam > 0 and idx.size < 2 and not unlabeled:
                continue  # cannot form tail negatives from a single graph
            labeled_batch = make_batch([labeled[i] for i in idx])
            unlabeled_batch = None
            if config.lam > 0 and unlabeled:
                take = min(config.batch_size, len(unlabeled))
                pick = [
                    unlabeled[unlabeled_order[(unlabeled_pos + j) % len(unlabeled)]]
                    for j in range(take)
                ]
                unlabeled_pos += take
                unlabeled_batch = make_batch(pick)
            perm_seed = int(rng.integers(2 ** 63)) if config.lam > 0 else 0
            with Tape() as tape:
                total, report = semi_supervised_loss(
                    labeled_batch, unlabeled_batch, model, config.lam,
                    config.estimator, perm_seed,
                )
                if not np.isfinite(total.data):
                    raise NumericalAbort(f"non-finite loss at epoch {epoch}, step {step}")
                backward(tape, total)
            adam_step(model.store, adam)
            record.step_rows.append(report.csv_row(step))
            epoch_totals.append(report.total)
            step += 1
        record.epoch_losses.append(float(np.mean(epoch_totals)) if epoch_totals else float("nan"))
        if val and (epoch % config.eval_every == 0 or epoch == config.epochs):
            metric = _prediction_metric(model, val)
            record.evals.append((epoch, metric, 0.0))
            if best_metric is None or better(metric, best_metric):
                best_metric = metric
                record.best_epoch = epoch
                record.best_state = model.store.arrays()
            if log:
                log(f"epoch {epoch}: loss {record.epoch_losses[-1]:+.4f}, val {metric:.4f}")
    if record.best_state is not None:
        model.store.load_arrays(record.best_state)
    if test:
        record.test_metric = _prediction_metric(model, test)
    record.wall_clock = time.perf_counter() - started
    return model, record


def save_checkpoint(model: Model, path) -> None:
    model.save(path)


def load_checkpoint(path) -> Model:
    return Model.load(path)
