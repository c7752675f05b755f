"""Contrastive objectives over graph and reconstructed-graph embeddings.

Positive pairs score a graph's embedding against its own reconstruction.
Negatives come in two parts: head negatives re-encode the same graph after
shuffling its initial node features against the fixed topology, and tail
negatives pair every other graph in the batch with the reconstruction.
Scores are plain dot products; the estimators turn them into a scalar
objective to maximize.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ContractError, ShapeMismatch, Tensor
from .data import GraphBatch, concat_batches


@dataclass
class LossReport:
    """Signed loss components for one step.

    For the JSD estimator, total == positive + head_negative + tail_negative.
    For DV the negative expectation pools both sets inside one log, so the
    two negative fields are per-set diagnostics rather than exact summands.
    In the semi-supervised case total is the minimized quantity
    supervised + lambda * (negated estimator value).
    """

    total: float
    positive: float
    head_negative: float
    tail_negative: float
    supervised: float | None = None

    def csv_row(self, step: int) -> str:
        cells = [str(step), repr(self.total), repr(self.positive),
                 repr(self.head_negative), repr(self.tail_negative)]
        if self.supervised is not None:
            cells.append(repr(self.supervised))
        return ",".join(cells)


def score(a: Tensor, b: Tensor) -> Tensor:
    """Dot-product discriminator for one embedding pair; symmetric in (a, b)."""
    if a.shape != b.shape:
        raise ShapeMismatch(f"score: shapes {a.shape} and {b.shape} differ")
    return ad.sum(ad.mul(a, b))


def permute_nodes(features: Tensor, batch: GraphBatch, seed: int) -> Tensor:
    """Shuffle feature rows independently within each graph's node block."""
    rng = np.random.default_rng(seed)
    perm = np.arange(batch.num_nodes, dtype=np.int64)
    for g in range(batch.num_graphs):
        sl = batch.node_slice(g)
        block = perm[sl]
        rng.shuffle(block)
        perm[sl] = block
    return ad.gather_rows(features, perm)


def _softplus_np(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def jsd_loss(positives: Tensor, head_negs: Tensor, tail_negs: Tensor) -> Tensor:
    """Softplus-based estimator: mean -sp(-T+) minus mean sp(T-) on both negative sets."""
    if head_negs.size == 0 or tail_negs.size == 0:
        raise ContractError("jsd_loss: empty negative set; batches need at least 2 graphs")
    pos_term = ad.neg(ad.mean(ad.softplus(ad.neg(positives))))
    tail_term = ad.neg(ad.mean(ad.softplus(tail_negs)))
    head_term = ad.neg(ad.mean(ad.softplus(head_negs)))
    return ad.add(ad.add(pos_term, tail_term), head_term)


def dv_loss(positives: Tensor, negatives: Tensor) -> Tensor:
    """Donsker-Varadhan estimator: mean T+ minus log mean e^T-, max-shifted."""
    if negatives.size == 0:
        raise ContractError("dv_loss: empty negative set; batches need at least 2 graphs")
    shift = float(negatives.data.max())
    log_mean_exp = ad.add(ad.log(ad.mean(ad.exp(ad.sub(negatives, shift)))), shift)
    return ad.sub(ad.mean(positives), log_mean_exp)


def _pair_scores(h: Tensor, h_rec: Tensor, h_corrupt: Tensor) -> tuple[Tensor, Tensor, Tensor]:
    """Positive, head-negative, and tail-negative dot-product scores.

    Positives and head negatives are per-graph row dots; tail negatives are
    every ordered cross pair (i != j) from the batch score matrix.
    """
    n, d = h.shape
    ones = Tensor(np.ones((d, 1)))
    positives = ad.matmul(ad.mul(h, h_rec), ones)
    head_negs = ad.matmul(ad.mul(h_corrupt, h_rec), ones)
    cross = ad.matmul(h, ad.transpose(h_rec))
    flat_idx = np.arange(n * n, dtype=np.int64)
    off_diag = flat_idx[flat_idx // n != flat_idx % n]
    tail_negs = ad.gather_rows(ad.reshape(cross, (n * n, 1)), off_diag)
    return positives, head_negs, tail_negs


def unsupervised_loss(batch: GraphBatch, model, estimator_kind: str = "jsd",
                      seed: int = 0) -> tuple[Tensor, LossReport]:
    """Estimator value (to MAXIMIZE) for one batch, plus its component report."""
    if batch.num_graphs < 2:
        raise ContractError(
            "unsupervised_loss: tail negatives need at least 2 graphs per batch"
        )
    x0, node_embed, h = model.encoder.encode(batch)
    corrupted = permute_nodes(x0, batch, seed)
    _, h_corrupt = model.encoder.propagate(corrupted, batch)
    from .subgraphs import reconstruct

    h_rec, _ = reconstruct(node_embed, batch, model.generator, model.subgraph_conv)
    positives, head_negs, tail_negs = _pair_scores(h, h_rec, h_corrupt)
    if estimator_kind == "jsd":
        total = jsd_loss(positives, head_negs, tail_negs)
        report = LossReport(
            total=total.item(),
            positive=float(-_softplus_np(-positives.data).mean()),
            head_negative=float(-_softplus_np(head_negs.data).mean()),
            tail_negative=float(-_softplus_np(tail_negs.data).mean()),
        )
    elif estimator_kind == "dv":
        total = dv_loss(positives, ad.concat_rows([tail_negs, head_negs]))

        def log_mean_exp(x: np.ndarray) -> float:
            c = x.max()
            return float(c + np.log(np.mean(np.exp(x - c))))

        report = LossReport(
            total=total.item(),
            positive=float(positives.data.mean()),
            head_negative=-log_mean_exp(head_negs.data),
            tail_negative=-log_mean_exp(tail_negs.data),
        )
    else:
        raise ValueError(f"unknown estimator kind {estimator_kind!r}")
    return total, report


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer class labels under row softmax."""
    n, k = logits.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise ShapeMismatch(f"cross_entropy: {n} logit rows but labels shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise IndexError(f"cross_entropy: label out of range [0, {k})")
    onehot = np.zeros((n, k))
    onehot[np.arange(n), labels] = 1.0
    picked = ad.mul(ad.log(ad.softmax_rows(logits)), Tensor(onehot))
    return ad.mul(ad.sum(picked), -1.0 / n)


def mean_squared_error(pred: Tensor, targets: np.ndarray) -> Tensor:
    targets = np.asarray(targets, dtype=np.float64).reshape(pred.shape)
    diff = ad.sub(pred, Tensor(targets))
    return ad.mean(ad.mul(diff, diff))


def semi_supervised_loss(labeled_batch: GraphBatch, unlabeled_batch: GraphBatch | None,
                         model, lam: float, estimator_kind: str = "jsd",
                         seed: int = 0) -> tuple[Tensor, LossReport]:
    """Supervised loss plus lambda times the negated estimator (to MINIMIZE).

    With lam == 0 the unsupervised path is skipped entirely (no encoding of
    unlabeled graphs, no randomness consumed), so the run is exactly the
    purely supervised one.
    """
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    if model.classifier is None:
        raise ContractError("model has no prediction head; build it with one for semi runs")
    if labeled_batch.labels is None:
        raise ContractError("labeled batch carries no labels")
    _, _, h = model.encoder.encode(labeled_batch)
    predictions = model.classifier(h)
    if model.task == "regression":
        supervised = mean_squared_error(predictions, labeled_batch.labels)
    else:
        supervised = cross_entropy(predictions, labeled_batch.labels)
    if lam == 0:
        sup_value = supervised.item()
        return supervised, LossReport(sup_value, 0.0, 0.0, 0.0, supervised=sup_value)
    combined = (
        concat_batches(labeled_batch, unlabeled_batch)
        if unlabeled_batch is not None and unlabeled_batch.num_graphs
        else labeled_batch
    )
    estimator, uns_report = unsupervised_loss(combined, model, estimator_kind, seed)
    total = ad.add(supervised, ad.mul(ad.neg(estimator), lam))
    report = LossReport(
        total=total.item(),
        positive=uns_report.positive,
        head_negative=uns_report.head_negative,
        tail_negative=uns_report.tail_negative,
        supervised=supervised.item(),
    )
    return total, report
