"""Linear evaluation of frozen embeddings.

Stratified k-fold cross-validation with an L2-regularized multinomial
logistic regression trained by full-batch (Nesterov-accelerated) gradient
descent. The inverse-regularization strength C is chosen per training fold
on an inner validation split. The whole protocol repeats with re-drawn fold
assignments; the max and min repetition scores are dropped before averaging.

Features are centered and scaled by one global scalar, and weights start at
zero, so the returned accuracy is invariant (up to float noise) under any
global orthogonal rotation of the embedding space.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

DEFAULT_C_GRID = (1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3)


@dataclass
class EvalConfig:
    folds: int = 10
    c_grid: tuple[float, ...] = DEFAULT_C_GRID
    repetitions: int = 7
    max_iters: int = 300
    tol: float = 1e-7

    def validate(self) -> None:
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if not self.c_grid:
            raise ValueError("c_grid must not be empty")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")


def stratified_folds(labels: np.ndarray, folds: int, rng: np.random.Generator) -> np.ndarray:
    """Assign each sample a fold id, dealing shuffled class members round-robin."""
    labels = np.asarray(labels)
    assignment = np.zeros(labels.shape[0], dtype=np.int64)
    start = 0
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        rng.shuffle(idx)
        if idx.size < 2:
            warnings.warn(
                f"class {cls} has {idx.size} sample(s); it will be absent from some "
                "training folds"
            )
        assignment[idx] = (np.arange(idx.size) + start) % folds
        start += idx.size  # rotate the dealing origin to balance fold sizes
    for f in range(folds):
        train_classes = set(np.unique(labels[assignment != f]))
        missing = set(np.unique(labels)) - train_classes
        if missing:
            warnings.warn(f"fold {f}: classes {sorted(missing)} absent from training split")
    return assignment


@dataclass
class LinearClassifier:
    """Multinomial logistic regression state after fitting."""

    weights: np.ndarray  # (d, K)
    bias: np.ndarray  # (K,)
    center: np.ndarray  # (d,)
    scale: float

    def decision(self, features: np.ndarray) -> np.ndarray:
        return ((features - self.center) / self.scale) @ self.weights + self.bias

    def predict(self, features: np.ndarray) -> np.ndarray:
        return self.decision(features).argmax(axis=1)


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _spectral_norm_sq(x: np.ndarray, iters: int = 30) -> float:
    """Largest eigenvalue of x^T x by power iteration (deterministic start)."""
    m = x.T @ x
    v = np.ones(m.shape[0]) / np.sqrt(m.shape[0])
    for _ in range(iters):
        w = m @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
    return float(v @ m @ v)


def fit_logistic(features: np.ndarray, labels: np.ndarray, num_classes: int,
                 c_value: float, max_iters: int = 300, tol: float = 1e-7) -> LinearClassifier:
    """L2-penalized softmax regression by accelerated full-batch gradient descent."""
    n, d = features.shape
    center = features.mean(axis=0)
    spread = float(np.sqrt(np.mean((features - center) ** 2)))
    scale = spread if spread > 0 else 1.0
    x = (features - center) / scale
    onehot = np.zeros((n, num_classes))
    onehot[np.arange(n), labels] = 1.0
    lam = 1.0 / (c_value * n)
    lipschitz = 0.5 * _spectral_norm_sq(x) / n + lam
    lr = 1.0 / (1.05 * lipschitz)
    w = np.zeros((d, num_classes))
    b = np.zeros(num_classes)
    w_prev, b_prev = w, b
    for t in range(1, max_iters + 1):
        beta = (t - 1) / (t + 2)
        w_look = w + beta * (w - w_prev)
        b_look = b + beta * (b - b_prev)
        p = _softmax(x @ w_look + b_look)
        resid = (p - onehot) / n
        grad_w = x.T @ resid + lam * w_look
        grad_b = resid.sum(axis=0)
        w_prev, b_prev = w, b
        w = w_look - lr * grad_w
        b = b_look - lr * grad_b
        if max(np.abs(grad_w).max(), np.abs(grad_b).max()) < tol:
            break
    return LinearClassifier(w, b, center, scale)


def _accuracy(clf: LinearClassifier, features: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(clf.predict(features) == labels))


def _select_c(features: np.ndarray, labels: np.ndarray, num_classes: int,
              config: EvalConfig, rng: np.random.Generator) -> float:
    """Pick C on one stratified 80/20 inner split of the training fold."""
    inner = stratified_folds(labels, 5, rng)
    val_mask = inner == 0
    if val_mask.all() or (~val_mask).all():
        return config.c_grid[len(config.c_grid) // 2]
    x_tr, y_tr = features[~val_mask], labels[~val_mask]
    x_val, y_val = features[val_mask], labels[val_mask]
    best_c, best_acc = config.c_grid[0], -1.0
    for c in config.c_grid:
        clf = fit_logistic(x_tr, y_tr, num_classes, c, config.max_iters, config.tol)
        acc = _accuracy(clf, x_val, y_val)
        if acc > best_acc:
            best_c, best_acc = c, acc
    return best_c


def cross_validated_accuracy(embeddings: np.ndarray, labels: np.ndarray,
                             config: EvalConfig, rng: np.random.Generator) -> list[float]:
    """Per-fold test accuracies for one repetition (one fold assignment)."""
    labels = np.asarray(labels, dtype=np.int64)
    num_classes = int(labels.max()) + 1
    assignment = stratified_folds(labels, config.folds, rng)
    fold_accs = []
    for f in range(config.folds):
        test_mask = assignment == f
        if not test_mask.any():
            continue
        x_tr, y_tr = embeddings[~test_mask], labels[~test_mask]
        c = _select_c(x_tr, y_tr, num_classes, config, rng)
        clf = fit_logistic(x_tr, y_tr, num_classes, c, config.max_iters, config.tol)
        fold_accs.append(_accuracy(clf, embeddings[test_mask], labels[test_mask]))
    return fold_accs


def evaluate_linear(embeddings: np.ndarray, labels: np.ndarray,
                    config: EvalConfig | None = None, seed: int = 0) -> tuple[float, float]:
    """Trimmed-mean accuracy (and fold-level std) of the linear protocol.

    Repetitions re-draw fold assignments only; with 3+ repetitions the single
    best and worst repetition means are dropped before averaging.
    """
    config = config or EvalConfig()
    config.validate()
    embeddings = np.asarray(embeddings, dtype=np.float64)
    rep_means = []
    rep_folds = []
    for rep in range(config.repetitions):
        rng = np.random.default_rng([seed, rep])
        fold_accs = cross_validated_accuracy(embeddings, labels, config, rng)
        rep_means.append(float(np.mean(fold_accs)))
        rep_folds.append(fold_accs)
    keep = list(range(len(rep_means)))
    if len(keep) >= 3:
        keep.remove(max(keep, key=lambda i: rep_means[i]))
        keep.remove(min(keep, key=lambda i: rep_means[i]))
    kept_fold_accs = [acc for i in keep for acc in rep_folds[i]]
    return float(np.mean([rep_means[i] for i in keep])), float(np.std(kept_fold_accs))
