"""Using a spiking network as a classifier, plus a linear softmax readout.

Ties are broken toward the lowest class index everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass
class Assignments:
    labels: np.ndarray  # (neurons,), -1 for neurons that never fired
    proportions: np.ndarray  # (neurons, classes), rows sum to 1 for active neurons
    class_rates: np.ndarray  # (neurons, classes), mean spikes per sample of each class

    @property
    def class_count(self) -> int:
        return self.class_rates.shape[1]


def assign_labels(spike_counts: np.ndarray, labels: np.ndarray, class_count: int) -> Assignments:
    """Label each neuron with the class on which it fires most per sample."""
    counts = np.asarray(spike_counts, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if counts.ndim != 2 or counts.shape[0] != labels.shape[0]:
        raise ValidationError("spike_counts must be (samples, neurons) matching labels")
    if (counts < 0).any():
        raise ValidationError("spike counts must be non-negative")
    if labels.size and (labels.min() < 0 or labels.max() >= class_count):
        raise ValidationError("labels outside [0, class_count)")
    per_class = np.bincount(labels, minlength=class_count).astype(np.float64)
    present = per_class > 0
    if not present.any():
        raise ValidationError("no samples for any class")
    sums = np.zeros((counts.shape[1], class_count))
    np.add.at(sums.T, labels, counts)
    rates = np.zeros_like(sums)
    rates[:, present] = sums[:, present] / per_class[present]
    masked = np.where(present, rates, -np.inf)
    assigned = np.argmax(masked, axis=1)
    totals = rates.sum(axis=1)
    active = totals > 0
    assigned[~active] = -1
    proportions = np.zeros_like(rates)
    proportions[active] = rates[active] / totals[active, None]
    return Assignments(assigned, proportions, rates)


def _class_sizes(assignments: Assignments) -> np.ndarray:
    assigned = assignments.labels[assignments.labels >= 0]
    if assigned.size == 0:
        raise ValidationError("no neuron has an assigned label")
    return np.bincount(assigned, minlength=assignments.class_count).astype(np.float64)


def _argmax_over(scores: np.ndarray, sizes: np.ndarray) -> np.ndarray:
    masked = np.where(sizes > 0, scores, -np.inf)
    return np.argmax(masked, axis=-1)


def all_activity(spike_counts: np.ndarray, assignments: Assignments) -> np.ndarray | int:
    """Predict the class whose assigned neurons have the highest mean spike count."""
    counts = np.asarray(spike_counts, dtype=np.float64)
    sizes = _class_sizes(assignments)
    onehot = assignments.labels[:, None] == np.arange(assignments.class_count)[None, :]
    scores = counts @ onehot
    with np.errstate(divide="ignore", invalid="ignore"):
        scores = scores / sizes
    pred = _argmax_over(scores, sizes)
    return int(pred) if counts.ndim == 1 else pred


def proportion_weighting(spike_counts: np.ndarray, assignments: Assignments) -> np.ndarray | int:
    """Like :func:`all_activity` but each neuron votes with its class proportions."""
    counts = np.asarray(spike_counts, dtype=np.float64)
    sizes = _class_sizes(assignments)
    scores = counts @ assignments.proportions
    with np.errstate(divide="ignore", invalid="ignore"):
        scores = scores / sizes
    pred = _argmax_over(scores, sizes)
    return int(pred) if counts.ndim == 1 else pred


def confusion_matrix(y_true, y_pred, class_count: int) -> np.ndarray:
    cm = np.zeros((class_count, class_count), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return cm


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grad(W: np.ndarray, b: np.ndarray, X: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy of a softmax-linear model and its gradients."""
    p = softmax(X @ W + b)
    n = X.shape[0]
    loss = -np.log(np.maximum(p[np.arange(n), y], 1e-300)).mean()
    p[np.arange(n), y] -= 1.0
    p /= n
    return float(loss), X.T @ p, p.sum(axis=0)


@dataclass
class LinearReadout:
    weights: np.ndarray  # (d, classes), acting on standardized features
    bias: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    train_accuracy: float
    losses: list[float]

    def transform(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=np.float64) - self.mean) / self.scale

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.argmax(self.transform(features) @ self.weights + self.bias, axis=1)

    def accuracy(self, features: np.ndarray, labels: np.ndarray) -> float:
        return float(np.mean(self.predict(features) == np.asarray(labels)))


def train_linear_readout(
    features: np.ndarray,
    labels: np.ndarray,
    epochs: int = 100,
    lr: float = 0.1,
    batch_size: int = 32,
    seed: int = 0,
    class_count: int | None = None,
    standardize: bool = True,
) -> LinearReadout:
    """Multinomial logistic regression by mini-batch gradient descent.

    Features are z-scored with training statistics when ``standardize`` is set
    (constant columns keep scale 1).
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if X.ndim != 2 or X.shape[1] == 0:
        raise ValidationError("features must be (samples, d) with d >= 1")
    if X.shape[0] != y.shape[0] or X.shape[0] == 0:
        raise ValidationError("features and labels disagree in length")
    if not np.isfinite(X).all():
        raise ValidationError("features must be finite")
    k = class_count if class_count is not None else int(y.max()) + 1
    if standardize:
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
    else:
        mean = np.zeros(X.shape[1])
        scale = np.ones(X.shape[1])
    Xs = (X - mean) / scale
    rng = np.random.Generator(np.random.PCG64(seed))
    W = np.zeros((X.shape[1], k))
    b = np.zeros(k)
    n = X.shape[0]
    bs = max(1, min(batch_size, n))
    losses = []
    for _ in range(epochs):
        order = rng.permutation(n) if bs < n else np.arange(n)
        for start in range(0, n, bs):
            idx = order[start : start + bs]
            _, gW, gb = loss_and_grad(W, b, Xs[idx], y[idx])
            W -= lr * gW
            b -= lr * gb
        losses.append(loss_and_grad(W, b, Xs, y)[0])
    readout = LinearReadout(W, b, mean, scale, 0.0, losses)
    readout.train_accuracy = readout.accuracy(X, y)
    return readout
