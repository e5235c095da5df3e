"""Training losses, probability-distance metrics, and expectation oracles.

Both losses act on logits and apply the softmax internally: cross-entropy
against one-hot or soft targets, and the Brier score (squared error on the
simplex). The distance functions measure how far a predicted distribution
sits from a reference one in the same two senses, and
`expected_loss_over_labels` evaluates the label-averaged loss by explicit
enumeration, which is the brute-force oracle used to check that minimizing
either training loss is the same thing as minimizing the matching distance
to the true conditional distribution.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .tensor import softmax, validate_prob_rows

PROB_FLOOR = 1e-12

__all__ = [
    "LossKind",
    "TargetDistribution",
    "one_hot",
    "ce_loss_and_grad",
    "mse_loss_and_grad",
    "loss_and_grad",
    "mse_distance",
    "ce_distance",
    "expected_loss_over_labels",
]


class LossKind(str, Enum):
    CE = "ce"
    MSE = "mse"


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """(n, num_classes) one-hot rows for integer labels."""
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError("label out of range")
    out = np.zeros((labels.shape[0], num_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


@dataclass(frozen=True)
class TargetDistribution:
    """Per-sample supervision rows: each row one-hot or a soft distribution.

    `probs` holds every row as a distribution; `hard` marks rows that came
    from integer labels. Hard rows are exempt from temperature softening.
    """

    probs: np.ndarray  # (n, C)
    hard: np.ndarray  # (n,) bool

    def __post_init__(self):
        if self.probs.ndim != 2:
            raise ValueError("target probs must be (n, C)")
        if self.hard.shape != (self.probs.shape[0],):
            raise ValueError("hard mask length must match target rows")

    @property
    def num_classes(self) -> int:
        return self.probs.shape[1]

    def __len__(self) -> int:
        return self.probs.shape[0]

    @classmethod
    def from_labels(cls, labels: np.ndarray, num_classes: int) -> "TargetDistribution":
        return cls(one_hot(labels, num_classes), np.ones(len(labels), dtype=bool))

    @classmethod
    def from_probs(cls, probs: np.ndarray) -> "TargetDistribution":
        probs = validate_prob_rows(probs)
        return cls(probs, np.zeros(probs.shape[0], dtype=bool))

    def take(self, indices: np.ndarray) -> "TargetDistribution":
        return TargetDistribution(self.probs[indices], self.hard[indices])

    @classmethod
    def concat(cls, *parts: "TargetDistribution") -> "TargetDistribution":
        return cls(
            np.concatenate([p.probs for p in parts], axis=0),
            np.concatenate([p.hard for p in parts], axis=0),
        )


def _tempered(targets: TargetDistribution, temperature: float) -> np.ndarray:
    """Target rows after temperature softening of the soft rows.

    Soft rows are rescaled in log space, log p / T, then renormalized; hard
    one-hot rows pass through unchanged.
    """
    if temperature == 1.0 or bool(targets.hard.all()):
        return targets.probs
    t = np.array(targets.probs, copy=True)
    soft = ~targets.hard
    t[soft] = softmax(np.log(np.maximum(t[soft], PROB_FLOOR)) / temperature)
    return t


def effective_temperature(targets: TargetDistribution, temperature: float) -> float:
    """Temperature the loss actually applies: hard-label batches ignore it."""
    return 1.0 if bool(targets.hard.all()) else temperature


def _check_shapes(logits: np.ndarray, targets: TargetDistribution) -> None:
    if logits.ndim != 2:
        raise ValueError("logits must be (batch, C)")
    if logits.shape != targets.probs.shape:
        raise ValueError(f"logits {logits.shape} vs targets {targets.probs.shape}")


def ce_loss_and_grad(
    logits: np.ndarray, targets: TargetDistribution, temperature: float = 1.0
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient in logit space.

    loss = (1/B) sum_n H(t_n, softmax(z_n)) with natural log, and
    dlogits = (softmax(z) - t) / B. With temperature T != 1 both the logits
    and the soft target rows are rescaled by 1/T inside the loss; a batch of
    purely hard one-hot targets ignores the temperature entirely.
    """
    _check_shapes(logits, targets)
    b = logits.shape[0]
    temperature = effective_temperature(targets, temperature)
    z = logits / temperature
    t = _tempered(targets, temperature)
    m = z.max(axis=1, keepdims=True)
    e = np.exp(z - m)
    se = e.sum(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(se[:, 0])
    loss = float(np.mean(lse - (t * z).sum(axis=1)))
    dlogits = (e / se - t) / (b * temperature)
    return loss, dlogits


def mse_loss_and_grad(
    logits: np.ndarray, targets: TargetDistribution, temperature: float = 1.0
) -> tuple[float, np.ndarray]:
    """Mean Brier score over the batch and its gradient in logit space.

    With p = softmax(z): loss = (1/B) sum_n ||t_n - p_n||^2. The gradient
    pulls 2(p - t)/B back through the softmax Jacobian diag(p) - p p^T.
    Temperature handling matches `ce_loss_and_grad`.
    """
    _check_shapes(logits, targets)
    b = logits.shape[0]
    temperature = effective_temperature(targets, temperature)
    p = softmax(logits / temperature)
    t = _tempered(targets, temperature)
    diff = p - t
    loss = float(np.mean(np.square(diff).sum(axis=1)))
    g = (2.0 / b) * diff
    dlogits = (p * g - (p * g).sum(axis=1, keepdims=True) * p) / temperature
    return loss, dlogits


def loss_and_grad(
    kind: LossKind, logits: np.ndarray, targets: TargetDistribution, temperature: float = 1.0
) -> tuple[float, np.ndarray]:
    if LossKind(kind) is LossKind.CE:
        return ce_loss_and_grad(logits, targets, temperature)
    return mse_loss_and_grad(logits, targets, temperature)


def _pairwise(p: np.ndarray, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape[-1] != q.shape[-1]:
        raise ValueError(f"component counts disagree: {p.shape[-1]} vs {q.shape[-1]}")
    return p, q


def mse_distance(p: np.ndarray, q: np.ndarray) -> np.ndarray | float:
    """Squared Euclidean distance sum_c (p[c]-q[c])^2 along the last axis.

    No division by the component count; the convention is recorded in every
    results file this package writes.
    """
    p, q = _pairwise(p, q)
    out = np.square(p - q).sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def ce_distance(p: np.ndarray, q: np.ndarray) -> np.ndarray | float:
    """Cross-entropy H(p, q) = -sum_c p[c] ln q[c] along the last axis.

    `q` is clamped below at 1e-12 before the log so that distributions with
    exact zeros stay finite.
    """
    p, q = _pairwise(p, q)
    out = -(p * np.log(np.maximum(q, PROB_FLOOR))).sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def expected_loss_over_labels(p_star: np.ndarray, p: np.ndarray, kind: LossKind) -> float:
    """E_{y ~ p_star}[loss(one_hot(y), p)] by explicit enumeration.

    Sums the per-label loss over all C outcomes weighted by p_star. Kept
    deliberately brute-force: it is the independent oracle for the
    expectation-decomposition identities, so it must not share a code path
    with the distance functions it is checked against.
    """
    p_star = validate_prob_rows(np.asarray(p_star, dtype=np.float64))
    p = np.asarray(p, dtype=np.float64)
    if p_star.ndim != 1 or p.ndim != 1:
        raise ValueError("expected_loss_over_labels takes single distributions")
    if p_star.shape != p.shape:
        raise ValueError(f"component counts disagree: {p_star.shape} vs {p.shape}")
    c = p_star.shape[0]
    total = 0.0
    for label in range(c):
        e_y = np.zeros(c)
        e_y[label] = 1.0
        if LossKind(kind) is LossKind.CE:
            per_label = -float(np.log(np.maximum(p[label], PROB_FLOOR)))
        else:
            per_label = float(np.square(e_y - p).sum())
        total += float(p_star[label]) * per_label
    return total
