"""Synthetic Gaussian classification data with an exact class posterior.

Labels are uniform over C classes and features are drawn from class-
conditional isotropic Gaussians, so the true conditional distribution of
the label given a feature vector has a closed softmax form over negative
scaled squared distances to the class means. That exact posterior (the
Bayes conditional probability distribution, BCPD) is stored with every
sample, which is what lets the experiments measure how close any trained
model's output is to the ideal one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .tensor import softmax, validate_prob_rows

__all__ = [
    "GaussianSpec",
    "LabeledDataset",
    "SPLIT_NAMES",
    "make_spec",
    "sample_dataset",
    "analytic_bcpd",
    "split_dataset",
    "perturb_bcpd",
    "sharpen_bcpd",
    "truncate_bcpd",
    "blend_uniform",
    "bayes_accuracy",
    "save_dataset",
    "load_dataset",
]

SPLIT_NAMES = ("train", "val", "test")
_SPLIT_CODE = {name: i for i, name in enumerate(SPLIT_NAMES)}
PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class GaussianSpec:
    """Generative model: C isotropic Gaussians with symbol-valued means.

    Every mean coordinate is one of {-delta_mu, 0, +delta_mu}; sigma is the
    shared per-coordinate noise scale.
    """

    num_classes: int
    dim: int
    delta_mu: float
    sigma: float
    means: np.ndarray  # (C, dim)

    def __post_init__(self):
        if self.num_classes < 2 or self.dim < 1:
            raise ValueError("need num_classes >= 2 and dim >= 1")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if self.means.shape != (self.num_classes, self.dim):
            raise ValueError(f"means must be (C, dim), got {self.means.shape}")
        allowed = {-self.delta_mu, 0.0, self.delta_mu}
        if not set(np.unique(self.means)) <= allowed:
            raise ValueError("mean entries must lie in {-delta_mu, 0, delta_mu}")


@dataclass
class LabeledDataset:
    """Feature matrix, labels, exact posterior rows, and split tags."""

    x: np.ndarray  # (N, dim)
    y: np.ndarray  # (N,) int64
    bcpd: np.ndarray  # (N, C)
    split: np.ndarray  # (N,) int8, codes into SPLIT_NAMES

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def num_classes(self) -> int:
        return self.bcpd.shape[1]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def indices(self, split: str) -> np.ndarray:
        """Dataset-order indices of one split."""
        return np.flatnonzero(self.split == _SPLIT_CODE[split])

    def split_sizes(self) -> dict[str, int]:
        return {name: int((self.split == code).sum()) for name, code in _SPLIT_CODE.items()}


def make_spec(
    rng: np.random.Generator,
    num_classes: int = 3,
    dim: int = 30,
    delta_mu: float = 1.0,
    sigma: float = 4.0,
) -> GaussianSpec:
    """Draw class means with coordinates uniform over the 3-symbol set."""
    if num_classes < 2 or dim < 1:
        raise ValueError("need num_classes >= 2 and dim >= 1")
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    if delta_mu < 0:
        raise ValueError(f"delta_mu must be >= 0, got {delta_mu}")
    symbols = np.array([-delta_mu, 0.0, delta_mu])
    means = symbols[rng.integers(0, 3, size=(num_classes, dim))]
    return GaussianSpec(num_classes, dim, delta_mu, sigma, means)


def analytic_bcpd(spec: GaussianSpec, x: np.ndarray) -> np.ndarray:
    """Exact posterior rows for feature rows `x`.

    Scores are -||x - mu_k||^2 / (2 sigma^2); a row-wise stable softmax
    turns them into the posterior. Accepts one vector or a matrix of rows.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    rows = x[None, :] if single else x
    if rows.shape[1] != spec.dim:
        raise ValueError(f"expected dim {spec.dim}, got {rows.shape[1]}")
    diff = rows[:, None, :] - spec.means[None, :, :]
    scores = -np.square(diff).sum(axis=2) / (2.0 * spec.sigma**2)
    p = softmax(scores)
    return p[0] if single else p


def sample_dataset(rng: np.random.Generator, spec: GaussianSpec, n_samples: int) -> LabeledDataset:
    """Uniform labels, Gaussian features, exact posterior per sample.

    All samples start tagged as train; apply `split_dataset` to assign the
    train/val/test partition.
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    y = rng.integers(0, spec.num_classes, size=n_samples)
    x = spec.means[y] + spec.sigma * rng.standard_normal((n_samples, spec.dim))
    bcpd = analytic_bcpd(spec, x)
    return LabeledDataset(x=x, y=y, bcpd=bcpd, split=np.zeros(n_samples, dtype=np.int8))


def split_dataset(
    rng: np.random.Generator,
    dataset: LabeledDataset,
    ratios: tuple[float, float, float] = (0.9, 0.05, 0.05),
) -> LabeledDataset:
    """Tag samples train/val/test by a random permutation and ratio cuts.

    Cut points are the rounded cumulative ratios, so sizes match the
    requested fractions to within one sample.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != len(SPLIT_NAMES) or any(r <= 0 for r in ratios):
        raise ValueError(f"need {len(SPLIT_NAMES)} positive ratios, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    n = len(dataset)
    perm = rng.permutation(n)
    cut1 = int(round(n * ratios[0]))
    cut2 = int(round(n * (ratios[0] + ratios[1])))
    split = np.empty(n, dtype=np.int8)
    split[perm[:cut1]] = _SPLIT_CODE["train"]
    split[perm[cut1:cut2]] = _SPLIT_CODE["val"]
    split[perm[cut2:]] = _SPLIT_CODE["test"]
    return LabeledDataset(x=dataset.x, y=dataset.y, bcpd=dataset.bcpd, split=split)


def perturb_bcpd(rng: np.random.Generator, bcpd: np.ndarray, noise_scale: float) -> np.ndarray:
    """Noisy posterior rows: Gaussian jitter in log space, then softmax.

    Each component of log(max(p, 1e-12)) gets independent N(0, scale^2)
    noise before renormalization, so outputs are valid distributions at any
    scale and scale 0 reproduces the input (up to renormalization of the
    1e-12 floor).
    """
    if noise_scale < 0:
        raise ValueError(f"noise_scale must be >= 0, got {noise_scale}")
    bcpd = np.asarray(bcpd, dtype=np.float64)
    logp = np.log(np.maximum(bcpd, PROB_FLOOR))
    return softmax(logp + noise_scale * rng.standard_normal(bcpd.shape))


def sharpen_bcpd(bcpd: np.ndarray, strength: float) -> np.ndarray:
    """Temperature-sharpened rows, p^(1+strength) renormalized.

    Keeps every argmax, concentrates mass on it; strength 0 is identity.
    """
    if strength < 0:
        raise ValueError(f"strength must be >= 0, got {strength}")
    bcpd = np.asarray(bcpd, dtype=np.float64)
    return softmax(np.log(np.maximum(bcpd, PROB_FLOOR)) * (1.0 + strength))


def truncate_bcpd(bcpd: np.ndarray, threshold: float) -> np.ndarray:
    """Rows with entries below `threshold` zeroed out, then renormalized.

    Each row's largest entry is always kept, so the argmax never changes
    and the result is a valid distribution for any threshold. Zeroing
    small coordinates barely moves the squared-error distance but sends
    the cross-entropy distance toward the clamped-log ceiling, which makes
    this the classic case of an estimate that is near in one sense and far
    in the other.
    """
    if threshold < 0:
        raise ValueError(f"threshold must be >= 0, got {threshold}")
    bcpd = np.asarray(bcpd, dtype=np.float64)
    q = np.where(bcpd < threshold, 0.0, bcpd)
    rows = np.arange(q.shape[0])
    amax = bcpd.argmax(axis=1)
    q[rows, amax] = bcpd[rows, amax]
    return q / q.sum(axis=1, keepdims=True)


def blend_uniform(bcpd: np.ndarray, weight: float) -> np.ndarray:
    """Rows pulled toward uniform: (1-w) p + w u. Keeps every argmax."""
    if not 0.0 <= weight <= 1.0:
        raise ValueError(f"weight must be in [0, 1], got {weight}")
    bcpd = np.asarray(bcpd, dtype=np.float64)
    c = bcpd.shape[-1]
    return (1.0 - weight) * bcpd + weight / c


def bayes_accuracy(dataset: LabeledDataset, split: str | None = None) -> float:
    """Accuracy of predicting argmax of the exact posterior.

    This is the ceiling for any classifier on this data; models are
    compared against it in the experiment records.
    """
    if split is None:
        idx = np.arange(len(dataset))
    else:
        idx = dataset.indices(split)
    if idx.size == 0:
        raise ValueError(f"split {split!r} is empty")
    return float((dataset.bcpd[idx].argmax(axis=1) == dataset.y[idx]).mean())


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def save_dataset(dataset: LabeledDataset, spec: GaussianSpec, csv_path, meta_path, seed: int) -> None:
    """Write the dataset CSV and its JSON metadata sidecar.

    CSV columns: x_0..x_{d-1}, y, p_0..p_{C-1}, split. Doubles carry 17
    significant digits so a load reproduces every value bit-for-bit.
    """
    d, c = dataset.dim, dataset.num_classes
    header = (
        [f"x_{i}" for i in range(d)] + ["y"] + [f"p_{i}" for i in range(c)] + ["split"]
    )
    lines = [",".join(header)]
    split_names = [SPLIT_NAMES[code] for code in dataset.split]
    for i in range(len(dataset)):
        row = [_fmt(v) for v in dataset.x[i]]
        row.append(str(int(dataset.y[i])))
        row.extend(_fmt(v) for v in dataset.bcpd[i])
        row.append(split_names[i])
        lines.append(",".join(row))
    with open(csv_path, "w", newline="\n") as f:
        f.write("\n".join(lines) + "\n")

    meta = {
        "num_classes": c,
        "dim": d,
        "delta_mu": spec.delta_mu,
        "sigma": spec.sigma,
        "means": [[float(v) for v in row] for row in spec.means],
        "seed": int(seed),
        "n_samples": len(dataset),
        "split_sizes": dataset.split_sizes(),
        "bayes_accuracy": bayes_accuracy(dataset),
        "bayes_accuracy_by_split": {
            name: bayes_accuracy(dataset, name)
            for name in SPLIT_NAMES
            if dataset.indices(name).size
        },
    }
    with open(meta_path, "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")


def load_dataset(csv_path, meta_path) -> tuple[LabeledDataset, GaussianSpec, dict]:
    """Read back a dataset CSV plus sidecar; returns (dataset, spec, meta)."""
    with open(meta_path) as f:
        meta = json.load(f)
    spec = GaussianSpec(
        num_classes=meta["num_classes"],
        dim=meta["dim"],
        delta_mu=meta["delta_mu"],
        sigma=meta["sigma"],
        means=np.array(meta["means"], dtype=np.float64),
    )
    d, c = spec.dim, spec.num_classes
    with open(csv_path) as f:
        header = f.readline().strip().split(",")
        expected = [f"x_{i}" for i in range(d)] + ["y"] + [f"p_{i}" for i in range(c)] + ["split"]
        if header != expected:
            raise ValueError(f"unexpected dataset header in {csv_path}")
        xs, ys, ps, splits = [], [], [], []
        for line in f:
            parts = line.rstrip("\n").split(",")
            xs.append([float(v) for v in parts[:d]])
            ys.append(int(parts[d]))
            ps.append([float(v) for v in parts[d + 1 : d + 1 + c]])
            splits.append(_SPLIT_CODE[parts[-1]])
    dataset = LabeledDataset(
        x=np.array(xs, dtype=np.float64),
        y=np.array(ys, dtype=np.int64),
        bcpd=validate_prob_rows(np.array(ps, dtype=np.float64)),
        split=np.array(splits, dtype=np.int8),
    )
    return dataset, spec, meta
