"""Experiment protocols: training runs, sweeps, and correlation analysis.

Four protocols are implemented on top of the shared trainer:

* a noise sweep that distills students from perturbed copies of the exact
  posterior and relates student accuracy to the perturbation's distance
  from it in the squared-error and cross-entropy senses,
* a teacher comparison that trains replicate teachers under each loss,
  distills a student from every teacher, and contrasts the two groups,
* a semi-supervised variant where the teacher pseudo-labels the unlabeled
  part of the training split,
* the same teacher comparison on a two-class dataset.

Every run derives its generators from the root seed plus a fixed label
path, so records are reproducible bit-for-bit and independent of how runs
are grouped into stacks or spread over worker processes.
"""

from __future__ import annotations

import dataclasses
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import t as student_t

from . import data as datamod
from . import engine, mlp
from .losses import (
    LossKind,
    TargetDistribution,
    _tempered,
    ce_distance,
    effective_temperature,
    mse_distance,
    one_hot,
)
from .tensor import derive_seed, make_rng, softmax

__all__ = [
    "TrainConfig",
    "TrainHistory",
    "ExperimentRecord",
    "train_model",
    "evaluate_accuracy",
    "evaluate_distance_to_bcpd",
    "default_noise_grid",
    "run_set1",
    "run_set2",
    "run_semi_supervised",
    "run_binary",
    "correlation",
    "correlation_values",
    "welch_one_sided",
    "write_records",
    "read_records",
    "RESULT_COLUMNS",
]


@dataclass(frozen=True)
class TrainConfig:
    """One training run's knobs. Defaults follow the lab protocol."""

    loss_kind: LossKind = LossKind.CE
    learning_rate: float = 5e-4
    batch_size: int = 32
    epochs: int = 100
    seed: int = 0
    temperature: float = 1.0
    hidden_dim: int = 128
    num_hidden: int = 2

    def __post_init__(self):
        object.__setattr__(self, "loss_kind", LossKind(self.loss_kind))
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if not self.temperature > 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")

    def replace(self, **kw) -> "TrainConfig":
        return dataclasses.replace(self, **kw)


@dataclass
class TrainHistory:
    """Per-epoch train loss plus validation loss and accuracy."""

    train_loss: np.ndarray
    val_loss: np.ndarray
    val_accuracy: np.ndarray

    def __len__(self) -> int:
        return len(self.train_loss)


@dataclass
class ExperimentRecord:
    """One supervision-source -> trained-student outcome."""

    run_id: str
    provenance: str  # noisy_bcpd | teacher | exact_bcpd | one_hot
    noise_scale: float | None
    teacher_loss: LossKind | None
    replicate: int | None
    mse_to_bcpd: float
    ce_to_bcpd: float
    teacher_test_acc: float | None
    student_test_acc: float
    seed: int


def _split_xy(dataset: datamod.LabeledDataset, split: str) -> tuple[np.ndarray, np.ndarray]:
    idx = dataset.indices(split)
    return dataset.x[idx], dataset.y[idx]


def train_model(
    cfg: TrainConfig,
    dataset: datamod.LabeledDataset,
    targets: TargetDistribution,
    rng: np.random.Generator | None = None,
) -> tuple[mlp.MlpModel, TrainHistory]:
    """Plain SGD on the train split; returns the final model and history.

    `targets` rows align with `dataset.indices("train")` order. The single
    generator drives initialization first and then one shuffle per epoch;
    by default it is seeded from cfg.seed, so identical (cfg, dataset,
    targets) reproduce the run exactly. Validation metrics in the history
    are monitoring only; no model selection happens.
    """
    train_idx = dataset.indices("train")
    if len(targets) != len(train_idx):
        raise ValueError(f"targets cover {len(targets)} rows, train split has {len(train_idx)}")
    if targets.num_classes != dataset.num_classes:
        raise ValueError("target and dataset class counts disagree")
    if rng is None:
        rng = make_rng(cfg.seed)
    x_val, y_val = _split_xy(dataset, "val")
    temp = effective_temperature(targets, cfg.temperature)
    models, tr, vl, va = engine.train_stack(
        dataset.x[train_idx],
        _tempered(targets, cfg.temperature)[None],
        cfg.loss_kind,
        [rng],
        learning_rate=cfg.learning_rate,
        batch_size=cfg.batch_size,
        epochs=cfg.epochs,
        temperature=temp,
        hidden_dim=cfg.hidden_dim,
        num_hidden=cfg.num_hidden,
        x_val=x_val,
        y_val=y_val,
    )
    return models[0], TrainHistory(tr[0], vl[0], va[0])


def evaluate_accuracy(model: mlp.MlpModel, dataset: datamod.LabeledDataset, split: str) -> float:
    """Fraction of samples in `split` whose predicted label is correct."""
    idx = dataset.indices(split)
    if idx.size == 0:
        raise ValueError(f"split {split!r} is empty")
    return float((mlp.predict_label(model, dataset.x[idx]) == dataset.y[idx]).mean())


def evaluate_distance_to_bcpd(
    model: mlp.MlpModel, dataset: datamod.LabeledDataset, split: str
) -> tuple[float, float]:
    """Mean squared-error and cross-entropy from model output to the exact
    posterior over `split`."""
    idx = dataset.indices(split)
    if idx.size == 0:
        raise ValueError(f"split {split!r} is empty")
    probs = mlp.predict_proba(model, dataset.x[idx])
    ref = dataset.bcpd[idx]
    return float(np.mean(mse_distance(ref, probs))), float(np.mean(ce_distance(ref, probs)))


def default_noise_grid(n: int = 100, lo: float = 0.3, hi: float = 3.0) -> np.ndarray:
    """Log-spaced perturbation scales for the noise sweep.

    The floor sits where the perturbations start moving student accuracy
    at the fast profile; scales much below it produce supervision the
    training run cannot distinguish from the exact posterior, which only
    adds rank noise to the sweep.
    """
    return np.geomspace(lo, hi, n)


# Perturbation styles cycled across the noise sweep. Per-example noise
# ("gauss") mostly averages out during training, so the sweep leans on
# systematic distortions: "bias" shifts all rows by one shared random
# log-space offset per run (students inherit the shifted posterior, so
# accuracy tracks the distortion), and "truncate" zeroes out small
# posterior entries (argmax kept, squared-error distance tiny,
# cross-entropy distance huge, student accuracy unharmed). The mix is what
# decouples the two distance axes' rank orders.
SET1_STYLES: tuple[str, ...] = ("bias", "bias", "bias", "truncate")

# truncation threshold per unit of grid scale; at the grid ceiling it
# removes coordinates up to 0.3, which tops the cross-entropy axis while
# the squared-error distance stays under 0.1
_TRUNCATE_PER_SCALE = 0.1


def _perturb(style: str, rng: np.random.Generator, bcpd: np.ndarray, scale: float) -> np.ndarray:
    if style == "gauss":
        return datamod.perturb_bcpd(rng, bcpd, scale)
    if style == "bias":
        offset = scale * rng.standard_normal(bcpd.shape[-1])
        return softmax(np.log(np.maximum(bcpd, datamod.PROB_FLOOR)) + offset)
    if style == "truncate":
        return datamod.truncate_bcpd(bcpd, _TRUNCATE_PER_SCALE * scale)
    if style == "sharpen":
        return datamod.sharpen_bcpd(bcpd, scale)
    if style == "smooth":
        return datamod.blend_uniform(bcpd, 1.0 - np.exp(-scale))
    raise ValueError(f"unknown perturbation style {style!r}")


def _train_group(
    cfg: TrainConfig,
    dataset: datamod.LabeledDataset,
    target_stack: np.ndarray,
    kind: LossKind,
    rngs: list[np.random.Generator],
) -> list[mlp.MlpModel]:
    train_idx = dataset.indices("train")
    x_val, y_val = _split_xy(dataset, "val")
    models, _, _, _ = engine.train_stack(
        dataset.x[train_idx],
        target_stack,
        kind,
        rngs,
        learning_rate=cfg.learning_rate,
        batch_size=cfg.batch_size,
        epochs=cfg.epochs,
        temperature=cfg.temperature,
        hidden_dim=cfg.hidden_dim,
        num_hidden=cfg.num_hidden,
        x_val=x_val,
        y_val=y_val,
    )
    return models


_POOL_CTX: dict = {}


def _pool_init(ctx: dict) -> None:
    _POOL_CTX.update(ctx)
    # one BLAS thread per worker: concurrent workers otherwise oversubscribe
    # the cores and all of them slow down
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(limits=1)
    except ImportError:
        pass


def _set1_chunk_worker(indices: list[int]) -> list[ExperimentRecord]:
    c = _POOL_CTX
    return _set1_chunk(c["cfg"], c["dataset"], c["grid"], c["styles"], indices)


def _set1_chunk(
    cfg: TrainConfig,
    dataset: datamod.LabeledDataset,
    grid: np.ndarray,
    styles: tuple[str, ...],
    indices: list[int],
) -> list[ExperimentRecord]:
    """Train the students for one chunk of the noise grid."""
    train_idx = dataset.indices("train")
    bcpd_train = dataset.bcpd[train_idx]
    stacks, rngs, dists = [], [], []
    for i in indices:
        style = styles[i % len(styles)]
        noise_rng = make_rng(cfg.seed, "set1", "noise", i)
        perturbed = _perturb(style, noise_rng, bcpd_train, float(grid[i]))
        dists.append(
            (
                float(np.mean(mse_distance(bcpd_train, perturbed))),
                float(np.mean(ce_distance(bcpd_train, perturbed))),
            )
        )
        stacks.append(perturbed)
        rngs.append(make_rng(cfg.seed, "set1", "student", i))
    models = _train_group(cfg, dataset, np.stack(stacks), LossKind.CE, rngs)
    records = []
    for pos, i in enumerate(indices):
        records.append(
            ExperimentRecord(
                run_id=f"set1-{i:03d}",
                provenance="noisy_bcpd",
                noise_scale=float(grid[i]),
                teacher_loss=None,
                replicate=i,
                mse_to_bcpd=dists[pos][0],
                ce_to_bcpd=dists[pos][1],
                teacher_test_acc=None,
                student_test_acc=evaluate_accuracy(models[pos], dataset, "test"),
                seed=derive_seed(cfg.seed, "set1", "student", i),
            )
        )
    return records


def run_set1(
    base_cfg: TrainConfig,
    dataset: datamod.LabeledDataset,
    noise_grid: np.ndarray | None = None,
    *,
    styles: tuple[str, ...] = SET1_STYLES,
    chunk_size: int = 10,
    jobs: int = 1,
) -> list[ExperimentRecord]:
    """Distill one student per noise scale from a perturbed posterior.

    Supervision is the perturbed posterior over the train split (soft
    cross-entropy); the recorded distances compare those supervision rows
    to the exact posterior on the same split. Students are trained in
    stacks of `chunk_size`, optionally across `jobs` processes; records
    come back in grid order regardless.
    """
    grid = default_noise_grid() if noise_grid is None else np.asarray(noise_grid, dtype=np.float64)
    if grid.size == 0:
        raise ValueError("noise grid is empty")
    chunks = [
        list(range(s, min(s + chunk_size, grid.size))) for s in range(0, grid.size, chunk_size)
    ]
    if jobs > 1:
        ctx = {"cfg": base_cfg, "dataset": dataset, "grid": grid, "styles": tuple(styles)}
        with ProcessPoolExecutor(max_workers=jobs, initializer=_pool_init, initargs=(ctx,)) as ex:
            parts = list(ex.map(_set1_chunk_worker, chunks))
    else:
        parts = [_set1_chunk(base_cfg, dataset, grid, tuple(styles), ch) for ch in chunks]
    return [rec for part in parts for rec in part]


def _teacher_soft_targets(
    models: list[mlp.MlpModel], dataset: datamod.LabeledDataset
) -> np.ndarray:
    train_idx = dataset.indices("train")
    return np.stack([mlp.predict_proba(m, dataset.x[train_idx]) for m in models])


def _set2_kind_worker(kind_value: str) -> list[ExperimentRecord]:
    c = _POOL_CTX
    return _set2_one_kind(
        c["cfg"], c["dataset"], LossKind(kind_value), c["repeats"], c["tag"], c["teacher_epochs"]
    )


def _set2_one_kind(
    cfg: TrainConfig,
    dataset: datamod.LabeledDataset,
    kind: LossKind,
    repeats: int,
    tag: str,
    teacher_epochs: int | None = None,
) -> list[ExperimentRecord]:
    """Teachers under one loss, then one distilled student per teacher."""
    train_idx = dataset.indices("train")
    onehot_stack = np.broadcast_to(
        one_hot(dataset.y[train_idx], dataset.num_classes), (repeats, len(train_idx), dataset.num_classes)
    )
    # teacher streams are labeled by replicate only, so both loss kinds
    # start from identical weights and see identical batch orders
    teacher_rngs = [make_rng(cfg.seed, tag, "teacher", r) for r in range(repeats)]
    teacher_cfg = cfg.replace(loss_kind=kind, epochs=teacher_epochs or cfg.epochs)
    teachers = _train_group(teacher_cfg, dataset, onehot_stack, kind, teacher_rngs)

    student_rngs = [make_rng(cfg.seed, tag, "student", r) for r in range(repeats)]
    soft = _teacher_soft_targets(teachers, dataset)
    students = _train_group(cfg, dataset, soft, LossKind.CE, student_rngs)

    records = []
    for r in range(repeats):
        mse_d, ce_d = evaluate_distance_to_bcpd(teachers[r], dataset, "test")
        records.append(
            ExperimentRecord(
                run_id=f"{tag}-{kind.value}-{r:02d}",
                provenance="teacher",
                noise_scale=None,
                teacher_loss=kind,
                replicate=r,
                mse_to_bcpd=mse_d,
                ce_to_bcpd=ce_d,
                teacher_test_acc=evaluate_accuracy(teachers[r], dataset, "test"),
                student_test_acc=evaluate_accuracy(students[r], dataset, "test"),
                seed=derive_seed(cfg.seed, tag, "student", r),
            )
        )
    return records


def run_set2(
    base_cfg: TrainConfig,
    dataset: datamod.LabeledDataset,
    repeats: int = 10,
    *,
    teacher_epochs: int | None = None,
    jobs: int = 1,
    stream_tag: str = "set2",
) -> list[ExperimentRecord]:
    """Replicate teachers per loss kind, one distilled student from each.

    Teacher distances to the exact posterior are measured on the test
    split (that is the generalization the student inherits); students are
    always distilled with soft cross-entropy. `teacher_epochs` lets the
    teachers train longer than the students: with plain constant-rate SGD
    the squared-error teacher needs more steps than the cross-entropy one
    before the two groups' proximity senses separate. Records list all
    cross-entropy-teacher replicates first, then the squared-error ones.
    """
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")
    kinds = [LossKind.CE, LossKind.MSE]
    if jobs > 1:
        ctx = {
            "cfg": base_cfg,
            "dataset": dataset,
            "repeats": repeats,
            "tag": stream_tag,
            "teacher_epochs": teacher_epochs,
        }
        with ProcessPoolExecutor(max_workers=min(jobs, 2), initializer=_pool_init, initargs=(ctx,)) as ex:
            parts = list(ex.map(_set2_kind_worker, [k.value for k in kinds]))
    else:
        parts = [
            _set2_one_kind(base_cfg, dataset, k, repeats, stream_tag, teacher_epochs)
            for k in kinds
        ]
    return [rec for part in parts for rec in part]


def run_semi_supervised(
    base_cfg: TrainConfig,
    dataset: datamod.LabeledDataset,
    labeled_fraction: float,
    teacher_loss: LossKind,
    *,
    teacher_epochs: int | None = None,
    soft_on_labeled: bool = False,
) -> ExperimentRecord:
    """Teacher trained on a labeled slice pseudo-labels the rest.

    The labeled subset, teacher initialization, and student initialization
    are all derived from (seed, fraction) and not from the teacher loss, so
    the two teacher kinds are compared on identical folds. The student sees
    one-hot targets on the labeled rows and the teacher's soft outputs on
    the unlabeled ones (or teacher outputs everywhere with
    `soft_on_labeled`). `teacher_epochs` stretches only the teacher's
    schedule, which the small labeled folds often need.
    """
    if not 0.0 < labeled_fraction <= 1.0:
        raise ValueError(f"labeled_fraction must be in (0, 1], got {labeled_fraction}")
    teacher_loss = LossKind(teacher_loss)
    train_idx = dataset.indices("train")
    n_train = len(train_idx)
    n_lab = int(round(labeled_fraction * n_train))
    if n_lab < base_cfg.batch_size:
        raise ValueError(
            f"labeled subset ({n_lab}) smaller than one batch ({base_cfg.batch_size})"
        )
    frac_key = int(round(labeled_fraction * 10**9))
    subset_rng = make_rng(base_cfg.seed, "semi", "subset", frac_key)
    order = subset_rng.permutation(n_train)
    lab_pos, unlab_pos = order[:n_lab], order[n_lab:]

    c = dataset.num_classes
    x_train = dataset.x[train_idx]
    x_val, y_val = _split_xy(dataset, "val")
    teacher_rng = make_rng(base_cfg.seed, "semi", "teacher", frac_key)
    teacher_targets = one_hot(dataset.y[train_idx][lab_pos], c)
    teachers, _, _, _ = engine.train_stack(
        x_train[lab_pos],
        teacher_targets[None],
        teacher_loss,
        [teacher_rng],
        learning_rate=base_cfg.learning_rate,
        batch_size=base_cfg.batch_size,
        epochs=teacher_epochs or base_cfg.epochs,
        temperature=base_cfg.temperature,
        hidden_dim=base_cfg.hidden_dim,
        num_hidden=base_cfg.num_hidden,
        x_val=x_val,
        y_val=y_val,
    )
    teacher = teachers[0]

    student_probs = np.empty((n_train, c))
    if soft_on_labeled:
        student_probs[:] = mlp.predict_proba(teacher, x_train)
        hard = np.zeros(n_train, dtype=bool)
    else:
        student_probs[lab_pos] = teacher_targets
        if unlab_pos.size:
            student_probs[unlab_pos] = mlp.predict_proba(teacher, x_train[unlab_pos])
        hard = np.zeros(n_train, dtype=bool)
        hard[lab_pos] = True
    targets = TargetDistribution(student_probs, hard)

    student_rng = make_rng(base_cfg.seed, "semi", "student", frac_key)
    student, _ = train_model(base_cfg.replace(loss_kind=LossKind.CE), dataset, targets, student_rng)

    mse_d, ce_d = evaluate_distance_to_bcpd(teacher, dataset, "test")
    return ExperimentRecord(
        run_id=f"semi-f{labeled_fraction:g}-{teacher_loss.value}-s{base_cfg.seed}",
        provenance="teacher",
        noise_scale=None,
        teacher_loss=teacher_loss,
        replicate=None,
        mse_to_bcpd=mse_d,
        ce_to_bcpd=ce_d,
        teacher_test_acc=evaluate_accuracy(teacher, dataset, "test"),
        student_test_acc=evaluate_accuracy(student, dataset, "test"),
        seed=derive_seed(base_cfg.seed, "semi", "student", frac_key),
    )


def run_binary(
    base_cfg: TrainConfig,
    *,
    repeats: int = 5,
    n_samples: int = 20_000,
    dim: int = 30,
    delta_mu: float = 1.0,
    sigma: float = 4.0,
    ratios: tuple[float, float, float] = (0.9, 0.05, 0.05),
    teacher_epochs: int | None = None,
    jobs: int = 1,
) -> list[ExperimentRecord]:
    """Teacher-comparison protocol on a self-generated two-class dataset."""
    spec = datamod.make_spec(
        make_rng(base_cfg.seed, "binary", "spec"), num_classes=2, dim=dim, delta_mu=delta_mu, sigma=sigma
    )
    ds = datamod.sample_dataset(make_rng(base_cfg.seed, "binary", "data"), spec, n_samples)
    ds = datamod.split_dataset(make_rng(base_cfg.seed, "binary", "split"), ds, ratios)
    return run_set2(
        base_cfg, ds, repeats, teacher_epochs=teacher_epochs, jobs=jobs, stream_tag="binary"
    )


def _avg_ranks(v: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties assigned their group's mean rank."""
    order = np.argsort(v, kind="stable")
    ranks = np.empty(len(v))
    sv = v[order]
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def correlation_values(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """(Pearson, Spearman) for paired samples; zero variance is an error."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("need two 1-D arrays of equal length")
    if x.size < 3:
        raise ValueError(f"need at least 3 points, got {x.size}")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise ValueError("zero variance input")

    def pearson(a, b):
        a = a - a.mean()
        b = b - b.mean()
        return float((a * b).sum() / np.sqrt((a * a).sum() * (b * b).sum()))

    return pearson(x, y), pearson(_avg_ranks(x), _avg_ranks(y))


def correlation(records: list[ExperimentRecord], x_field: str, y_field: str) -> tuple[float, float]:
    """(Pearson, Spearman) between two numeric record fields."""
    x = np.array([getattr(r, x_field) for r in records], dtype=np.float64)
    y = np.array([getattr(r, y_field) for r in records], dtype=np.float64)
    return correlation_values(x, y)


def welch_one_sided(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """Welch t-test of mean(a) > mean(b); returns (statistic, p-value)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("need at least 2 samples per group")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    sa, sb = va / a.size, vb / b.size
    denom = np.sqrt(sa + sb)
    if denom == 0:
        raise ValueError("zero variance in both groups")
    t_stat = (a.mean() - b.mean()) / denom
    dof = (sa + sb) ** 2 / (sa**2 / (a.size - 1) + sb**2 / (b.size - 1))
    return float(t_stat), float(student_t.sf(t_stat, dof))


RESULT_COLUMNS = (
    "run_id",
    "provenance",
    "noise_scale",
    "teacher_loss",
    "replicate",
    "mse_to_bcpd",
    "ce_to_bcpd",
    "teacher_test_acc",
    "student_test_acc",
    "seed",
)

_CONVENTION_LINES = (
    "# kdlab results v1",
    "# mse_to_bcpd: squared Euclidean distance on the simplex (no 1/C factor)",
    "# ce_to_bcpd: -sum p*[c] ln q[c], natural log, q clamped below at 1e-12",
    "# noisy_bcpd rows: supervision targets vs exact posterior on the train split",
    "# teacher rows: teacher output vs exact posterior on the test split",
)


def write_records(records: list[ExperimentRecord], path, extra_comments: tuple[str, ...] = ()) -> None:
    """Write records as CSV with a commented convention header."""

    def cell(v) -> str:
        if v is None:
            return ""
        if isinstance(v, LossKind):
            return v.value
        if isinstance(v, float):
            return repr(v)
        return str(v)

    lines = list(_CONVENTION_LINES)
    lines.extend(f"# {c}" for c in extra_comments)
    lines.append(",".join(RESULT_COLUMNS))
    for r in records:
        lines.append(",".join(cell(getattr(r, col)) for col in RESULT_COLUMNS))
    with open(path, "w", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def append_records(records: list[ExperimentRecord], path) -> None:
    """Append record rows, creating the file with its header if needed."""
    if not os.path.exists(path):
        write_records(records, path)
        return
    read_records(path)  # validates the existing header before appending

    def cell(v) -> str:
        if v is None:
            return ""
        if isinstance(v, LossKind):
            return v.value
        if isinstance(v, float):
            return repr(v)
        return str(v)

    with open(path, "a", newline="\n") as f:
        for r in records:
            f.write(",".join(cell(getattr(r, col)) for col in RESULT_COLUMNS) + "\n")


def read_records(path) -> list[ExperimentRecord]:
    """Read a results CSV written by `write_records` (or rows appended to it)."""
    records = []
    with open(path) as f:
        header = None
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split(",")
                if tuple(header) != RESULT_COLUMNS:
                    raise ValueError(f"{path}:{line_no}: unexpected results header")
                continue
            parts = line.split(",")
            if len(parts) != len(RESULT_COLUMNS):
                raise ValueError(f"{path}:{line_no}: expected {len(RESULT_COLUMNS)} cells")
            records.append(
                ExperimentRecord(
                    run_id=parts[0],
                    provenance=parts[1],
                    noise_scale=float(parts[2]) if parts[2] else None,
                    teacher_loss=LossKind(parts[3]) if parts[3] else None,
                    replicate=int(parts[4]) if parts[4] else None,
                    mse_to_bcpd=float(parts[5]),
                    ce_to_bcpd=float(parts[6]),
                    teacher_test_acc=float(parts[7]) if parts[7] else None,
                    student_test_acc=float(parts[8]),
                    seed=int(parts[9]),
                )
            )
    if header is None:
        raise ValueError(f"{path}: no header row")
    return records
