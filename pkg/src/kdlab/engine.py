"""Mini-batch SGD trainer that advances many replicate networks at once.

Sweeps train tens of identical-architecture networks that differ only in
initialization, batch order, and supervision targets. Advancing a stack of
K such networks through the same schedule turns ~30 tiny numpy calls per
network per step into ~30 calls per step total, which is what makes the
laptop-scale sweeps fit their time budgets.

Every network in a stack owns a private generator: its initialization and
its epoch shuffles are drawn exactly as a lone `train_model` run would draw
them, so results do not depend on how runs are grouped into stacks. Loss
and gradient arithmetic mirrors `losses.ce_loss_and_grad` /
`losses.mse_loss_and_grad` operation for operation; the equivalence is
pinned by tests.
"""

from __future__ import annotations

import numpy as np

from . import mlp
from .losses import LossKind

__all__ = ["train_stack", "stack_forward"]


def _init_stack(
    rngs: list[np.random.Generator], input_dim: int, hidden_dim: int, num_classes: int, num_hidden: int
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Stacked parameters, initialized per run exactly like mlp.init_params."""
    models = [mlp.init_params(r, input_dim, hidden_dim, num_classes, num_hidden) for r in rngs]
    n_layers = len(models[0].weights)
    ws = [np.stack([m.weights[i] for m in models]) for i in range(n_layers)]
    bs = [np.stack([m.biases[i] for m in models])[:, None, :] for i in range(n_layers)]
    return ws, bs


def stack_forward(ws: list[np.ndarray], bs: list[np.ndarray], x: np.ndarray) -> np.ndarray:
    """Logits (K, n, C) for shared input rows x (n, d)."""
    a = x
    last = len(ws) - 1
    for i, (w, b) in enumerate(zip(ws, bs)):
        z = np.matmul(a, w) + b
        a = np.maximum(z, 0.0) if i < last else z
    return a


def _eval_split(
    ws, bs, x: np.ndarray, y_onehot: np.ndarray, labels: np.ndarray, kind: LossKind
) -> tuple[np.ndarray, np.ndarray]:
    """Per-run (loss, accuracy) on a monitoring split, temperature 1."""
    z = stack_forward(ws, bs, x)
    m = z.max(axis=2, keepdims=True)
    e = np.exp(z - m)
    se = e.sum(axis=2, keepdims=True)
    if kind is LossKind.CE:
        lse = m[:, :, 0] + np.log(se[:, :, 0])
        loss = (lse - (y_onehot * z).sum(axis=2)).mean(axis=1)
    else:
        loss = np.square(e / se - y_onehot).sum(axis=2).mean(axis=1)
    acc = (z.argmax(axis=2) == labels).mean(axis=1)
    return loss, acc


def train_stack(
    x_train: np.ndarray,
    targets: np.ndarray,
    loss_kind: LossKind,
    rngs: list[np.random.Generator],
    *,
    learning_rate: float,
    batch_size: int,
    epochs: int,
    temperature: float = 1.0,
    hidden_dim: int = 128,
    num_hidden: int = 2,
    x_val: np.ndarray | None = None,
    y_val: np.ndarray | None = None,
) -> tuple[list[mlp.MlpModel], np.ndarray, np.ndarray, np.ndarray]:
    """Train K networks in lockstep; targets has shape (K, n_train, C).

    Target rows are used as given (any temperature softening of soft
    targets happens in the caller); `temperature` rescales student logits
    inside the loss. Per epoch each run reshuffles the training rows with
    its own generator; the last short batch is used, not dropped.

    Returns (models, train_loss, val_loss, val_accuracy), the arrays shaped
    (K, epochs). Validation metrics are NaN when no validation split is
    given; they are monitoring only and never influence the updates.
    """
    kind = LossKind(loss_kind)
    n, d = x_train.shape
    k_runs, n_t, c = targets.shape
    if n_t != n:
        raise ValueError(f"targets cover {n_t} rows but train split has {n}")
    if len(rngs) != k_runs:
        raise ValueError(f"{k_runs} runs need {k_runs} generators, got {len(rngs)}")
    if batch_size < 1 or epochs < 1 or learning_rate < 0 or not temperature > 0:
        raise ValueError("invalid schedule: need lr >= 0, batch_size >= 1, epochs >= 1, T > 0")

    ws, bs = _init_stack(rngs, d, hidden_dim, c, num_hidden)
    n_layers = len(ws)
    rows = np.arange(k_runs)[:, None]
    y_val_onehot = None
    if x_val is not None and y_val is not None and len(x_val):
        y_val_onehot = np.zeros((len(y_val), c))
        y_val_onehot[np.arange(len(y_val)), y_val] = 1.0

    train_loss = np.full((k_runs, epochs), np.nan)
    val_loss = np.full((k_runs, epochs), np.nan)
    val_acc = np.full((k_runs, epochs), np.nan)
    perms = np.empty((k_runs, n), dtype=np.int64)
    dims = [w.shape[2] for w in ws]
    dw_bufs = [np.empty_like(w) for w in ws]
    # activation/delta buffers per batch length (full batches plus one
    # short remainder); reusing them keeps the hot loop allocation-free
    bufs: dict[int, dict] = {}

    def _batch_bufs(b: int) -> dict:
        if b not in bufs:
            bufs[b] = {
                "z": [np.empty((k_runs, b, width)) for width in dims],
                "d": [np.empty((k_runs, b, width)) for width in dims],
                "mask": [np.empty((k_runs, b, width), dtype=bool) for width in dims[:-1]],
                "e": np.empty((k_runs, b, dims[-1])),
            }
        return bufs[b]

    for epoch in range(epochs):
        for k in range(k_runs):
            perms[k] = rngs[k].permutation(n)
        loss_sum = np.zeros(k_runs)
        for start in range(0, n, batch_size):
            idx = perms[:, start : start + batch_size]
            b = idx.shape[1]
            buf = _batch_bufs(b)
            xb = x_train[idx]
            tb = targets[rows, idx]

            acts = [xb]
            a = xb
            for i in range(n_layers):
                z = np.matmul(a, ws[i], out=buf["z"][i])
                z += bs[i]
                if i < n_layers - 1:
                    a = np.maximum(z, 0.0, out=z)
                    acts.append(a)
                else:
                    a = z
            # divide, never multiply by the reciprocal: the loss functions
            # divide, and the two differ in the last ulp
            z_out = a if temperature == 1.0 else a / temperature

            m = z_out.max(axis=2, keepdims=True)
            e = np.subtract(z_out, m, out=buf["e"])
            np.exp(e, out=e)
            se = e.sum(axis=2, keepdims=True)
            delta = buf["d"][n_layers - 1]
            if kind is LossKind.CE:
                lse = m[:, :, 0] + np.log(se[:, :, 0])
                loss_sum += (lse - (tb * z_out).sum(axis=2)).sum(axis=1)
                np.divide(e, se, out=delta)
                delta -= tb
                delta /= b * temperature
            else:
                p = np.divide(e, se, out=e)
                diff = p - tb
                loss_sum += np.square(diff).sum(axis=2).sum(axis=1)
                g = (2.0 / b) * diff
                pg = np.multiply(p, g, out=g)
                np.subtract(pg, pg.sum(axis=2, keepdims=True) * p, out=delta)
                delta /= temperature

            for i in range(n_layers - 1, -1, -1):
                dw = np.matmul(acts[i].transpose(0, 2, 1), delta, out=dw_bufs[i])
                db = delta.sum(axis=1, keepdims=True)
                if i > 0:
                    # next delta must see the pre-update weights
                    nxt = np.matmul(delta, ws[i].transpose(0, 2, 1), out=buf["d"][i - 1])
                    mask = np.greater(acts[i], 0.0, out=buf["mask"][i - 1])
                    nxt *= mask
                    delta = nxt
                dw *= learning_rate
                ws[i] -= dw
                db *= learning_rate
                bs[i] -= db
        train_loss[:, epoch] = loss_sum / n
        if y_val_onehot is not None:
            val_loss[:, epoch], val_acc[:, epoch] = _eval_split(
                ws, bs, x_val, y_val_onehot, y_val, kind
            )

    models = [
        mlp.MlpModel(
            weights=[np.ascontiguousarray(w[k]) for w in ws],
            biases=[np.ascontiguousarray(b[k, 0]) for b in bs],
        )
        for k in range(k_runs)
    ]
    return models, train_loss, val_loss, val_acc
