"""A small dense ReLU network with hand-written forward and backward passes.

The model maps feature rows to logits through two hidden ReLU layers and a
linear output layer; the softmax lives in the losses, not here, so both
training losses see raw logits. Gradients come from an explicit chain rule
(`backward`) and are validated against central finite differences
(`grad_check`).

Layer contractions use numpy's BLAS matmul. Results are reproducible
bit-for-bit when re-run on the same platform and numpy build; the
order-pinned `tensor.matmul` exists for the places where cross-platform
bitwise agreement is required.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass

import numpy as np

from .tensor import softmax

__all__ = [
    "MlpModel",
    "ForwardCache",
    "Gradients",
    "init_params",
    "forward",
    "backward",
    "grad_check",
    "predict_proba",
    "predict_label",
    "save_model",
    "load_model",
]

_MAGIC = b"KDMLP\x01"


@dataclass
class MlpModel:
    """Dense layers as (fan_in, fan_out) weight matrices plus bias vectors.

    weights[i][j, k] connects input j of layer i to its output k, so the
    forward pass is x @ W + b. ReLU sits between layers, identity at the
    output.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def dims(self) -> tuple[int, ...]:
        """(input_dim, hidden..., num_classes)."""
        return (self.weights[0].shape[0], *(w.shape[1] for w in self.weights))

    @property
    def num_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)


@dataclass
class ForwardCache:
    """Intermediates of one forward pass, consumed by `backward`."""

    x: np.ndarray
    pre: list[np.ndarray]  # z_i, before ReLU (last entry = logits)
    post: list[np.ndarray]  # a_i, after ReLU (excludes logits)


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


def init_params(
    rng: np.random.Generator,
    input_dim: int,
    hidden_dim: int,
    num_classes: int,
    num_hidden: int = 2,
) -> MlpModel:
    """Fresh model with He-style fan-in uniform weights, zero biases.

    Each weight is drawn from U(-sqrt(6/fan_in), +sqrt(6/fan_in)), layer by
    layer in forward order, so a given generator state fixes the model
    bit-for-bit.
    """
    if min(input_dim, hidden_dim, num_classes) < 1 or num_hidden < 1:
        raise ValueError("all dimensions must be >= 1")
    dims = [input_dim] + [hidden_dim] * num_hidden + [num_classes]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights, biases)


def forward(model: MlpModel, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Logits for a (batch, input_dim) matrix, plus all intermediates."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.weights[0].shape[0]:
        raise ValueError(f"expected (batch, {model.weights[0].shape[0]}) input, got {x.shape}")
    pre, post = [], []
    a = x
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        pre.append(z)
        if i < last:
            a = np.maximum(z, 0.0)
            post.append(a)
    return pre[-1], ForwardCache(x=x, pre=pre, post=post)


def backward(model: MlpModel, cache: ForwardCache, dlogits: np.ndarray) -> Gradients:
    """Gradients of the forward map contracted with `dlogits`.

    The ReLU subgradient at exactly 0 is taken as 0, which keeps repeated
    runs bit-identical.
    """
    dlogits = np.asarray(dlogits, dtype=np.float64)
    if dlogits.shape != cache.pre[-1].shape:
        raise ValueError(f"dlogits {dlogits.shape} vs logits {cache.pre[-1].shape}")
    n_layers = len(model.weights)
    dws: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    dbs: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    d = dlogits
    for i in range(n_layers - 1, -1, -1):
        a_in = cache.x if i == 0 else cache.post[i - 1]
        dws[i] = a_in.T @ d
        dbs[i] = d.sum(axis=0)
        if i > 0:
            d = (d @ model.weights[i].T) * (cache.pre[i - 1] > 0)
    return Gradients(dws, dbs)


def _param_arrays(model: MlpModel) -> list[np.ndarray]:
    out = []
    for w, b in zip(model.weights, model.biases):
        out.extend((w, b))
    return out


def grad_check(
    model: MlpModel,
    loss_fn,
    x: np.ndarray,
    epsilon: float = 1e-5,
    max_coords: int = 200,
    rng: np.random.Generator | None = None,
) -> float:
    """Worst relative disagreement between analytic and numeric gradients.

    `loss_fn(logits) -> (loss, dlogits)` defines the objective. Analytic
    gradients come from `backward`; numeric ones from central differences
    (L(p+eps) - L(p-eps)) / 2 eps. When the model has more than
    `max_coords` parameters a random subsample of coordinates is checked
    (at least 200 by default), drawn from `rng`. Relative error per
    coordinate is |ga - gn| / max(1e-8, |ga| + |gn|).
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError(f"epsilon out of range: {epsilon}")
    logits, cache = forward(model, x)
    _, dlogits = loss_fn(logits)
    grads = backward(model, cache, dlogits)
    g_arrays = _param_arrays(Gradients(grads.weights, grads.biases))  # type: ignore[arg-type]
    p_arrays = _param_arrays(model)

    sizes = [p.size for p in p_arrays]
    total = sum(sizes)
    if total <= max_coords:
        coords = np.arange(total)
    else:
        if rng is None:
            raise ValueError("rng required when subsampling coordinates")
        coords = rng.choice(total, size=max_coords, replace=False)

    offsets = np.cumsum([0] + sizes)

    def loss_at() -> float:
        z, _ = forward(model, x)
        return loss_fn(z)[0]

    worst = 0.0
    for c in coords:
        which = int(np.searchsorted(offsets, c, side="right") - 1)
        flat = p_arrays[which].reshape(-1)
        j = int(c - offsets[which])
        orig = flat[j]
        flat[j] = orig + epsilon
        lp = loss_at()
        flat[j] = orig - epsilon
        lm = loss_at()
        flat[j] = orig
        g_fd = (lp - lm) / (2.0 * epsilon)
        g_an = float(g_arrays[which].reshape(-1)[j])
        rel = abs(g_an - g_fd) / max(1e-8, abs(g_an) + abs(g_fd))
        worst = max(worst, rel)
    return worst


def predict_proba(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Row-wise softmax of the forward logits."""
    logits, _ = forward(model, x)
    return softmax(logits)


def predict_label(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Argmax class per row; ties break toward the lowest index."""
    logits, _ = forward(model, x)
    return np.argmax(logits, axis=1)


def save_model(model: MlpModel, path) -> None:
    """Serialize to a flat binary file.

    Layout: magic, int64 layer count, int64 dims, then per layer the
    row-major float64 weight block followed by the bias block. Everything
    little-endian, so the round trip is bit-exact anywhere.
    """
    dims = model.dims
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<q", len(model.weights)))
    buf.write(struct.pack(f"<{len(dims)}q", *dims))
    for w, b in zip(model.weights, model.biases):
        buf.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
        buf.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_model(path) -> MlpModel:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[: len(_MAGIC)] != _MAGIC:
        raise ValueError(f"not a model checkpoint: {path}")
    off = len(_MAGIC)
    (n_layers,) = struct.unpack_from("<q", raw, off)
    off += 8
    dims = struct.unpack_from(f"<{n_layers + 1}q", raw, off)
    off += 8 * (n_layers + 1)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        w = np.frombuffer(raw, dtype="<f8", count=fan_in * fan_out, offset=off)
        off += 8 * fan_in * fan_out
        b = np.frombuffer(raw, dtype="<f8", count=fan_out, offset=off)
        off += 8 * fan_out
        weights.append(w.reshape(fan_in, fan_out).astype(np.float64))
        biases.append(b.astype(np.float64))
    if off != len(raw):
        raise ValueError(f"trailing bytes in checkpoint: {path}")
    return MlpModel(weights, biases)
