"""Dense-array primitives shared by every other module.

Everything is float64. Randomness flows through Philox counter-based
generators so that a seed fully determines every downstream draw,
independent of platform. Sub-streams are derived from a root seed plus a
path of labels, never by reseeding from time or global state.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = [
    "make_rng",
    "derive_seed",
    "matmul",
    "log_sum_exp",
    "softmax",
    "gaussian_matrix",
    "validate_prob_rows",
]


def _key_part(part: int | str) -> int:
    """Map a stream-path component to a uint32 for a SeedSequence spawn key."""
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError(f"stream path ints must be non-negative, got {part}")
        return int(part) % (2**32)
    raise TypeError(f"stream path components must be int or str, got {type(part)!r}")


def make_rng(seed: int, *stream: int | str) -> np.random.Generator:
    """Philox generator for `seed`, descended into the sub-stream `stream`.

    The same (seed, stream) pair always yields the same draw sequence, on
    any platform. Distinct stream paths give statistically independent
    streams, which is how sweep runners hand one private generator to each
    experiment run.
    """
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key_part(p) for p in stream))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *stream: int | str) -> int:
    """A 63-bit integer seed for the sub-stream, for logging in records."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key_part(p) for p in stream))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with a pinned summation order.

    Accumulates rank-1 terms left-to-right over the inner dimension, so the
    result is bit-identical to the scalar triple loop on any IEEE-754
    machine. Use this where bitwise reproducibility across platforms
    matters; the training engine uses BLAS matmul instead (reproducible on
    a fixed platform, and far faster).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-D arrays, got {a.ndim}-D and {b.ndim}-D")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions disagree: {a.shape} x {b.shape}")
    out = np.zeros((a.shape[0], b.shape[1]))
    for k in range(a.shape[1]):
        out += a[:, k : k + 1] * b[k : k + 1, :]
    return out


def log_sum_exp(v: np.ndarray, axis: int | None = None) -> np.ndarray | float:
    """log(sum(exp(v))) computed via the max-shift trick.

    Finite for any finite input, no matter how large the entries are.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("log_sum_exp of an empty array")
    m = np.max(v, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(v - m), axis=axis, keepdims=True))
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Stable softmax along `axis`; rows land on the probability simplex."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def gaussian_matrix(
    rng: np.random.Generator,
    rows: int,
    cols: int,
    mean: float = 0.0,
    std: float = 1.0,
) -> np.ndarray:
    """(rows, cols) matrix of i.i.d. N(mean, std^2) draws from `rng`.

    Sampling uses numpy's ziggurat standard-normal on the Philox stream;
    the algorithm choice is frozen by golden-value tests.
    """
    if rows < 1 or cols < 1:
        raise ValueError(f"matrix shape must be positive, got {rows}x{cols}")
    if not std > 0:
        raise ValueError(f"std must be > 0, got {std}")
    return mean + std * rng.standard_normal((rows, cols))


def validate_prob_rows(p: np.ndarray, atol: float = 1e-9) -> np.ndarray:
    """Check rows of `p` are probability vectors; returns `p` as float64.

    Raises ValueError on negative entries or rows that do not sum to one
    within `atol`.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.ndim == 0 or p.shape[-1] < 1:
        raise ValueError("probability rows need at least one component")
    if np.any(p < 0):
        raise ValueError("probability entries must be non-negative")
    sums = p.sum(axis=-1)
    if not np.allclose(sums, 1.0, rtol=0.0, atol=atol):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise ValueError(f"probability rows must sum to 1 (worst deviation {worst:g})")
    return p
