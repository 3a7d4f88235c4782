"""Dense layer primitives with explicit reverse-mode rules.

Each operation returns ``(output, backward)`` where ``backward`` maps the
loss gradient at the output to gradients at the inputs, in argument order.
There is no general tape here: models assemble these closures themselves
and walk them in reverse. All math is float64 unless callers pass float32.
"""

import math

import numpy as np


class Parameter:
    """Trainable matrix plus gradient accumulator.

    ``grad`` is None until a backward pass deposits into it; the optimizer
    consumes it and resets it to None, so a step without a preceding
    backward pass is detectable.
    """

    def __init__(self, value: np.ndarray, name: str = ""):
        self.value = np.ascontiguousarray(value, dtype=np.float64)
        if self.value.ndim != 2:
            raise ValueError(f"parameters are 2-D, got shape {self.value.shape}")
        self.name = name
        self.grad: np.ndarray | None = None

    @property
    def shape(self):
        return self.value.shape

    def add_grad(self, g: np.ndarray) -> None:
        if g.shape != self.value.shape:
            raise ValueError(f"gradient shape {g.shape} != value shape {self.value.shape}")
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


def matmul(a: np.ndarray, b: np.ndarray):
    """out = a @ b;  backward: (d @ b.T, a.T @ d)."""
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    out = a @ b

    def backward(d_out):
        return d_out @ b.T, a.T @ d_out

    return out, backward


def add_bias(x: np.ndarray, b: np.ndarray):
    """out = x + b for a (1, d) bias row; backward sums over rows."""
    if b.shape != (1, x.shape[1]):
        raise ValueError(f"bias shape {b.shape} incompatible with {x.shape}")
    out = x + b

    def backward(d_out):
        return d_out, d_out.sum(axis=0, keepdims=True)

    return out, backward


def relu(x: np.ndarray):
    """Elementwise max(0, x); backward gates by x > 0."""
    out = np.maximum(x, 0.0)
    gate = x > 0.0

    def backward(d_out):
        return d_out * gate

    return out, backward


class DropoutMask:
    """Inverted-dropout mask: survivors scaled by 1/keep_prob at train time.

    ``mask`` is None for the identity case (eval mode or keep_prob == 1).
    """

    def __init__(self, keep_prob: float, mask: np.ndarray | None):
        self.keep_prob = keep_prob
        self.mask = mask
        self.scale = 1.0 / keep_prob

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self.mask is None:
            return x
        return x * self.mask * self.scale


def dropout(x: np.ndarray, keep_prob: float, rng=None, training: bool = True):
    """Returns (output, DropoutMask). Evaluation mode is the identity."""
    if not 0.0 < keep_prob <= 1.0:
        raise ValueError(f"keep_prob must be in (0, 1], got {keep_prob}")
    if not training or keep_prob == 1.0:
        return x, DropoutMask(1.0, None)
    mask = (rng.random(x.shape) < keep_prob).astype(x.dtype)
    dm = DropoutMask(keep_prob, mask)
    return x * mask * dm.scale, dm


def dropout_backward(dm: DropoutMask, d_out: np.ndarray) -> np.ndarray:
    return dm.apply(d_out)


def row_softmax(x: np.ndarray):
    """Row-wise softmax with per-row max subtraction for stability."""
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def backward(d_out):
        inner = (d_out * out).sum(axis=1, keepdims=True)
        return out * (d_out - inner)

    return out, backward


def scaled_dot_attention(q: np.ndarray, k: np.ndarray, v: np.ndarray):
    """Dense attention: softmax(q k^T / sqrt(d_k)) v.

    Backward returns (dQ, dK, dV).
    """
    if q.shape[1] != k.shape[1]:
        raise ValueError(f"query dim {q.shape[1]} != key dim {k.shape[1]}")
    if k.shape[0] != v.shape[0]:
        raise ValueError(f"{k.shape[0]} keys but {v.shape[0]} values")
    inv_sqrt_dk = 1.0 / math.sqrt(q.shape[1])
    scores = (q @ k.T) * inv_sqrt_dk
    probs, softmax_back = row_softmax(scores)
    out = probs @ v

    def backward(d_out):
        d_probs = d_out @ v.T
        d_v = probs.T @ d_out
        d_scores = softmax_back(d_probs)
        return d_scores @ k * inv_sqrt_dk, d_scores.T @ q * inv_sqrt_dk, d_v

    return out, backward


def cross_entropy(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray):
    """Mean negative log-softmax over the masked nodes.

    Returns (loss, dLogits); the gradient is zero outside the mask. The
    value is invariant to the ordering of ``mask``.
    """
    mask = np.sort(np.asarray(mask, dtype=np.int64))  # set semantics: order-free
    if mask.size == 0:
        raise ValueError("cross_entropy over an empty mask")
    labels = np.asarray(labels, dtype=np.int64)
    sub = logits[mask]
    y = labels[mask]
    if y.min() < 0 or y.max() >= logits.shape[1]:
        raise ValueError("label out of range for logit columns")
    shifted = sub - sub.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    idx = np.arange(mask.size)
    loss = float(-log_probs[idx, y].mean())
    d_sub = np.exp(log_probs)
    d_sub[idx, y] -= 1.0
    d_logits = np.zeros_like(logits)
    d_logits[mask] = d_sub / mask.size
    return loss, d_logits


def _similarities(anchor, other, sim):
    if sim == "dot":
        return anchor @ other.T
    if sim == "cosine":
        an = np.linalg.norm(anchor, axis=1, keepdims=True)
        on = np.linalg.norm(other, axis=1, keepdims=True)
        return (anchor @ other.T) / np.maximum(an * on.T, 1e-30)
    raise ValueError(f"unknown similarity {sim!r}")


def infonce(
    anchor: np.ndarray,
    positive: np.ndarray,
    negatives: np.ndarray,
    tau: float,
    sim: str = "cosine",
) -> float:
    """Contrastive loss: each anchor row is pulled toward its positive row
    and pushed from every row of ``negatives`` (shared across anchors), at
    temperature ``tau``. Returns the mean over anchors.
    """
    if tau <= 0.0:
        raise ValueError(f"temperature must be positive, got {tau}")
    anchor = np.atleast_2d(np.asarray(anchor, dtype=np.float64))
    positive = np.atleast_2d(np.asarray(positive, dtype=np.float64))
    negatives = np.atleast_2d(np.asarray(negatives, dtype=np.float64))
    if positive.shape != anchor.shape:
        raise ValueError("anchor and positive must have matching shapes")
    if negatives.shape[1] != anchor.shape[1]:
        raise ValueError("negative dimension mismatch")
    s_pos = np.einsum("ij,ij->i", *(
        (anchor, positive) if sim == "dot" else (
            anchor / np.maximum(np.linalg.norm(anchor, axis=1, keepdims=True), 1e-30),
            positive / np.maximum(np.linalg.norm(positive, axis=1, keepdims=True), 1e-30),
        )
    ))
    s_neg = _similarities(anchor, negatives, sim)
    scores = np.concatenate([s_pos[:, None], s_neg], axis=1) / tau
    m = scores.max(axis=1, keepdims=True)
    log_denom = m[:, 0] + np.log(np.exp(scores - m).sum(axis=1))
    return float(np.mean(log_denom - scores[:, 0]))
