"""Pure-numpy backend for the batched loss kernels.

This is the reference implementation; ``_core.pyx`` mirrors it in C for the
training hot loop. Every function takes a C-contiguous float64 logit matrix
with one row per position and an int64 target vector, and returns per-row
loss values together with per-row gradients with respect to the logits.
"""

import numpy as np

# Guard inside the p-th root of the raw Wasserstein gradient; keeps the
# chain-rule factor finite as the loss approaches zero for p > 1.
RAW_MODE_EPS = 1e-12


def backend_name() -> str:
    return "python"


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction, 64-bit throughout."""
    z = logits - logits.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z


def cross_entropy(logits: np.ndarray, targets: np.ndarray):
    """Per-row negative log-likelihood and its logit gradient.

    value_n = -log p[n, targets[n]];  grad = p - onehot(targets).
    """
    probs = softmax(logits)
    rows = np.arange(logits.shape[0])
    values = -np.log(probs[rows, targets])
    grads = probs
    grads[rows, targets] -= 1.0
    return values, grads


def wasserstein(logits: np.ndarray, targets: np.ndarray, p: float, r: float,
                pth_power: bool):
    """Per-row transport distance from softmax(logits) to a point mass.

    With w_i = |i - a| and s = sum_i p_i w_i^p, the p-th-power mode returns
    r^p * s with gradient r^p * p_j (w_j^p - s); the raw mode returns
    r * s^(1/p) and applies the chain rule through the root, guarded by
    RAW_MODE_EPS so the gradient stays finite as s -> 0.
    """
    probs = softmax(logits)
    w = np.abs(np.arange(logits.shape[1])[None, :] - targets[:, None]).astype(np.float64)
    if p == 1.0:
        wp = w
    elif p == 2.0:
        wp = w * w
    else:
        wp = w**p
    s = np.einsum("ij,ij->i", probs, wp)
    if pth_power:
        rp = r**p
        values = rp * s
        grads = rp * probs * (wp - s[:, None])
    else:
        values = r * s ** (1.0 / p)
        root_arg = np.maximum(s, RAW_MODE_EPS)
        chain = (r / p) * root_arg ** (1.0 / p - 1.0)
        grads = chain[:, None] * probs * (wp - s[:, None])
    return values, grads
