"""Training losses over token distributions, with analytic logit gradients.

Cross-entropy treats every wrong token as equally wrong. The Wasserstein
losses instead weight the predicted probability of each token by its grid
distance to the target: for a point-mass target at token ``a`` and softmax
probabilities ``p_i``,

    W_p = r * (sum_i p_i * |i - a|^p)^(1/p)

where ``r`` is the centroid spacing. When the prediction is itself a point
mass at token ``j`` this collapses to ``r * |j - a|`` for every ``p``, the
single-point analogue of the classic regression errors.

Training defaults to the p-th-power form ``r^p * sum_i p_i |i - a|^p`` (the
same per-sample minimizers, but no gradient singularity at zero loss);
reported values always use the raw form. Heavy batched math is dispatched
to :mod:`tokcast._kernels`; the CDF oracle below deliberately shares no code
with that path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels

POWER_MODE_PTH = "p-th-power"
POWER_MODE_RAW = "raw"

_PRESETS = {"ce": ("ce", 1.0), "w1": ("wasserstein", 1.0), "w2": ("wasserstein", 2.0)}


@dataclass(frozen=True)
class LossKind:
    """Selects the training loss: cross-entropy or Wasserstein-p."""

    kind: str
    p: float = 1.0
    power_mode: str = POWER_MODE_PTH

    def __post_init__(self):
        if self.kind not in ("ce", "wasserstein"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind == "wasserstein" and self.p < 1.0:
            raise ValueError(f"wasserstein order must satisfy p >= 1, got {self.p}")
        if self.power_mode not in (POWER_MODE_PTH, POWER_MODE_RAW):
            raise ValueError(f"unknown power mode {self.power_mode!r}")

    @classmethod
    def from_string(cls, spec: str, raw: bool = False) -> "LossKind":
        """Parse a CLI-style preset: 'ce', 'w1' or 'w2'."""
        try:
            kind, p = _PRESETS[spec.lower()]
        except KeyError:
            raise ValueError(f"unknown loss {spec!r}; expected one of ce, w1, w2") from None
        mode = POWER_MODE_RAW if raw else POWER_MODE_PTH
        return cls(kind=kind, p=p, power_mode=mode)

    @property
    def label(self) -> str:
        if self.kind == "ce":
            return "ce"
        return f"w{self.p:g}"

    @property
    def is_raw(self) -> bool:
        return self.power_mode == POWER_MODE_RAW


@dataclass
class LossOutput:
    """Scalar loss and its gradient with respect to the logits passed in."""

    value: float
    grad: np.ndarray


def _as_logit_matrix(logits) -> np.ndarray:
    arr = np.ascontiguousarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("logits must be finite")
    return arr


def softmax(logits) -> np.ndarray:
    """Numerically stable softmax over the last axis of a vector or matrix."""
    arr = _as_logit_matrix(logits)
    if arr.ndim == 1:
        return _kernels.softmax(arr[None, :])[0]
    if arr.ndim == 2:
        return _kernels.softmax(arr)
    raise ValueError(f"expected a 1-D or 2-D logit array, got ndim={arr.ndim}")


def _check_target(a: int, d: int) -> int:
    a = int(a)
    if not 0 <= a < d:
        raise ValueError(f"target token {a} out of range [0, {d - 1}]")
    return a


def cross_entropy(logits, a: int) -> LossOutput:
    """Negative log-likelihood of target token ``a``; grad = p - onehot(a)."""
    arr = _as_logit_matrix(logits)
    a = _check_target(a, arr.shape[0] if arr.ndim == 1 else arr.shape[1])
    values, grads = _kernels.cross_entropy(arr[None, :], np.array([a], dtype=np.int64))
    return LossOutput(value=float(values[0]), grad=grads[0])


def wasserstein_loss(logits, a: int, p: float = 1.0, r: float = 1.0,
                     power_mode: str = POWER_MODE_PTH) -> LossOutput:
    """Wasserstein-p distance from softmax(logits) to a point mass at ``a``.

    ``power_mode`` chooses between the raw distance and its p-th power; see
    the module docstring. ``r`` is the grid spacing between neighboring
    centroids.
    """
    arr = _as_logit_matrix(logits)
    a = _check_target(a, arr.shape[0])
    if p < 1.0:
        raise ValueError(f"order must satisfy p >= 1, got {p}")
    if not r > 0.0:
        raise ValueError(f"grid spacing must be positive, got {r}")
    if power_mode not in (POWER_MODE_PTH, POWER_MODE_RAW):
        raise ValueError(f"unknown power mode {power_mode!r}")
    values, grads = _kernels.wasserstein(
        arr[None, :], np.array([a], dtype=np.int64), float(p), float(r),
        power_mode == POWER_MODE_PTH,
    )
    return LossOutput(value=float(values[0]), grad=grads[0])


def w1_oracle(probs_p, probs_q, r: float = 1.0) -> float:
    """Exact 1-D Wasserstein-1 distance between two lattice distributions.

    Computed from the CDF identity ``W1 = r * sum_i |F_P(i) - F_Q(i)|`` on
    the centroid lattice. This is the independent check for the closed-form
    loss above and must stay free of any shared code with it.
    """
    P = np.asarray(probs_p, dtype=np.float64)
    Q = np.asarray(probs_q, dtype=np.float64)
    if P.shape != Q.shape or P.ndim != 1:
        raise ValueError("probability vectors must be 1-D and of equal length")
    for name, vec in (("probs_p", P), ("probs_q", Q)):
        if abs(vec.sum() - 1.0) > 1e-9:
            raise ValueError(f"{name} is not normalized: sum = {vec.sum()!r}")
    cdf_gap = np.cumsum(P - Q)[:-1]
    return float(r * np.sum(np.abs(cdf_gap)))


def batch_loss(logit_matrix, target_tokens, kind: LossKind, mask=None,
               r: float = 1.0) -> LossOutput:
    """Mean per-position loss over the unmasked rows of a logit matrix.

    ``mask`` is a boolean vector selecting the rows that count (all rows when
    omitted); masked rows get a zero gradient. Rows are reduced in a fixed
    order so repeated calls are bit-identical.
    """
    logits = _as_logit_matrix(logit_matrix)
    if logits.ndim != 2:
        raise ValueError(f"expected a 2-D logit matrix, got ndim={logits.ndim}")
    targets = np.asarray(target_tokens, dtype=np.int64)
    if targets.shape != (logits.shape[0],):
        raise ValueError("target vector must align with the logit matrix rows")
    if mask is None:
        rows = np.arange(logits.shape[0])
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != targets.shape:
            raise ValueError("mask must align with the logit matrix rows")
        rows = np.flatnonzero(mask)
    if rows.size == 0:
        raise ValueError("all positions are masked")
    sub_targets = targets[rows]
    if sub_targets.min() < 0 or sub_targets.max() >= logits.shape[1]:
        raise ValueError("target token out of range for the logit matrix")
    sub_logits = np.ascontiguousarray(logits[rows])
    if kind.kind == "ce":
        values, grads = _kernels.cross_entropy(sub_logits, sub_targets)
    else:
        values, grads = _kernels.wasserstein(
            sub_logits, sub_targets, float(kind.p), float(r), not kind.is_raw)
    total = np.zeros_like(logits)
    total[rows] = grads / rows.size
    return LossOutput(value=float(values.mean()), grad=total)


def sequence_loss(logit_matrix, target_tokens, kind: LossKind, d: int,
                  r: float = 1.0) -> LossOutput:
    """Training loss for one batch of positions over the full vocabulary.

    Targets equal to PAD (id ``d``) are excluded. The Wasserstein losses are
    defined only over the ``d`` value tokens, so for those positions the
    softmax is restricted to the value columns (special logits get zero
    gradient); positions whose target is EOS (id ``d + 1``) always train
    with cross-entropy over the full vocabulary. All contributing positions
    are pooled into a single mean.
    """
    logits = _as_logit_matrix(logit_matrix)
    targets = np.asarray(target_tokens, dtype=np.int64)
    if targets.shape != (logits.shape[0],):
        raise ValueError("target vector must align with the logit matrix rows")
    pad, eos = d, d + 1
    if targets.min() < 0 or targets.max() > eos:
        raise ValueError(f"target token out of vocabulary [0, {eos}]")
    include = targets != pad
    n = int(include.sum())
    if n == 0:
        raise ValueError("all positions are masked")

    if kind.kind == "ce":
        return batch_loss(logits, targets, kind, mask=include, r=r)

    grad = np.zeros_like(logits)
    total = 0.0
    value_rows = np.flatnonzero(include & (targets != eos))
    if value_rows.size:
        values, grads = _kernels.wasserstein(
            np.ascontiguousarray(logits[value_rows, :d]), targets[value_rows],
            float(kind.p), float(r), not kind.is_raw)
        total += values.sum()
        grad[value_rows, :d] = grads / n
    eos_rows = np.flatnonzero(targets == eos)
    if eos_rows.size:
        values, grads = _kernels.cross_entropy(
            np.ascontiguousarray(logits[eos_rows]), targets[eos_rows])
        total += values.sum()
        grad[eos_rows] = grads / n
    return LossOutput(value=total / n, grad=grad)
