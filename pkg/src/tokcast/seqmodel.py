"""A small from-scratch autoregressive token model with a seeded trainer.

The model is a decoder-only pre-norm transformer held as one flat float64
parameter vector plus a shape layout, so the optimizer, checkpointing and
finite-difference checks all operate on a single array. Forward and reverse
passes are written out by hand in numpy; the loss and its logit gradient come
from :mod:`tokcast.loss`, so the training objective is exactly the quantity
that module reports.

Everything is deterministic: initialization, window sampling and the
optimizer are driven by explicit seeds, and reductions happen in a fixed
order, so a repeated run reproduces parameters bit for bit.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .loss import LossKind, sequence_loss

LN_EPS = 1e-5
INIT_STD = 0.02
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
LR_SCHEDULE_LINEAR = "linear-to-zero"
CHECKPOINT_VERSION = 1

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


class TrainingDiverged(RuntimeError):
    """Raised when a training step produces a non-finite loss or parameter."""

    def __init__(self, step: int, detail: str):
        super().__init__(f"training diverged at step {step}: {detail}")
        self.step = step


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters. vocab_size counts the two specials."""

    vocab_size: int
    context_length: int = 64
    embed_dim: int = 64
    num_layers: int = 2
    num_heads: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.vocab_size < 3:
            raise ValueError("vocab_size must cover at least one value token plus specials")
        if self.context_length < 2:
            raise ValueError("context_length must be at least 2")
        for name in ("embed_dim", "num_layers", "num_heads"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.embed_dim % self.num_heads != 0:
            raise ValueError("embed_dim must be divisible by num_heads")

    @property
    def d(self) -> int:
        """Number of value tokens (vocabulary minus PAD and EOS)."""
        return self.vocab_size - 2

    @property
    def pad_token(self) -> int:
        return self.vocab_size - 2

    @property
    def eos_token(self) -> int:
        return self.vocab_size - 1


@dataclass(frozen=True)
class TrainConfig:
    steps: int
    loss: LossKind
    lr_initial: float = 1e-3
    lr_schedule: str = LR_SCHEDULE_LINEAR
    batch_size: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be at least 1")
        if not self.lr_initial > 0:
            raise ValueError("lr_initial must be positive")
        if self.lr_schedule != LR_SCHEDULE_LINEAR:
            raise ValueError(f"unknown lr schedule {self.lr_schedule!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")


def param_layout(config: ModelConfig):
    """Ordered (name, shape) table defining the flat parameter vector."""
    V, m, D = config.vocab_size, config.context_length, config.embed_dim
    layout = [("tok_emb", (V, D)), ("pos_emb", (m, D))]
    for l in range(config.num_layers):
        layout += [
            (f"l{l}.ln1.g", (D,)), (f"l{l}.ln1.b", (D,)),
            (f"l{l}.attn.wq", (D, D)), (f"l{l}.attn.bq", (D,)),
            (f"l{l}.attn.wk", (D, D)), (f"l{l}.attn.bk", (D,)),
            (f"l{l}.attn.wv", (D, D)), (f"l{l}.attn.bv", (D,)),
            (f"l{l}.attn.wo", (D, D)), (f"l{l}.attn.bo", (D,)),
            (f"l{l}.ln2.g", (D,)), (f"l{l}.ln2.b", (D,)),
            (f"l{l}.mlp.w1", (D, 4 * D)), (f"l{l}.mlp.b1", (4 * D,)),
            (f"l{l}.mlp.w2", (4 * D, D)), (f"l{l}.mlp.b2", (D,)),
        ]
    layout += [("ln_f.g", (D,)), ("ln_f.b", (D,)), ("head.w", (D, V)), ("head.b", (V,))]
    return layout


def param_count(config: ModelConfig) -> int:
    """Closed-form size of the flat vector:

    2*V*D + m*D + L*(12*D^2 + 13*D) + 2*D + V
    (embeddings + untied output head, per-layer attention/MLP/norms, final
    norm). Checked against the layout at init time.
    """
    V, m, D, L = (config.vocab_size, config.context_length, config.embed_dim,
                  config.num_layers)
    return 2 * V * D + m * D + L * (12 * D * D + 13 * D) + 2 * D + V


@dataclass(eq=False)
class Model:
    config: ModelConfig
    flat: np.ndarray
    _offsets: dict = field(init=False, repr=False)

    def __post_init__(self):
        self._offsets = {}
        start = 0
        for name, shape in param_layout(self.config):
            size = int(np.prod(shape))
            self._offsets[name] = (start, start + size, shape)
            start += size
        if start != self.flat.size:
            raise ValueError(
                f"parameter vector has {self.flat.size} entries, layout needs {start}")

    def v(self, name: str) -> np.ndarray:
        """View of one named parameter block inside the flat vector."""
        start, stop, shape = self._offsets[name]
        return self.flat[start:stop].reshape(shape)

    def copy(self) -> "Model":
        return Model(config=self.config, flat=self.flat.copy())


def init_model(config: ModelConfig) -> Model:
    """Seeded initialization: weights N(0, 0.02), biases 0, norm gains 1."""
    rng = np.random.default_rng(config.seed)
    blocks = []
    for name, shape in param_layout(config):
        leaf = name.rsplit(".", 1)[-1]
        if leaf in ("g",):
            blocks.append(np.ones(shape))
        elif leaf in ("b", "bq", "bk", "bv", "bo", "b1", "b2"):
            blocks.append(np.zeros(shape))
        else:
            blocks.append(rng.normal(0.0, INIT_STD, size=shape).ravel())
    flat = np.concatenate([b.ravel() for b in blocks])
    if flat.size != param_count(config):
        raise AssertionError("layout disagrees with the closed-form parameter count")
    return Model(config=config, flat=flat)


def _check_tokens(tokens, vocab_size: int) -> np.ndarray:
    arr = np.asarray(tokens, dtype=np.int64)
    if arr.size == 0:
        raise ValueError("token sequence is empty")
    if arr.min() < 0 or arr.max() >= vocab_size:
        raise ValueError(f"token out of vocabulary [0, {vocab_size - 1}]")
    return arr


def _layernorm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + LN_EPS)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv)


def _layernorm_backward(dy, g, cache):
    xhat, inv = cache
    dxhat = dy * g
    dg = (dy * xhat).sum(axis=(0, 1))
    db = dy.sum(axis=(0, 1))
    dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dg, db


def _gelu(u):
    t = np.tanh(_GELU_C * (u + _GELU_A * u**3))
    return 0.5 * u * (1.0 + t), t


def _gelu_backward(du_out, u, t):
    return du_out * (0.5 * (1.0 + t)
                     + 0.5 * u * (1.0 - t * t) * _GELU_C * (1.0 + 3.0 * _GELU_A * u * u))


def _split_heads(x, num_heads):
    B, T, D = x.shape
    return x.reshape(B, T, num_heads, D // num_heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    B, H, T, hd = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, T, H * hd)


def _forward_batch(model: Model, tokens: np.ndarray):
    """Batched forward pass. Returns (B, T, V) logits and the backward cache."""
    cfg = model.config
    B, T = tokens.shape
    if T > cfg.context_length:
        raise ValueError(
            f"sequence length {T} exceeds context length {cfg.context_length}")
    H = cfg.num_heads
    scale = 1.0 / math.sqrt(cfg.embed_dim // H)
    causal = np.tril(np.ones((T, T), dtype=bool))

    h = model.v("tok_emb")[tokens] + model.v("pos_emb")[:T]
    layers = []
    for l in range(cfg.num_layers):
        p = lambda leaf: model.v(f"l{l}.{leaf}")
        x_in = h
        a, ln1_cache = _layernorm(x_in, p("ln1.g"), p("ln1.b"))
        q = _split_heads(a @ p("attn.wq") + p("attn.bq"), H)
        k = _split_heads(a @ p("attn.wk") + p("attn.bk"), H)
        v = _split_heads(a @ p("attn.wv") + p("attn.bv"), H)
        scores = (q @ k.transpose(0, 1, 3, 2)) * scale
        scores = np.where(causal, scores, -np.inf)
        att = scores - scores.max(axis=-1, keepdims=True)
        np.exp(att, out=att)
        att /= att.sum(axis=-1, keepdims=True)
        z = _merge_heads(att @ v)
        attn_out = z @ p("attn.wo") + p("attn.bo")
        h_mid = x_in + attn_out
        bnorm, ln2_cache = _layernorm(h_mid, p("ln2.g"), p("ln2.b"))
        u = bnorm @ p("mlp.w1") + p("mlp.b1")
        g, tanh_cache = _gelu(u)
        h = h_mid + g @ p("mlp.w2") + p("mlp.b2")
        layers.append((a, ln1_cache, q, k, v, att, z, ln2_cache, bnorm, u, g,
                       tanh_cache))
    f, lnf_cache = _layernorm(h, model.v("ln_f.g"), model.v("ln_f.b"))
    logits = f @ model.v("head.w") + model.v("head.b")
    cache = (tokens, layers, f, lnf_cache)
    return logits, cache


def _backward_batch(model: Model, cache, dlogits: np.ndarray) -> np.ndarray:
    """Reverse pass from a logit gradient to the flat parameter gradient."""
    cfg = model.config
    tokens, layers, f, lnf_cache = cache
    B, T, _ = dlogits.shape
    D, H = cfg.embed_dim, cfg.num_heads
    scale = 1.0 / math.sqrt(D // H)
    grads = {}

    d2 = dlogits.reshape(B * T, cfg.vocab_size)
    grads["head.w"] = f.reshape(B * T, D).T @ d2
    grads["head.b"] = d2.sum(axis=0)
    df = dlogits @ model.v("head.w").T
    dh, grads["ln_f.g"], grads["ln_f.b"] = _layernorm_backward(
        df, model.v("ln_f.g"), lnf_cache)

    for l in reversed(range(cfg.num_layers)):
        p = lambda leaf: model.v(f"l{l}.{leaf}")
        (a, ln1_cache, q, k, v, att, z, ln2_cache, bnorm, u, g,
         tanh_cache) = layers[l]
        # MLP branch: h = h_mid + gelu(ln2(h_mid) @ w1 + b1) @ w2 + b2
        dmlp = dh
        grads[f"l{l}.mlp.w2"] = g.reshape(B * T, -1).T @ dmlp.reshape(B * T, D)
        grads[f"l{l}.mlp.b2"] = dmlp.sum(axis=(0, 1))
        dg = dmlp @ p("mlp.w2").T
        du = _gelu_backward(dg, u, tanh_cache)
        grads[f"l{l}.mlp.w1"] = bnorm.reshape(B * T, D).T @ du.reshape(B * T, -1)
        grads[f"l{l}.mlp.b1"] = du.sum(axis=(0, 1))
        dbnorm = du @ p("mlp.w1").T
        dh_mid, grads[f"l{l}.ln2.g"], grads[f"l{l}.ln2.b"] = _layernorm_backward(
            dbnorm, p("ln2.g"), ln2_cache)
        dh_mid = dh_mid + dh
        # attention branch: h_mid = x_in + (att @ v merged) @ wo + bo
        dattn = dh_mid
        grads[f"l{l}.attn.wo"] = z.reshape(B * T, D).T @ dattn.reshape(B * T, D)
        grads[f"l{l}.attn.bo"] = dattn.sum(axis=(0, 1))
        dz = _split_heads(dattn @ p("attn.wo").T, H)
        datt = dz @ v.transpose(0, 1, 3, 2)
        dv = att.transpose(0, 1, 3, 2) @ dz
        dscores = att * (datt - (datt * att).sum(axis=-1, keepdims=True))
        dq = (dscores @ k) * scale
        dk = (dscores.transpose(0, 1, 3, 2) @ q) * scale
        a2 = a.reshape(B * T, D)
        da = np.zeros_like(a)
        for name, dlin in (("wq", dq), ("wk", dk), ("wv", dv)):
            d_lin2 = _merge_heads(dlin).reshape(B * T, D)
            grads[f"l{l}.attn.{name}"] = a2.T @ d_lin2
            grads[f"l{l}.attn.b{name[1]}"] = d_lin2.sum(axis=0)
            da += (d_lin2 @ p(f"attn.{name}").T).reshape(B, T, D)
        dx, grads[f"l{l}.ln1.g"], grads[f"l{l}.ln1.b"] = _layernorm_backward(
            da, p("ln1.g"), ln1_cache)
        dh = dx + dh_mid

    dtok = np.zeros((cfg.vocab_size, D))
    np.add.at(dtok, tokens.ravel(), dh.reshape(B * T, D))
    grads["tok_emb"] = dtok
    dpos = np.zeros((cfg.context_length, D))
    dpos[:T] = dh.sum(axis=0)
    grads["pos_emb"] = dpos

    return np.concatenate([grads[name].ravel() for name, _ in param_layout(cfg)])


def forward(model: Model, tokens) -> np.ndarray:
    """Logits for one sequence; row t conditions only on tokens[0..t]."""
    arr = _check_tokens(tokens, model.config.vocab_size)
    if arr.ndim != 1:
        raise ValueError("forward expects a 1-D token sequence")
    logits, _ = _forward_batch(model, arr[None, :])
    return logits[0]


def backward(model: Model, tokens, targets, kind: LossKind, r: float = 1.0):
    """Loss and flat parameter gradient for one teacher-forced sequence.

    The loss is :func:`tokcast.loss.sequence_loss` of the forward logits, so
    PAD targets are masked and EOS targets train with cross-entropy.
    """
    tok = _check_tokens(tokens, model.config.vocab_size)
    tgt = np.asarray(targets, dtype=np.int64)
    if tok.ndim != 1 or tgt.shape != tok.shape:
        raise ValueError("tokens and targets must be aligned 1-D sequences")
    logits, cache = _forward_batch(model, tok[None, :])
    out = sequence_loss(logits[0], tgt, kind, d=model.config.d, r=r)
    grad = _backward_batch(model, cache, out.grad[None, :, :])
    return out.value, grad


@dataclass(eq=False)
class TrainResult:
    """Trained model plus the per-step learning-rate and loss history."""

    model: Model
    lr: np.ndarray
    loss: np.ndarray


def sample_windows(dataset, context_length: int, batch_size: int, pad: int,
                   rng: np.random.Generator):
    """Draw teacher-forcing windows uniformly over (series, end) pairs.

    Every position 1..n-1 of every series is an eligible window end; windows
    shorter than the context are left-padded with PAD in both the inputs and
    the targets, and PAD targets carry no loss.
    """
    counts = np.array([len(ts.tokens) - 1 for ts in dataset])
    if counts.min() < 1:
        raise ValueError("every training series needs at least 2 tokens")
    offsets = np.concatenate([[0], np.cumsum(counts)])
    draws = rng.integers(offsets[-1], size=batch_size)
    m = context_length
    inputs = np.full((batch_size, m), pad, dtype=np.int64)
    targets = np.full((batch_size, m), pad, dtype=np.int64)
    for row, draw in enumerate(draws):
        i = int(np.searchsorted(offsets, draw, side="right")) - 1
        e = int(draw - offsets[i]) + 1
        toks = dataset[i].tokens
        s = max(0, e - m)
        width = e - s
        inputs[row, m - width:] = toks[s:e]
        targets[row, m - width:] = toks[s + 1:e + 1]
    return inputs, targets


def train(model: Model, dataset, tc: TrainConfig) -> TrainResult:
    """Adam training with the linearly decaying schedule; returns a new model.

    The input model is left untouched so one shared initialization can be
    trained under several losses for a controlled comparison.
    """
    if len(dataset) == 0:
        raise ValueError("training dataset is empty")
    grid = dataset[0].grid_ref
    for ts in dataset:
        if ts.grid_ref != grid:
            raise ValueError("training series were tokenized on different grids")
    if model.config.d != grid.d:
        raise ValueError(
            f"model vocabulary expects d={model.config.d} value tokens, "
            f"grid has d={grid.d}")

    trained = model.copy()
    rng = np.random.default_rng(tc.seed)
    m1 = np.zeros_like(trained.flat)
    m2 = np.zeros_like(trained.flat)
    lrs = np.empty(tc.steps)
    losses = np.empty(tc.steps)
    for t in range(tc.steps):
        lr = tc.lr_initial * (1.0 - t / tc.steps)
        inputs, targets = sample_windows(
            dataset, trained.config.context_length, tc.batch_size,
            trained.config.pad_token, rng)
        logits, cache = _forward_batch(trained, inputs)
        B, T, V = logits.shape
        out = sequence_loss(logits.reshape(B * T, V), targets.ravel(), tc.loss,
                            d=trained.config.d, r=grid.r)
        if not np.isfinite(out.value):
            raise TrainingDiverged(t, f"loss = {out.value!r}")
        grad = _backward_batch(trained, cache, out.grad.reshape(B, T, V))
        m1 += (1.0 - ADAM_BETA1) * (grad - m1)
        m2 += (1.0 - ADAM_BETA2) * (grad * grad - m2)
        bc1 = 1.0 - ADAM_BETA1 ** (t + 1)
        bc2 = 1.0 - ADAM_BETA2 ** (t + 1)
        trained.flat -= lr * (m1 / bc1) / (np.sqrt(m2 / bc2) + ADAM_EPS)
        if not np.all(np.isfinite(trained.flat)):
            raise TrainingDiverged(t, "non-finite parameter after update")
        lrs[t] = lr
        losses[t] = out.value
    return TrainResult(model=trained, lr=lrs, loss=losses)


def write_loss_curve(path, result: TrainResult) -> None:
    """Write the training history as CSV with columns step, lr, loss."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "lr", "loss"])
        for t in range(result.lr.size):
            writer.writerow([t, repr(float(result.lr[t])), repr(float(result.loss[t]))])


def save_checkpoint(path, model: Model, rng_state=None) -> None:
    """Persist config, parameters and optional RNG state; bit-stable bytes."""
    np.savez(
        path,
        version=np.array(CHECKPOINT_VERSION),
        config=np.array(json.dumps(asdict(model.config), sort_keys=True)),
        params=model.flat,
        rng=np.array(json.dumps(rng_state)),
    )


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns (model, rng_state)."""
    with np.load(path, allow_pickle=False) as data:
        version = int(data["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        config = ModelConfig(**json.loads(str(data["config"])))
        model = Model(config=config, flat=np.array(data["params"]))
        rng_state = json.loads(str(data["rng"]))
    return model, rng_state
