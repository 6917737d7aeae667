"""Dense network with a per-hero shared encoder and a concatenation head.

One weight set encodes all 10 hero feature vectors (hero-slot invariant by
construction); the 10 encodings are concatenated in slot order and fed to a
fully connected head ending in 10 sigmoid outputs, one death probability
per hero. Gradients are hand-derived for this fixed family; training error
is backpropagated only through the batch's selected slot. No autodiff
framework, no GPU.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from . import features as ft
from .errors import (ChecksumMismatch, InvalidArchitecture, NonFiniteGradient,
                     ShapeMismatch, VersionMismatch)
from .match_data import N_HEROES
from .util import checksum8

# Tuned per-variant defaults for full-scale corpora (batch 128, Adam).
DEFAULT_HYPERPARAMS = {
    "minimal": {"learning_rate": 3.06e-5, "shared_layers": (200, 100, 60, 20),
                "final_layers": (150, 75)},
    "medium": {"learning_rate": 7.48e-5, "shared_layers": (256, 128, 64),
               "final_layers": (1024, 512, 256, 128, 64, 32)},
    "full": {"learning_rate": 6.15e-5, "shared_layers": (256, 128, 64),
             "final_layers": (1024, 512, 256, 128, 64, 32)},
}

_DTYPES = {"float32": np.float32, "float64": np.float64}


@dataclass(frozen=True)
class ModelConfig:
    variant: str
    per_hero_count: int
    shared_layers: tuple
    final_layers: tuple
    learning_rate: float
    batch_size: int = 128
    seed: int = 0
    window: float = 5.0
    roster_size: int = 130
    dtype: str = "float32"

    @property
    def np_dtype(self):
        return _DTYPES[self.dtype]

    @property
    def head_input_width(self):
        return N_HEROES * self.shared_layers[-1]

    def n_parameters(self):
        total = 0
        widths = [self.per_hero_count, *self.shared_layers]
        total += sum(a * b + b for a, b in zip(widths, widths[1:]))
        widths = [self.head_input_width, *self.final_layers, N_HEROES]
        total += sum(a * b + b for a, b in zip(widths, widths[1:]))
        return total


def default_config(variant, roster_size=130, **overrides) -> ModelConfig:
    """Per-variant defaults; keyword overrides win."""
    schema = ft.feature_schema(variant, roster_size)
    base = dict(DEFAULT_HYPERPARAMS[variant])
    base.update(overrides)
    return ModelConfig(variant=variant, per_hero_count=schema.per_hero_count,
                       roster_size=roster_size, **base)


@dataclass
class ModelParams:
    """Weights: one encoder copy shared by all 10 slots, plus the head.

    head_w/head_b include the output layer (last entry maps the final
    hidden width to 10 logits).
    """

    config: ModelConfig
    encoder_w: list
    encoder_b: list
    head_w: list
    head_b: list

    def arrays(self):
        """(name, array) pairs in the documented serialization order."""
        for i, (w, b) in enumerate(zip(self.encoder_w, self.encoder_b)):
            yield f"encoder_w{i}", w
            yield f"encoder_b{i}", b
        for i, (w, b) in enumerate(zip(self.head_w, self.head_b)):
            yield f"head_w{i}", w
            yield f"head_b{i}", b

    def copy(self):
        return ModelParams(
            config=self.config,
            encoder_w=[w.copy() for w in self.encoder_w],
            encoder_b=[b.copy() for b in self.encoder_b],
            head_w=[w.copy() for w in self.head_w],
            head_b=[b.copy() for b in self.head_b],
        )


@dataclass
class GradientSet:
    encoder_w: list
    encoder_b: list
    head_w: list
    head_b: list

    def arrays(self):
        for i, (w, b) in enumerate(zip(self.encoder_w, self.encoder_b)):
            yield f"encoder_w{i}", w
            yield f"encoder_b{i}", b
        for i, (w, b) in enumerate(zip(self.head_w, self.head_b)):
            yield f"head_w{i}", w
            yield f"head_b{i}", b


@dataclass
class AdamState:
    """First/second moment accumulators, shapes mirroring the parameters."""

    m: list
    v: list
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class ForwardTrace:
    """Cached pre-activations/activations needed by the backward pass."""

    x0: np.ndarray  # (B*10, F)
    encoder_pre: list
    encoder_act: list
    concat: np.ndarray  # (B, 10*E)
    head_pre: list
    head_act: list  # hidden activations only, not the output layer
    logits: np.ndarray  # (B, 10)
    probs: np.ndarray


def _layer_widths(cfg):
    enc = [cfg.per_hero_count, *cfg.shared_layers]
    head = [cfg.head_input_width, *cfg.final_layers, N_HEROES]
    return enc, head


def init_params(cfg: ModelConfig, rng=None) -> ModelParams:
    """Variance-scaled uniform weights (bound sqrt(6/(fan_in+fan_out))),
    zero biases; deterministic for a fixed seed."""
    for w in (*cfg.shared_layers, *cfg.final_layers, cfg.per_hero_count):
        if w < 1:
            raise InvalidArchitecture(f"layer width must be >= 1, got {w}")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    dt = cfg.np_dtype
    enc_widths, head_widths = _layer_widths(cfg)

    def make(widths):
        ws, bs = [], []
        for fan_in, fan_out in zip(widths, widths[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            ws.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dt))
            bs.append(np.zeros(fan_out, dtype=dt))
        return ws, bs

    enc_w, enc_b = make(enc_widths)
    head_w, head_b = make(head_widths)
    return ModelParams(config=cfg, encoder_w=enc_w, encoder_b=enc_b,
                       head_w=head_w, head_b=head_b)


def init_adam(params: ModelParams, beta1=0.9, beta2=0.999, eps=1e-8) -> AdamState:
    arrs = [a for _, a in params.arrays()]
    return AdamState(m=[np.zeros_like(a) for a in arrs],
                     v=[np.zeros_like(a) for a in arrs],
                     step=0, beta1=beta1, beta2=beta2, eps=eps)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _check_features(cfg, feats):
    feats = np.asarray(feats)
    if feats.ndim != 3 or feats.shape[1] != N_HEROES or feats.shape[2] != cfg.per_hero_count:
        raise ShapeMismatch(
            f"features must be (batch, {N_HEROES}, {cfg.per_hero_count}), got {feats.shape}")
    return feats.astype(cfg.np_dtype, copy=False)


def forward(params: ModelParams, feats):
    """Probabilities (B, 10) plus the trace needed for backprop.

    Every hero vector passes through the shared encoder (ReLU after each
    layer); encodings concatenate in slot order; the head applies ReLU
    hidden layers and a sigmoid on the 10-unit output.
    """
    cfg = params.config
    feats = _check_features(cfg, feats)
    b = feats.shape[0]
    x0 = feats.reshape(b * N_HEROES, cfg.per_hero_count)

    enc_pre, enc_act = [], []
    act = x0
    for w, bi in zip(params.encoder_w, params.encoder_b):
        pre = act @ w + bi
        act = np.maximum(pre, 0)
        enc_pre.append(pre)
        enc_act.append(act)

    concat = act.reshape(b, cfg.head_input_width)
    head_pre, head_act = [], []
    act = concat
    n_head = len(params.head_w)
    for i, (w, bi) in enumerate(zip(params.head_w, params.head_b)):
        pre = act @ w + bi
        if i < n_head - 1:
            act = np.maximum(pre, 0)
            head_pre.append(pre)
            head_act.append(act)
        else:
            logits = pre
    probs = _sigmoid(logits)
    trace = ForwardTrace(x0=x0, encoder_pre=enc_pre, encoder_act=enc_act,
                         concat=concat, head_pre=head_pre, head_act=head_act,
                         logits=logits, probs=probs)
    return probs, trace


def loss_and_grad(params: ModelParams, batch):
    """Mean binary cross-entropy on the selected slot only, plus gradients.

    batch needs .features (B,10,F), .labels (B,10) and .selected_slot.
    Gradients for the other nine outputs are exactly zero at the output
    layer; the shared encoder still accumulates contributions from all ten
    forward paths.
    """
    cfg = params.config
    slot = int(batch.selected_slot)
    if not 0 <= slot < N_HEROES:
        raise ShapeMismatch(f"selected_slot {slot} out of range")
    _, trace = forward(params, batch.features)
    b = trace.logits.shape[0]
    dt = cfg.np_dtype

    z = trace.logits[:, slot]
    y = np.asarray(batch.labels)[:, slot].astype(dt)
    # softplus form of BCE-with-logits; safe for large |z|
    loss = float(np.mean(np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))))

    dlogits = np.zeros_like(trace.logits)
    dlogits[:, slot] = (_sigmoid(z) - y) / b

    head_w_g, head_b_g = [], []
    dh = dlogits
    for i in range(len(params.head_w) - 1, -1, -1):
        dpre = dh if i == len(params.head_w) - 1 else dh * (trace.head_pre[i] > 0)
        act_in = trace.concat if i == 0 else trace.head_act[i - 1]
        head_w_g.append(act_in.T @ dpre)
        head_b_g.append(dpre.sum(axis=0))
        dh = dpre @ params.head_w[i].T
    head_w_g.reverse()
    head_b_g.reverse()

    denc = dh.reshape(b * N_HEROES, cfg.shared_layers[-1])
    enc_w_g, enc_b_g = [], []
    dh = denc
    for i in range(len(params.encoder_w) - 1, -1, -1):
        dpre = dh * (trace.encoder_pre[i] > 0)
        act_in = trace.x0 if i == 0 else trace.encoder_act[i - 1]
        enc_w_g.append(act_in.T @ dpre)
        enc_b_g.append(dpre.sum(axis=0))
        dh = dpre @ params.encoder_w[i].T
    enc_w_g.reverse()
    enc_b_g.reverse()

    grads = GradientSet(encoder_w=enc_w_g, encoder_b=enc_b_g,
                        head_w=head_w_g, head_b=head_b_g)
    return loss, grads


def adam_step(params: ModelParams, state: AdamState, grads: GradientSet, lr=None):
    """Standard bias-corrected Adam update, in place; returns (params, state)."""
    lr = params.config.learning_rate if lr is None else lr
    p_arrs = [a for _, a in params.arrays()]
    g_arrs = [a for _, a in grads.arrays()]
    if len(p_arrs) != len(g_arrs) or any(p.shape != g.shape for p, g in zip(p_arrs, g_arrs)):
        raise ShapeMismatch("gradient shapes do not mirror the parameters")
    for g in g_arrs:
        if not np.isfinite(g).all():
            raise NonFiniteGradient("gradient contains NaN or inf")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p, g, m, v in zip(p_arrs, g_arrs, state.m, state.v):
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * np.square(g)
        p -= (lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype, copy=False)
    return params, state


# ---------------------------------------------------------------------------
# Numerical verification


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    n_checked: int
    worst_param: str

    @property
    def passed(self):
        return self.max_rel_error < self.tolerance


@dataclass(frozen=True)
class _RawBatch:
    features: np.ndarray
    labels: np.ndarray
    selected_slot: int


def small_check_config(per_hero_count=15, batch_size=4, seed=0) -> ModelConfig:
    """The tiny 64-bit configuration used for finite-difference checks."""
    return ModelConfig(variant="minimal", per_hero_count=per_hero_count,
                       shared_layers=(8, 4), final_layers=(8,),
                       learning_rate=1e-3, batch_size=batch_size, seed=seed,
                       dtype="float64")


def gradient_check(cfg: ModelConfig, tolerance=1e-4, rng=None, eps=1e-5,
                   loss_and_grad_fn=None) -> GradCheckReport:
    """Max relative error between analytic and central-difference gradients
    over every parameter, for one random batch.

    loss_and_grad_fn exists so tests can inject a sabotaged backward pass;
    the analytic side comes from it, the numeric side never does.
    """
    if cfg.dtype != "float64":
        cfg = replace(cfg, dtype="float64")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    fn = loss_and_grad if loss_and_grad_fn is None else loss_and_grad_fn

    params = init_params(cfg, rng)
    # biases start at zero; nudge them so the check exercises nonzero offsets
    for _, arr in params.arrays():
        if arr.ndim == 1:
            arr += rng.uniform(-0.05, 0.05, size=arr.shape)
    feats = rng.random((cfg.batch_size, N_HEROES, cfg.per_hero_count))
    labels = rng.random((cfg.batch_size, N_HEROES)) < 0.5
    batch = _RawBatch(features=feats, labels=labels,
                      selected_slot=int(rng.integers(N_HEROES)))

    _, grads = fn(params, batch)
    g_arrs = dict(grads.arrays())

    worst = 0.0
    worst_name = ""
    n_checked = 0
    for name, arr in params.arrays():
        flat = arr.reshape(-1)
        g_flat = g_arrs[name].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            up, _ = loss_and_grad(params, batch)
            flat[j] = orig - eps
            dn, _ = loss_and_grad(params, batch)
            flat[j] = orig
            numeric = (up - dn) / (2 * eps)
            analytic = g_flat[j]
            denom = max(abs(analytic), abs(numeric))
            rel = 0.0 if denom < 1e-10 else abs(analytic - numeric) / denom
            n_checked += 1
            if rel > worst:
                worst = rel
                worst_name = f"{name}[{j}]"
    return GradCheckReport(max_rel_error=worst, tolerance=tolerance,
                           n_checked=n_checked, worst_param=worst_name)


# ---------------------------------------------------------------------------
# Checkpoints

CHECKPOINT_MAGIC = b"DTHCKPT1"
CHECKPOINT_VERSION = 1
_VARIANT_CODE = {"minimal": 0, "medium": 1, "full": 2}
_VARIANT_NAME = {v: k for k, v in _VARIANT_CODE.items()}
_DTYPE_CODE = {"float32": 0, "float64": 1}
_DTYPE_NAME = {v: k for k, v in _DTYPE_CODE.items()}
_FIXED = struct.Struct("<8sHBBIIIqQdd")


def encode_checkpoint(params: ModelParams, stats: ft.NormalizationStats, step=0) -> bytes:
    cfg = params.config
    if stats.schema.variant != cfg.variant or stats.schema.per_hero_count != cfg.per_hero_count:
        raise ShapeMismatch("normalization stats do not match the model schema")
    out = [
        _FIXED.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, _VARIANT_CODE[cfg.variant],
                    _DTYPE_CODE[cfg.dtype], cfg.per_hero_count, cfg.roster_size,
                    cfg.batch_size, cfg.seed, step, cfg.learning_rate, cfg.window),
        struct.pack("<H", len(cfg.shared_layers)),
        struct.pack(f"<{len(cfg.shared_layers)}I", *cfg.shared_layers),
        struct.pack("<H", len(cfg.final_layers)),
        struct.pack(f"<{len(cfg.final_layers)}I", *cfg.final_layers),
        struct.pack("<I", stats.schema.per_hero_count),
        stats.mins.astype("<f8").tobytes(),
        stats.maxs.astype("<f8").tobytes(),
    ]
    le = "<f4" if cfg.dtype == "float32" else "<f8"
    for _, arr in params.arrays():
        out.append(np.ascontiguousarray(arr, dtype=le).tobytes())
    body = b"".join(out)
    return body + checksum8(body)


def decode_checkpoint(blob: bytes, expect_variant=None):
    if len(blob) < _FIXED.size + 8:
        raise ChecksumMismatch("checkpoint truncated")
    body, stored = blob[:-8], blob[-8:]
    if checksum8(body) != stored:
        raise ChecksumMismatch("checkpoint checksum does not match contents")
    magic, version, variant_code, dtype_code, per_hero, roster, batch, seed, step, lr, window = \
        _FIXED.unpack_from(body)
    if magic != CHECKPOINT_MAGIC or version != CHECKPOINT_VERSION:
        raise VersionMismatch(f"bad checkpoint magic/version {magic!r}/{version}")
    variant = _VARIANT_NAME.get(variant_code)
    if variant is None:
        raise VersionMismatch(f"unknown variant code {variant_code}")
    if expect_variant is not None and variant != expect_variant:
        raise VersionMismatch(f"checkpoint is {variant!r}, expected {expect_variant!r}")
    off = _FIXED.size

    def take(fmt):
        nonlocal off
        s = struct.Struct(fmt)
        vals = s.unpack_from(body, off)
        off += s.size
        return vals

    (n_shared,) = take("<H")
    shared = take(f"<{n_shared}I")
    (n_final,) = take("<H")
    final = take(f"<{n_final}I")
    (n_feat,) = take("<I")
    if n_feat != per_hero:
        raise VersionMismatch("embedded stats length differs from feature count")
    mins = np.frombuffer(body, dtype="<f8", count=n_feat, offset=off).copy()
    off += 8 * n_feat
    maxs = np.frombuffer(body, dtype="<f8", count=n_feat, offset=off).copy()
    off += 8 * n_feat

    cfg = ModelConfig(variant=variant, per_hero_count=per_hero, shared_layers=tuple(shared),
                      final_layers=tuple(final), learning_rate=lr, batch_size=batch,
                      seed=seed, window=window, roster_size=roster,
                      dtype=_DTYPE_NAME[dtype_code])
    schema = ft.feature_schema(variant, roster)
    stats = ft.NormalizationStats(schema=schema, mins=mins, maxs=maxs)

    le = "<f4" if cfg.dtype == "float32" else "<f8"
    itemsize = 4 if cfg.dtype == "float32" else 8
    enc_widths, head_widths = _layer_widths(cfg)

    def read_stack(widths):
        nonlocal off
        ws, bs = [], []
        for fan_in, fan_out in zip(widths, widths[1:]):
            n = fan_in * fan_out
            w = np.frombuffer(body, dtype=le, count=n, offset=off).copy().reshape(fan_in, fan_out)
            off += n * itemsize
            b = np.frombuffer(body, dtype=le, count=fan_out, offset=off).copy()
            off += fan_out * itemsize
            ws.append(w)
            bs.append(b)
        return ws, bs

    enc_w, enc_b = read_stack(enc_widths)
    head_w, head_b = read_stack(head_widths)
    if off != len(body):
        raise ChecksumMismatch("checkpoint has trailing bytes")
    params = ModelParams(config=cfg, encoder_w=enc_w, encoder_b=enc_b,
                         head_w=head_w, head_b=head_b)
    return params, stats, step


def save_checkpoint(params: ModelParams, stats: ft.NormalizationStats, path, step=0):
    """Self-contained checkpoint: config, schema variant, stats, weights."""
    with open(path, "wb") as fh:
        fh.write(encode_checkpoint(params, stats, step))


def load_checkpoint(path, expect_variant=None):
    """Returns (params, stats, step); params.config carries the ModelConfig."""
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read(), expect_variant)
