"""Gesture classification: windowing, a small convolutional network, training.

The network is conv(kernel 50x5, stride 10x3) -> ReLU -> maxpool(3x1, stride
3x1) -> flatten -> dense -> ReLU -> dense -> softmax, trained with Adam on
sparse categorical cross-entropy. Forward/backward are plain numpy; the
public entry points run in double precision so finite-difference gradient
checks are meaningful, while the training loop drops to float32 internally
for speed (documented below).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .errors import InvalidInputError

__all__ = ["GESTURE_NAMES", "WindowedDataset", "NetworkParams", "TrainConfig",
           "EvalReport", "AdamState", "segment_windows", "split_dataset",
           "init_params", "forward", "loss_and_gradients", "adam_step",
           "train", "evaluate", "cross_validate", "crossval_summary"]

GESTURE_NAMES = ("flexion", "extension", "radial deviation", "ulnar deviation",
                 "pronation", "supination", "hand closing")

CONV_KERNEL = (50, 5)
CONV_STRIDE = (10, 3)
POOL_SIZE = (3, 1)
POOL_STRIDE = (3, 1)

PARAM_FIELDS = ("conv_w", "conv_b", "dense1_w", "dense1_b", "dense2_w", "dense2_b")

_PROB_FLOOR = 1e-12   # cross-entropy clamp when the true-class probability underflows
_BANK_BYTE_LIMIT = 2_600_000_000  # fall back to per-batch patch extraction above this


def _default_class_names(num_classes: int) -> tuple:
    if num_classes == len(GESTURE_NAMES):
        return GESTURE_NAMES
    return tuple(f"class {i}" for i in range(num_classes))


@dataclass(frozen=True, eq=False)
class WindowedDataset:
    """Fixed-length labeled windows, shape (count, window_samples, channels)."""

    windows: np.ndarray
    labels: np.ndarray
    window_samples: int
    num_classes: int = 7
    class_names: tuple = ()

    def __post_init__(self):
        w = np.asarray(self.windows, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if w.ndim != 3 or w.shape[0] != y.shape[0]:
            raise InvalidInputError("windows must be (N, T, C) with one label per window")
        if w.shape[1] != self.window_samples:
            raise InvalidInputError(
                f"windows have {w.shape[1]} samples but window_samples={self.window_samples}")
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise InvalidInputError(f"labels must lie in [0, {self.num_classes})")
        names = self.class_names or _default_class_names(self.num_classes)
        if len(names) != self.num_classes:
            raise InvalidInputError("need one class name per class")
        object.__setattr__(self, "windows", w)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "class_names", tuple(names))

    def __len__(self) -> int:
        return self.windows.shape[0]

    @property
    def num_channels(self) -> int:
        return self.windows.shape[2]

    def subset(self, indices) -> "WindowedDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return WindowedDataset(windows=self.windows[idx], labels=self.labels[idx],
                               window_samples=self.window_samples,
                               num_classes=self.num_classes,
                               class_names=self.class_names)


def segment_windows(rec, window_ms: float = 250.0, labels=None,
                    num_classes: int | None = None) -> WindowedDataset:
    """Cut a recording into consecutive non-overlapping windows.

    ``labels`` is a scalar (one label for the whole recording) or a per-sample
    array; each window takes the label at its first sample, so labeled
    intervals should align with window boundaries. The trailing remainder
    that does not fill a window is dropped.
    """
    w = int(round(window_ms / 1000.0 * rec.sample_rate))
    n = rec.num_samples // w
    if n < 1:
        raise InvalidInputError(
            f"recording of {rec.num_samples} samples is shorter than one "
            f"{w}-sample window")
    if labels is None:
        labels = 0
    if np.isscalar(labels):
        win_labels = np.full(n, int(labels), dtype=np.int64)
    else:
        per_sample = np.asarray(labels, dtype=np.int64)
        if per_sample.shape != (rec.num_samples,):
            raise InvalidInputError("per-sample labels must match the recording length")
        win_labels = per_sample[np.arange(n) * w]
    if num_classes is None:
        num_classes = int(win_labels.max()) + 1
    windows = rec.samples[:n * w, :].reshape(n, w, rec.num_channels)
    return WindowedDataset(windows=windows, labels=win_labels,
                           window_samples=w, num_classes=num_classes)


def split_dataset(ds: WindowedDataset, train_frac: float = 0.8,
                  seed: int = 0) -> tuple:
    """Shuffled train/test partition; |train| = round(train_frac * N)."""
    n = len(ds)
    if n < 2:
        raise InvalidInputError("need at least 2 windows to split")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(train_frac * n))
    return ds.subset(perm[:n_train]), ds.subset(perm[n_train:])


@dataclass(frozen=True, eq=False)
class NetworkParams:
    """All learnable tensors plus the architecture constants they assume."""

    conv_w: np.ndarray      # (kt, kc, filters)
    conv_b: np.ndarray      # (filters,)
    dense1_w: np.ndarray    # (flat, hidden)
    dense1_b: np.ndarray
    dense2_w: np.ndarray    # (hidden, classes)
    dense2_b: np.ndarray
    conv_stride: tuple = CONV_STRIDE
    pool_size: tuple = POOL_SIZE
    pool_stride: tuple = POOL_STRIDE

    def __post_init__(self):
        for name in PARAM_FIELDS:
            t = getattr(self, name)
            if not np.all(np.isfinite(t)):
                raise InvalidInputError(f"parameter tensor {name} contains non-finite values")

    @property
    def num_filters(self) -> int:
        return self.conv_w.shape[2]

    @property
    def num_classes(self) -> int:
        return self.dense2_w.shape[1]

    def tensors(self) -> dict:
        return {name: getattr(self, name) for name in PARAM_FIELDS}

    def with_tensors(self, tensors: dict) -> "NetworkParams":
        return replace(self, **tensors)

    def astype(self, dtype) -> "NetworkParams":
        return self.with_tensors({k: v.astype(dtype) for k, v in self.tensors().items()})


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 32
    seed: int = 0
    folds: int = 5
    num_filters: int = 16
    hidden: int = 64

    def __post_init__(self):
        if self.epochs < 1 or self.folds < 2 or self.batch_size < 1:
            raise InvalidInputError("epochs >= 1, folds >= 2 and batch_size >= 1 required")


@dataclass(frozen=True, eq=False)
class EvalReport:
    accuracy: float                 # percent
    fold_accuracies: tuple          # percent, one entry per evaluated fold
    confusion_matrix: np.ndarray    # (classes, classes), rows = true class


def conv_output_shape(window_samples: int, num_channels: int) -> tuple:
    """(time, channel) extents after the conv layer and after pooling."""
    kt, kc = CONV_KERNEL
    st, sc = CONV_STRIDE
    if window_samples < kt or num_channels < kc:
        raise InvalidInputError(
            f"window {window_samples}x{num_channels} smaller than the {kt}x{kc} kernel")
    t_out = (window_samples - kt) // st + 1
    c_out = (num_channels - kc) // sc + 1
    pt = POOL_SIZE[0]
    spt = POOL_STRIDE[0]
    if t_out < pt:
        raise InvalidInputError("conv output too short for the pooling window")
    t_pool = (t_out - pt) // spt + 1
    return (t_out, c_out), (t_pool, c_out)


def init_params(window_samples: int, num_channels: int, num_classes: int = 7,
                num_filters: int = 16, hidden: int = 64, seed: int = 0) -> NetworkParams:
    """He-style scaled-normal initialization, deterministic under ``seed``."""
    (_, _), (t_pool, c_out) = conv_output_shape(window_samples, num_channels)
    kt, kc = CONV_KERNEL
    flat = t_pool * c_out * num_filters
    rng = np.random.default_rng(seed)
    conv_w = rng.normal(0.0, math.sqrt(2.0 / (kt * kc)), size=(kt, kc, num_filters))
    dense1_w = rng.normal(0.0, math.sqrt(2.0 / flat), size=(flat, hidden))
    dense2_w = rng.normal(0.0, math.sqrt(1.0 / hidden), size=(hidden, num_classes))
    return NetworkParams(conv_w=conv_w, conv_b=np.zeros(num_filters),
                         dense1_w=dense1_w, dense1_b=np.zeros(hidden),
                         dense2_w=dense2_w, dense2_b=np.zeros(num_classes))


def _im2col(x: np.ndarray) -> np.ndarray:
    """(B, T, C) -> contiguous (B, t_out, c_out, kt*kc) patch tensor."""
    kt, kc = CONV_KERNEL
    st, sc = CONV_STRIDE
    b, t, c = x.shape
    t_out = (t - kt) // st + 1
    c_out = (c - kc) // sc + 1
    s0, s1, s2 = x.strides
    view = as_strided(x, (b, t_out, c_out, kt, kc), (s0, st * s1, sc * s2, s1, s2))
    return np.ascontiguousarray(view).reshape(b, t_out, c_out, kt * kc)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward_from_patches(params: NetworkParams, patches: np.ndarray,
                          want_cache: bool):
    b, t_out, c_out, k = patches.shape
    f = params.num_filters
    conv_pre = patches.reshape(-1, k) @ params.conv_w.reshape(k, f).astype(patches.dtype, copy=False)
    conv_pre = conv_pre.reshape(b, t_out, c_out, f) + params.conv_b.astype(patches.dtype, copy=False)
    conv_act = np.maximum(conv_pre, 0.0)

    pt, spt = POOL_SIZE[0], POOL_STRIDE[0]
    t_pool = (t_out - pt) // spt + 1
    usable = (t_pool - 1) * spt + pt
    blocks = conv_act[:, :usable].reshape(b, t_pool, pt, c_out, f)
    pooled = blocks.max(axis=2)
    flat = pooled.reshape(b, -1)
    if flat.shape[1] != params.dense1_w.shape[0]:
        raise InvalidInputError(
            f"flattened size {flat.shape[1]} does not match dense layer "
            f"({params.dense1_w.shape[0]}); window shape incompatible with params")

    h_pre = flat @ params.dense1_w.astype(flat.dtype, copy=False) + params.dense1_b.astype(flat.dtype, copy=False)
    h = np.maximum(h_pre, 0.0)
    logits = h @ params.dense2_w.astype(h.dtype, copy=False) + params.dense2_b.astype(h.dtype, copy=False)
    probs = _softmax(logits)
    if not want_cache:
        return probs, None
    cache = {"patches": patches, "conv_pre": conv_pre, "blocks_shape": blocks.shape,
             "argmax": blocks.argmax(axis=2), "usable": usable,
             "flat": flat, "h_pre": h_pre, "h": h, "probs": probs}
    return probs, cache


def forward(params: NetworkParams, window: np.ndarray) -> np.ndarray:
    """Class probabilities for one (T, C) window or a (B, T, C) batch."""
    x = np.asarray(window, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3:
        raise InvalidInputError("window must be (T, C) or (B, T, C)")
    probs, _ = _forward_from_patches(params, _im2col(x), want_cache=False)
    return probs[0] if single else probs


def _backward(params: NetworkParams, cache: dict, labels: np.ndarray) -> dict:
    probs = cache["probs"]
    b = probs.shape[0]
    dtype = probs.dtype
    dlogits = probs.copy()
    dlogits[np.arange(b), labels] -= 1.0
    dlogits /= b

    grads = {}
    grads["dense2_w"] = cache["h"].T @ dlogits
    grads["dense2_b"] = dlogits.sum(axis=0)
    dh = dlogits @ params.dense2_w.astype(dtype, copy=False).T
    dh_pre = dh * (cache["h_pre"] > 0)
    grads["dense1_w"] = cache["flat"].T @ dh_pre
    grads["dense1_b"] = dh_pre.sum(axis=0)
    dflat = dh_pre @ params.dense1_w.astype(dtype, copy=False).T

    bshape = cache["blocks_shape"]          # (B, t_pool, pt, c_out, F)
    dpooled = dflat.reshape(bshape[0], bshape[1], bshape[3], bshape[4])
    dblocks = np.zeros(bshape, dtype=dtype)
    np.put_along_axis(dblocks, cache["argmax"][:, :, None], dpooled[:, :, None], axis=2)

    patches = cache["patches"]
    b_, t_out, c_out, k = patches.shape
    f = params.num_filters
    dconv_act = np.zeros((b_, t_out, c_out, f), dtype=dtype)
    dconv_act[:, :cache["usable"]] = dblocks.reshape(b_, cache["usable"], c_out, f)
    dconv_pre = dconv_act * (cache["conv_pre"] > 0)
    dconv_flat = dconv_pre.reshape(-1, f)
    grads["conv_w"] = (patches.reshape(-1, k).T @ dconv_flat).reshape(params.conv_w.shape)
    grads["conv_b"] = dconv_flat.sum(axis=0)
    return grads


def loss_and_gradients(params: NetworkParams, windows: np.ndarray,
                       labels: np.ndarray) -> tuple:
    """Mean cross-entropy over the batch and gradients for every tensor.

    The true-class probability is clamped at 1e-12 inside the log so a
    fully-confident wrong prediction cannot produce an infinite loss.
    """
    x = np.asarray(windows, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    y = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if y.min() < 0 or y.max() >= params.num_classes:
        raise InvalidInputError("labels outside the class range")
    probs, cache = _forward_from_patches(params, _im2col(x), want_cache=True)
    p_true = probs[np.arange(len(y)), y]
    loss = float(-np.log(np.maximum(p_true, _PROB_FLOOR)).mean())
    grads = _backward(params, cache, y)
    return loss, grads


@dataclass
class AdamState:
    step: int
    m: dict
    v: dict

    @classmethod
    def fresh(cls, params: NetworkParams) -> "AdamState":
        zeros = {k: np.zeros_like(v) for k, v in params.tensors().items()}
        return cls(step=0, m=zeros,
                   v={k: np.zeros_like(v) for k, v in params.tensors().items()})


def adam_step(params: NetworkParams, grads: dict, state: AdamState,
              config: TrainConfig) -> tuple:
    """One bias-corrected Adam update; returns (new params, new state)."""
    t = state.step + 1
    b1, b2 = config.beta1, config.beta2
    new_m, new_v, new_t = {}, {}, {}
    for name, p in params.tensors().items():
        g = grads[name]
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        new_m[name] = m
        new_v[name] = v
        new_t[name] = p - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
    return params.with_tensors(new_t), AdamState(step=t, m=new_m, v=new_v)


class _PatchBank:
    """Precomputed float32 conv patches for a whole dataset.

    im2col dominates training time on repeated epochs; extracting the patches
    once per dataset removes that cost. Falls back to lazy per-batch
    extraction when the bank would not fit in memory.
    """

    def __init__(self, windows: np.ndarray):
        self.windows32 = np.ascontiguousarray(windows, dtype=np.float32)
        b, t, c = windows.shape
        kt, kc = CONV_KERNEL
        st, sc = CONV_STRIDE
        t_out = (t - kt) // st + 1
        c_out = (c - kc) // sc + 1
        nbytes = b * t_out * c_out * kt * kc * 4
        self.bank = _im2col(self.windows32) if nbytes <= _BANK_BYTE_LIMIT else None

    def take(self, indices: np.ndarray) -> np.ndarray:
        if self.bank is not None:
            return self.bank[indices]
        return _im2col(self.windows32[indices])


def _train_on_indices(bank: _PatchBank, labels: np.ndarray, indices: np.ndarray,
                      window_samples: int, num_channels: int, num_classes: int,
                      config: TrainConfig) -> NetworkParams:
    # float32 core loop: ~5x faster than float64 on this workload; the public
    # forward / loss_and_gradients paths stay in float64.
    init_seed, shuffle_seed = np.random.SeedSequence(config.seed).spawn(2)
    params = init_params(window_samples, num_channels, num_classes,
                         config.num_filters, config.hidden,
                         seed=init_seed).astype(np.float32)
    state = AdamState.fresh(params)
    rng = np.random.default_rng(shuffle_seed)
    indices = np.asarray(indices, dtype=np.int64)
    for _ in range(config.epochs):
        order = rng.permutation(indices.size)
        for start in range(0, indices.size, config.batch_size):
            batch_idx = indices[order[start:start + config.batch_size]]
            patches = bank.take(batch_idx)
            y = labels[batch_idx]
            probs, cache = _forward_from_patches(params, patches, want_cache=True)
            grads = _backward(params, cache, y)
            params, state = adam_step(params, grads, state, config)
    return params.astype(np.float64)


def train(ds: WindowedDataset, config: TrainConfig = TrainConfig()) -> NetworkParams:
    """Mini-batch Adam training over shuffled epochs, deterministic under seed."""
    if len(ds) < 1:
        raise InvalidInputError("cannot train on an empty dataset")
    bank = _PatchBank(ds.windows)
    return _train_on_indices(bank, ds.labels, np.arange(len(ds)),
                             ds.window_samples, ds.num_channels,
                             ds.num_classes, config)


def _evaluate_probs(probs: np.ndarray, labels: np.ndarray,
                    num_classes: int) -> EvalReport:
    preds = probs.argmax(axis=1)
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (labels, preds), 1)
    accuracy = 100.0 * np.trace(confusion) / max(1, labels.size)
    return EvalReport(accuracy=float(accuracy), fold_accuracies=(float(accuracy),),
                      confusion_matrix=confusion)


def evaluate(params: NetworkParams, test: WindowedDataset,
             batch_size: int = 64) -> EvalReport:
    """Accuracy and confusion matrix of ``params`` on a labeled window set."""
    probs = np.concatenate([
        forward(params, test.windows[i:i + batch_size])
        for i in range(0, len(test), batch_size)])
    return _evaluate_probs(probs, test.labels, test.num_classes)


def cross_validate(ds: WindowedDataset, config: TrainConfig = TrainConfig()) -> list:
    """K-fold cross-validation; folds are disjoint and cover the dataset.

    The remainder of an uneven split is distributed one window per fold.
    Returns one :class:`EvalReport` per fold.
    """
    n = len(ds)
    if n < config.folds:
        raise InvalidInputError(f"{n} windows cannot form {config.folds} folds")
    rng = np.random.default_rng(config.seed)
    perm = rng.permutation(n)
    base, rem = divmod(n, config.folds)
    fold_seeds = np.random.SeedSequence(config.seed).spawn(config.folds)
    bank = _PatchBank(ds.windows)
    reports = []
    start = 0
    for f in range(config.folds):
        size = base + (1 if f < rem else 0)
        test_idx = perm[start:start + size]
        train_idx = np.concatenate([perm[:start], perm[start + size:]])
        start += size
        fold_config = replace(config, seed=fold_seeds[f].generate_state(1)[0].item())
        params32 = _train_on_indices(bank, ds.labels, train_idx,
                                     ds.window_samples, ds.num_channels,
                                     ds.num_classes, fold_config).astype(np.float32)
        probs, _ = _forward_from_patches(params32, bank.take(test_idx), want_cache=False)
        reports.append(_evaluate_probs(probs, ds.labels[test_idx], ds.num_classes))
    return reports


def crossval_summary(reports) -> tuple:
    """Mean and standard deviation (percent) of per-fold accuracies."""
    acc = np.array([r.accuracy for r in reports], dtype=np.float64)
    return float(acc.mean()), float(acc.std(ddof=1) if acc.size > 1 else 0.0)
