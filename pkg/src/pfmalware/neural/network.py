"""1D-Conv-BiLSTM network in plain numpy.

Layer stack, applied to a batch of index sequences of shape ``(B, L)``::

    embedding (B, L, E)  -> dropout
    conv1d, valid, ReLU (B, L-K+1, F)
    max pool, stride P  (B, T, F)  -> dropout,  T = (L-K+1) // P
    BiLSTM              (B, T, 2H)  recurrent (variational) dropout
    global max pool     (B, 2H)    -> dropout
    dense + softmax     (B, C)

Backpropagation is written out by hand; every ``*_backward`` function
mirrors its forward counterpart.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..exceptions import BadConfig, IndexOutOfVocab, NonFiniteLoss

# Parameter block names in canonical (persistence) order.
PARAM_NAMES = (
    "embedding",
    "conv_kernel",
    "conv_bias",
    "lstm_fw_input",
    "lstm_fw_recurrent",
    "lstm_fw_bias",
    "lstm_bw_input",
    "lstm_bw_recurrent",
    "lstm_bw_bias",
    "dense_kernel",
    "dense_bias",
)
WEIGHT_NAMES = tuple(n for n in PARAM_NAMES if not n.endswith("_bias"))
# Blocks penalized by the L2 term. "all" covers every non-bias weight; with
# lambda=0.02 that penalty (~30 at init) swamps the cross-entropy and training
# stalls, so the default regularizes the output kernel only.
L2_SCOPES = {"output": ("dense_kernel",), "all": WEIGHT_NAMES}


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    num_classes: int
    max_len: int = 256
    embed_dim: int = 100
    conv_filters: int = 250
    kernel_size: int = 5
    conv_stride: int = 1
    pool_size: int = 4
    lstm_units: int = 250
    l2_lambda: float = 0.02
    l2_scope: str = "output"
    dropout_rate: float = 0.5
    recurrent_dropout_rate: float = 0.2

    def __post_init__(self):
        for name in ("vocab_size", "num_classes", "max_len", "embed_dim", "conv_filters",
                     "kernel_size", "pool_size", "lstm_units"):
            if int(getattr(self, name)) < 1:
                raise BadConfig(f"{name} must be positive, got {getattr(self, name)}")
        if self.conv_stride != 1:
            raise BadConfig("only conv_stride=1 is supported")
        if self.num_classes < 2:
            raise BadConfig("num_classes must be at least 2")
        if self.l2_lambda < 0:
            raise BadConfig("l2_lambda must be non-negative")
        if self.l2_scope not in L2_SCOPES:
            raise BadConfig(f"l2_scope must be one of {sorted(L2_SCOPES)}, got {self.l2_scope!r}")
        for name in ("dropout_rate", "recurrent_dropout_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate < 1.0:
                raise BadConfig(f"{name} must lie in [0, 1), got {rate}")

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        E, F, H, K = self.embed_dim, self.conv_filters, self.lstm_units, self.kernel_size
        shapes = {
            "embedding": (self.vocab_size, E),
            "conv_kernel": (K, E, F),
            "conv_bias": (F,),
        }
        for d in ("fw", "bw"):
            shapes[f"lstm_{d}_input"] = (F, 4 * H)
            shapes[f"lstm_{d}_recurrent"] = (H, 4 * H)
            shapes[f"lstm_{d}_bias"] = (4 * H,)
        shapes["dense_kernel"] = (2 * H, self.num_classes)
        shapes["dense_bias"] = (self.num_classes,)
        return shapes

    def pooled_length(self, length: int) -> int:
        return (length - self.kernel_size + 1) // self.pool_size

    @property
    def l2_blocks(self) -> tuple[str, ...]:
        return L2_SCOPES[self.l2_scope]

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class CrnnModel:
    config: ModelConfig
    params: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "CrnnModel":
        return CrnnModel(self.config, {k: v.copy() for k, v in self.params.items()})

    def n_parameters(self) -> int:
        return sum(v.size for v in self.params.values())


def glorot_uniform(rng, shape, fan_in, fan_out, dtype=np.float32):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def orthogonal(rng, rows, cols, dtype=np.float32):
    """Random matrix with orthonormal rows (rows <= cols) or columns."""
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return q[:rows, :cols].astype(dtype)


def init_model(config: ModelConfig, seed: int = 0) -> CrnnModel:
    """Fresh parameters: Glorot-uniform kernels, orthogonal recurrent weights,
    forget-gate bias 1, embeddings U(-0.05, 0.05)."""
    rng = np.random.default_rng(seed)
    E, F, H, K, C = (config.embed_dim, config.conv_filters, config.lstm_units,
                     config.kernel_size, config.num_classes)
    p = {}
    p["embedding"] = rng.uniform(-0.05, 0.05, size=(config.vocab_size, E)).astype(np.float32)
    p["conv_kernel"] = glorot_uniform(rng, (K, E, F), K * E, K * F)
    p["conv_bias"] = np.zeros(F, np.float32)
    for d in ("fw", "bw"):
        p[f"lstm_{d}_input"] = glorot_uniform(rng, (F, 4 * H), F, 4 * H)
        p[f"lstm_{d}_recurrent"] = orthogonal(rng, H, 4 * H)
        bias = np.zeros(4 * H, np.float32)
        bias[H:2 * H] = 1.0
        p[f"lstm_{d}_bias"] = bias
    p["dense_kernel"] = glorot_uniform(rng, (2 * H, C), 2 * H, C)
    p["dense_bias"] = np.zeros(C, np.float32)
    return CrnnModel(config, {name: p[name] for name in PARAM_NAMES})


# --------------------------------------------------------------------------
# elementary layers

def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def conv1d_forward(x, kernel, bias):
    """Valid, stride-1 convolution. x: (B, L, E), kernel: (K, E, F)."""
    K, E, F = kernel.shape
    B, L, _ = x.shape
    Lc = L - K + 1
    cols = sliding_window_view(x, K, axis=1)              # (B, Lc, E, K)
    cols = cols.transpose(0, 1, 3, 2).reshape(B * Lc, K * E)
    z = cols @ kernel.reshape(K * E, F) + bias
    return z.reshape(B, Lc, F), cols


def conv1d_backward(dz, cols, kernel, x_shape):
    """Returns (dx, dkernel, dbias)."""
    K, E, F = kernel.shape
    B, L, _ = x_shape
    Lc = L - K + 1
    dz2 = dz.reshape(B * Lc, F)
    dkernel = (cols.T @ dz2).reshape(K, E, F)
    dbias = dz2.sum(axis=0)
    dcols = (dz2 @ kernel.reshape(K * E, F).T).reshape(B, Lc, K, E)
    dx = np.zeros(x_shape, dtype=dz.dtype)
    for k in range(K):
        dx[:, k:k + Lc] += dcols[:, :, k]
    return dx, dkernel, dbias


def maxpool_forward(a, pool):
    B, Lc, F = a.shape
    T = Lc // pool
    win = a[:, :T * pool].reshape(B, T, pool, F)
    arg = win.argmax(axis=2)
    out = np.take_along_axis(win, arg[:, :, None, :], axis=2)[:, :, 0, :]
    return out, arg


def maxpool_backward(dout, arg, pool, a_shape):
    B, Lc, F = a_shape
    T = dout.shape[1]
    da = np.zeros(a_shape, dtype=dout.dtype)
    win = da[:, :T * pool].reshape(B, T, pool, F)
    np.put_along_axis(win, arg[:, :, None, :], dout[:, :, None, :], axis=2)
    return da


def lstm_forward(xp, recurrent, mask=None, reverse=False):
    """Run one LSTM direction.

    ``xp`` holds the input projection plus bias, time-major, shape (T, B, 4H);
    gates are ordered i, f, g, o. ``mask`` is the (B, H) recurrent dropout
    mask, reused at every timestep. Outputs are stored at their original time
    index, so a reversed run still returns (T, B, H) aligned with the input.
    """
    T, B, H4 = xp.shape
    H = H4 // 4
    dt = xp.dtype
    h = np.zeros((B, H), dt)
    c = np.zeros((B, H), dt)
    gates = np.empty((T, B, H4), dt)
    cells = np.empty((T + 1, B, H), dt)      # cells[t] is the state entering step t
    tcs = np.empty((T, B, H), dt)
    hrs = np.empty((T, B, H), dt)
    out = np.empty((T, B, H), dt)
    steps = range(T - 1, -1, -1) if reverse else range(T)
    for n, t in enumerate(steps):
        hr = h * mask if mask is not None else h
        hrs[t] = hr
        a = gates[t]
        np.matmul(hr, recurrent, out=a)
        a += xp[t]
        a[:, :2 * H] = sigmoid(a[:, :2 * H])
        np.tanh(a[:, 2 * H:3 * H], out=a[:, 2 * H:3 * H])
        a[:, 3 * H:] = sigmoid(a[:, 3 * H:])
        i, f, g, o = a[:, :H], a[:, H:2 * H], a[:, 2 * H:3 * H], a[:, 3 * H:]
        cells[t] = c
        c = f * c + i * g
        tc = np.tanh(c)
        tcs[t] = tc
        h = o * tc
        out[t] = h
    cache = {"gates": gates, "c_prev": cells[:T], "tc": tcs, "hr": hrs}
    return out, cache


def lstm_backward(dout, cache, recurrent, mask=None, reverse=False):
    """Backprop through time on time-major arrays. Returns (dxp, drecurrent)."""
    T, B, H = dout.shape
    dt = dout.dtype
    dxp = np.empty((T, B, 4 * H), dt)
    dh_next = np.zeros((B, H), dt)
    dc_next = np.zeros((B, H), dt)
    gates, c_prev, tcs = cache["gates"], cache["c_prev"], cache["tc"]
    steps = range(T) if reverse else range(T - 1, -1, -1)
    for t in steps:
        a = gates[t]
        i, f, g, o = a[:, :H], a[:, H:2 * H], a[:, 2 * H:3 * H], a[:, 3 * H:]
        tc = tcs[t]
        dh = dout[t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        da = dxp[t]
        da[:, :H] = dc * g * i * (1.0 - i)
        da[:, H:2 * H] = dc * c_prev[t] * f * (1.0 - f)
        da[:, 2 * H:3 * H] = dc * i * (1.0 - g * g)
        da[:, 3 * H:] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = da @ recurrent.T
        if mask is not None:
            dh_next *= mask
    drec = cache["hr"].reshape(T * B, H).T @ dxp.reshape(T * B, 4 * H)
    return dxp, drec


# --------------------------------------------------------------------------
# full network

def _dropout_mask(rng, shape, rate, dtype):
    if rate <= 0.0:
        return None
    keep = rng.random(shape) >= rate
    return keep.astype(dtype) / dtype(1.0 - rate)


def make_dropout_masks(config: ModelConfig, batch_size: int, length: int, seed, dtype=np.float32):
    rng = np.random.default_rng(seed)
    dtype = np.dtype(dtype).type
    B, E, F, H = batch_size, config.embed_dim, config.conv_filters, config.lstm_units
    T = config.pooled_length(length)
    return {
        "embed": _dropout_mask(rng, (B, length, E), config.dropout_rate, dtype),
        "pooled": _dropout_mask(rng, (B, T, F), config.dropout_rate, dtype),
        "rec_fw": _dropout_mask(rng, (B, H), config.recurrent_dropout_rate, dtype),
        "rec_bw": _dropout_mask(rng, (B, H), config.recurrent_dropout_rate, dtype),
        "global": _dropout_mask(rng, (B, 2 * H), config.dropout_rate, dtype),
    }


def check_indices(model: CrnnModel, indices) -> np.ndarray:
    idx = np.asarray(indices)
    if idx.ndim == 1:
        idx = idx[None, :]
    if idx.ndim != 2:
        raise ValueError(f"expected a (batch, length) index array, got shape {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= model.config.vocab_size):
        raise IndexOutOfVocab(
            f"indices must lie in [0, {model.config.vocab_size}), got range "
            f"[{idx.min()}, {idx.max()}]")
    if idx.shape[1] < model.config.kernel_size:
        raise ValueError(
            f"sequence length {idx.shape[1]} is shorter than the kernel size {model.config.kernel_size}")
    return idx.astype(np.intp, copy=False)


def _forward(params, config, idx, masks, dtype):
    p = {k: v.astype(dtype, copy=False) for k, v in params.items()}
    H = config.lstm_units
    cache = {"idx": idx, "masks": masks}

    emb = p["embedding"][idx]
    if masks.get("embed") is not None:
        emb = emb * masks["embed"]
    cache["emb_shape"] = emb.shape

    z, cols = conv1d_forward(emb, p["conv_kernel"], p["conv_bias"])
    a = np.maximum(z, 0)
    cache.update(cols=cols, conv_z=z)

    pooled, arg = maxpool_forward(a, config.pool_size)
    if masks.get("pooled") is not None:
        pooled = pooled * masks["pooled"]
    cache.update(pool_arg=arg, conv_shape=a.shape, pooled=pooled)

    B, T, F = pooled.shape
    if T > 0:
        flat = pooled.transpose(1, 0, 2).reshape(T * B, F)     # time-major
        cache["pooled_tm"] = flat
        outs = []
        for d, rev in (("fw", False), ("bw", True)):
            xp = (flat @ p[f"lstm_{d}_input"] + p[f"lstm_{d}_bias"]).reshape(T, B, 4 * H)
            out, lcache = lstm_forward(xp, p[f"lstm_{d}_recurrent"], masks.get(f"rec_{d}"), reverse=rev)
            cache[f"lstm_{d}"] = lcache
            outs.append(out)
        seq = np.concatenate(outs, axis=2)                    # (T, B, 2H)
        garg = seq.argmax(axis=0)
        gpool = np.take_along_axis(seq, garg[None], axis=0)[0]
    else:
        # No timestep survives pooling: the global pool of an empty sequence is 0.
        garg = None
        gpool = np.zeros((B, 2 * H), dtype)
    cache["global_arg"] = garg
    if masks.get("global") is not None:
        gpool = gpool * masks["global"]
    cache["gpool"] = gpool

    logits = gpool @ p["dense_kernel"] + p["dense_bias"]
    cache["T"] = T
    return logits, cache, p


def forward(model: CrnnModel, indices, mode: str = "infer", seed=None, dtype=np.float32,
            return_cache: bool = False, return_logits: bool = False):
    """Class probabilities for a batch of encoded sequences.

    ``mode="train"`` draws inverted-dropout masks from ``seed``; ``"infer"``
    applies no dropout and no rescaling.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    idx = check_indices(model, indices)
    if mode == "train":
        masks = make_dropout_masks(model.config, idx.shape[0], idx.shape[1], seed, dtype)
    else:
        masks = {}
    logits, cache, _ = _forward(model.params, model.config, idx, masks, dtype)
    probs = softmax(logits)
    out = (logits, probs) if return_logits else probs
    if return_cache:
        cache["probs"] = probs
        return out, cache
    return out


def _backward(p, config, cache, dlogits):
    """Gradients of every parameter block given d(loss)/d(logits)."""
    H = config.lstm_units
    masks = cache["masks"]
    grads = {}
    grads["dense_kernel"] = cache["gpool"].T @ dlogits
    grads["dense_bias"] = dlogits.sum(axis=0)
    dg = dlogits @ p["dense_kernel"].T
    if masks.get("global") is not None:
        dg = dg * masks["global"]

    pooled = cache["pooled"]
    B, T, F = pooled.shape
    dpooled = np.zeros_like(pooled)
    if T > 0:
        dseq = np.zeros((T, B, 2 * H), dg.dtype)
        np.put_along_axis(dseq, cache["global_arg"][None], dg[None], axis=0)
        flat = cache["pooled_tm"]
        dflat = np.zeros((T * B, F), dg.dtype)
        for k, (d, rev) in enumerate((("fw", False), ("bw", True))):
            dxp, drec = lstm_backward(dseq[:, :, k * H:(k + 1) * H], cache[f"lstm_{d}"],
                                      p[f"lstm_{d}_recurrent"], masks.get(f"rec_{d}"), reverse=rev)
            dxp2 = dxp.reshape(T * B, 4 * H)
            grads[f"lstm_{d}_input"] = flat.T @ dxp2
            grads[f"lstm_{d}_recurrent"] = drec
            grads[f"lstm_{d}_bias"] = dxp2.sum(axis=0)
            dflat += dxp2 @ p[f"lstm_{d}_input"].T
        dpooled = dflat.reshape(T, B, F).transpose(1, 0, 2)
    else:
        for d in ("fw", "bw"):
            grads[f"lstm_{d}_input"] = np.zeros_like(p[f"lstm_{d}_input"])
            grads[f"lstm_{d}_recurrent"] = np.zeros_like(p[f"lstm_{d}_recurrent"])
            grads[f"lstm_{d}_bias"] = np.zeros_like(p[f"lstm_{d}_bias"])
    if masks.get("pooled") is not None:
        dpooled = dpooled * masks["pooled"]

    da = maxpool_backward(dpooled, cache["pool_arg"], config.pool_size, cache["conv_shape"])
    dz = da * (cache["conv_z"] > 0)
    demb, grads["conv_kernel"], grads["conv_bias"] = conv1d_backward(
        dz, cache["cols"], p["conv_kernel"], cache["emb_shape"])
    if masks.get("embed") is not None:
        demb = demb * masks["embed"]

    dE = np.zeros_like(p["embedding"])
    np.add.at(dE, cache["idx"].ravel(), demb.reshape(-1, demb.shape[-1]))
    grads["embedding"] = dE
    return grads


def l2_penalty(params, l2_lambda, blocks=WEIGHT_NAMES) -> float:
    if l2_lambda == 0:
        return 0.0
    return float(l2_lambda * sum(np.sum(np.square(params[n], dtype=np.float64)) for n in blocks))


def cross_entropy(probs, labels) -> float:
    picked = probs[np.arange(len(labels)), labels].astype(np.float64)
    return float(-np.mean(np.log(np.maximum(picked, np.finfo(np.float64).tiny))))


def loss_and_grads(model: CrnnModel, indices, labels, mode: str = "train", seed=None,
                   dtype=np.float32, masks=None):
    """Mean cross-entropy plus ``l2_lambda * sum ||W||^2`` over the weights in
    ``config.l2_blocks``, and its gradient with respect to every parameter block.

    The gradient is taken through exactly the forward graph that produced the
    loss, including whatever dropout masks were active.
    """
    idx = check_indices(model, indices)
    labels = np.asarray(labels, dtype=np.intp)
    if labels.shape != (idx.shape[0],):
        raise ValueError("labels must have one entry per sequence")
    if labels.size and (labels.min() < 0 or labels.max() >= model.config.num_classes):
        raise ValueError(f"labels must lie in [0, {model.config.num_classes})")
    if masks is None:
        if mode == "train":
            masks = make_dropout_masks(model.config, idx.shape[0], idx.shape[1], seed, dtype)
        else:
            masks = {}
    logits, cache, p = _forward(model.params, model.config, idx, masks, dtype)
    probs = softmax(logits)
    loss = cross_entropy(probs, labels) + l2_penalty(p, model.config.l2_lambda, model.config.l2_blocks)
    if not np.isfinite(loss):
        raise NonFiniteLoss(loss)
    B = idx.shape[0]
    dlogits = probs.copy()
    dlogits[np.arange(B), labels] -= 1.0
    dlogits /= B
    grads = _backward(p, model.config, cache, dlogits)
    lam = model.config.l2_lambda
    if lam:
        for n in model.config.l2_blocks:
            grads[n] = grads[n] + (2.0 * lam) * p[n]
    return loss, {n: grads[n] for n in PARAM_NAMES}


def sgd_step(model: CrnnModel, grads, state: dict | None, learning_rate: float, momentum: float = 0.0):
    """Classical momentum SGD, in place: v <- momentum*v - lr*g; w <- w + v."""
    if state is None:
        state = {}
    for name, w in model.params.items():
        g = grads[name]
        if g.shape != w.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {name} {w.shape}")
        v = state.get(name)
        if v is None:
            v = np.zeros_like(w)
        v = (momentum * v - learning_rate * g).astype(w.dtype, copy=False)
        state[name] = v
        w += v
    return model, state
