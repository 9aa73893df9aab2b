"""Minimal neural-network core: Conv2D / MaxPool / Flatten / aux-concat /
Dense / Softmax forward and backward passes, cross-entropy loss, Adam
updates, and finite-difference gradient verification.

Everything runs on plain numpy arrays. Two precision modes: float64 for
verification ("verify"), float32 for training and inference ("run").
Forward/backward are pure given (params, input); batches may be processed
concurrently by disjoint workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

VERIFY_DTYPE = np.float64
RUN_DTYPE = np.float32

_ACTIVATIONS = ("relu", "none")


# ---------------------------------------------------------------------------
# Layer specifications
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Conv2D:
    filters: int
    kernel: tuple[int, int] = (3, 3)
    stride: int = 1
    activation: str = "relu"
    padding: str = "valid"

    def __post_init__(self):
        if self.filters < 1:
            raise ValueError("Conv2D needs at least one filter")
        if min(self.kernel) < 1:
            raise ValueError(f"bad kernel {self.kernel}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if self.padding != "valid":
            raise ValueError("only 'valid' padding is supported")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}")


@dataclass(frozen=True)
class MaxPool2D:
    size: int = 2
    stride: int | None = None   # defaults to size (non-overlapping)

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("pool size must be >= 1")
        if self.stride is not None and self.stride < 1:
            raise ValueError("pool stride must be >= 1")

    @property
    def step(self) -> int:
        return self.size if self.stride is None else self.stride


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class ConcatAux:
    aux_len: int

    def __post_init__(self):
        if self.aux_len < 1:
            raise ValueError("aux_len must be >= 1")


@dataclass(frozen=True)
class Dense:
    units: int
    activation: str = "none"

    def __post_init__(self):
        if self.units < 1:
            raise ValueError("Dense needs at least one unit")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}")


@dataclass(frozen=True)
class Softmax:
    pass


LayerSpec = Conv2D | MaxPool2D | Flatten | ConcatAux | Dense | Softmax


def spec_to_dict(spec: LayerSpec) -> dict:
    kind = type(spec).__name__
    doc = {"kind": kind}
    if isinstance(spec, Conv2D):
        doc.update(filters=spec.filters, kernel=list(spec.kernel), stride=spec.stride,
                   activation=spec.activation, padding=spec.padding)
    elif isinstance(spec, MaxPool2D):
        doc.update(size=spec.size, stride=spec.stride)
    elif isinstance(spec, ConcatAux):
        doc.update(aux_len=spec.aux_len)
    elif isinstance(spec, Dense):
        doc.update(units=spec.units, activation=spec.activation)
    return doc


def spec_from_dict(doc: dict) -> LayerSpec:
    kind = doc.get("kind")
    if kind == "Conv2D":
        return Conv2D(filters=doc["filters"], kernel=tuple(doc["kernel"]),
                      stride=doc["stride"], activation=doc["activation"],
                      padding=doc.get("padding", "valid"))
    if kind == "MaxPool2D":
        return MaxPool2D(size=doc["size"], stride=doc["stride"])
    if kind == "Flatten":
        return Flatten()
    if kind == "ConcatAux":
        return ConcatAux(aux_len=doc["aux_len"])
    if kind == "Dense":
        return Dense(units=doc["units"], activation=doc["activation"])
    if kind == "Softmax":
        return Softmax()
    raise ValueError(f"unknown layer kind {kind!r}")


# ---------------------------------------------------------------------------
# Batched layer kernels
# ---------------------------------------------------------------------------

def _im2col(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """(N, C, H, W) -> (N, OH, OW, C, kh, kw) window view (copied, contiguous)."""
    windows = sliding_window_view(x, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride, :, :]
    return np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5))


def _conv_forward_batch(x, weights, bias, stride):
    n, c, h, w = x.shape
    f, c_w, kh, kw = weights.shape
    if c != c_w:
        raise ValueError(f"input has {c} channels, kernel expects {c_w}")
    if kh > h or kw > w:
        raise ValueError(f"kernel ({kh}x{kw}) larger than input ({h}x{w})")
    cols = _im2col(x, kh, kw, stride)
    oh, ow = cols.shape[1], cols.shape[2]
    flat = cols.reshape(n * oh * ow, c * kh * kw)
    out = flat @ weights.reshape(f, -1).T + bias
    return out.reshape(n, oh, ow, f).transpose(0, 3, 1, 2), cols


def _conv_backward_batch(d_out, cols, weights, x_shape, stride):
    n, c, h, w = x_shape
    f, _, kh, kw = weights.shape
    oh, ow = d_out.shape[2], d_out.shape[3]
    dmat = d_out.transpose(0, 2, 3, 1).reshape(n * oh * ow, f)
    flat_cols = cols.reshape(n * oh * ow, c * kh * kw)
    d_weights = (dmat.T @ flat_cols).reshape(f, c, kh, kw)
    d_bias = dmat.sum(axis=0)
    d_cols = (dmat @ weights.reshape(f, -1)).reshape(n, oh, ow, c, kh, kw)
    d_cols = d_cols.transpose(0, 3, 4, 5, 1, 2)        # (N, C, kh, kw, OH, OW)
    dx = np.zeros(x_shape, dtype=d_out.dtype)
    for i in range(kh):
        for j in range(kw):
            dx[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += d_cols[:, :, i, j]
    return dx, d_weights, d_bias


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, target: int):
    """Stable softmax + cross-entropy for one sample.

    Returns (loss, probabilities, gradient w.r.t. logits); the gradient is
    p - onehot(target) and its components sum to 0.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1 or logits.size < 2:
        raise ValueError("logits must be a vector over >= 2 classes")
    if not (0 <= target < logits.size):
        raise ValueError(f"target {target} out of range for {logits.size} classes")
    shifted = logits - logits.max()
    log_probs = shifted - np.log(np.exp(shifted).sum())
    probs = np.exp(log_probs)
    loss = -float(log_probs[target])
    grad = probs.copy()
    grad[target] -= 1.0
    return loss, probs, grad


def _batch_cross_entropy(logits: np.ndarray, targets: np.ndarray):
    """Summed loss, correct count and d(loss_sum)/d(logits) for a batch."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    rows = np.arange(logits.shape[0])
    loss_sum = float(-log_probs[rows, targets].sum())
    d_logits = np.exp(log_probs)
    d_logits[rows, targets] -= 1.0
    correct = int((logits.argmax(axis=1) == targets).sum())
    return loss_sum, correct, d_logits


# ---------------------------------------------------------------------------
# Single-sample functional ops
# ---------------------------------------------------------------------------

def _apply_activation(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(z, 0.0)
    return z


def conv2d_forward(x, weights, bias, stride: int = 1, activation: str = "none"):
    """Valid-padding 2-D convolution of one (C, H, W) input."""
    x = np.asarray(x, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    out, _ = _conv_forward_batch(x[None], weights, bias, stride)
    return _apply_activation(out[0], activation)


def dense_forward(x, weights, bias, activation: str = "none"):
    """Affine map activation(W @ x + b) for one input vector."""
    x = np.asarray(x, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape[1] != x.shape[0]:
        raise ValueError(f"weights expect input of {weights.shape[1]}, got {x.shape[0]}")
    return _apply_activation(weights @ x + np.asarray(bias, dtype=np.float64), activation)


def maxpool2d_forward(x, size: int, stride: int | None = None):
    """Max pooling of one (C, H, W) input."""
    x = np.asarray(x, dtype=np.float64)
    step = size if stride is None else stride
    windows = sliding_window_view(x, (size, size), axis=(1, 2))[:, ::step, ::step]
    return windows.max(axis=(-2, -1))


# ---------------------------------------------------------------------------
# Network
# ---------------------------------------------------------------------------

class Network:
    """A feed-forward stack over (channels, height, width) inputs.

    The layer chain is validated at construction: each layer's input shape
    must equal its predecessor's output shape, and the optional Softmax must
    come last. Parameters use He-uniform initialization with zero biases,
    seeded for reproducibility.
    """

    def __init__(
        self,
        specs: Sequence[LayerSpec],
        input_shape: tuple[int, ...],
        seed: int = 0,
        dtype=VERIFY_DTYPE,
    ):
        self.specs = tuple(specs)
        self.input_shape = tuple(int(d) for d in input_shape)
        self.dtype = np.dtype(dtype)
        self.aux_len = 0
        self.shapes = self._validate_chain()
        self.params = self._init_params(seed)

    # -- construction -------------------------------------------------------

    def _validate_chain(self) -> list[tuple[int, ...]]:
        shape = self.input_shape
        shapes = [shape]
        for idx, spec in enumerate(self.specs):
            if isinstance(spec, Softmax) and idx != len(self.specs) - 1:
                raise ValueError(f"layer {idx}: Softmax must be the final layer")
            if isinstance(spec, Conv2D):
                if len(shape) != 3:
                    raise ValueError(f"layer {idx}: Conv2D needs (C, H, W) input, got {shape}")
                c, h, w = shape
                kh, kw = spec.kernel
                if kh > h or kw > w:
                    raise ValueError(
                        f"layer {idx}: kernel {spec.kernel} exceeds input ({h}, {w})"
                    )
                oh = (h - kh) // spec.stride + 1
                ow = (w - kw) // spec.stride + 1
                shape = (spec.filters, oh, ow)
            elif isinstance(spec, MaxPool2D):
                if len(shape) != 3:
                    raise ValueError(f"layer {idx}: MaxPool2D needs (C, H, W) input")
                c, h, w = shape
                if spec.size > h or spec.size > w:
                    raise ValueError(f"layer {idx}: pool size {spec.size} exceeds input")
                shape = (c, (h - spec.size) // spec.step + 1, (w - spec.size) // spec.step + 1)
            elif isinstance(spec, Flatten):
                shape = (int(np.prod(shape)),)
            elif isinstance(spec, ConcatAux):
                if len(shape) != 1:
                    raise ValueError(f"layer {idx}: ConcatAux needs a flat input, got {shape}")
                if self.aux_len:
                    raise ValueError(f"layer {idx}: only one ConcatAux layer is supported")
                self.aux_len = spec.aux_len
                shape = (shape[0] + spec.aux_len,)
            elif isinstance(spec, Dense):
                if len(shape) != 1:
                    raise ValueError(f"layer {idx}: Dense needs a flat input, got {shape}")
                shape = (spec.units,)
            elif isinstance(spec, Softmax):
                if len(shape) != 1:
                    raise ValueError(f"layer {idx}: Softmax needs a flat input")
            else:
                raise ValueError(f"layer {idx}: unknown spec {spec!r}")
            shapes.append(shape)
        return shapes

    def _init_params(self, seed: int) -> list[dict[str, np.ndarray]]:
        children = np.random.SeedSequence(seed).spawn(len(self.specs))
        params: list[dict[str, np.ndarray]] = []
        for idx, spec in enumerate(self.specs):
            rng = np.random.default_rng(children[idx])
            if isinstance(spec, Conv2D):
                c = self.shapes[idx][0]
                kh, kw = spec.kernel
                fan_in = c * kh * kw
                limit = np.sqrt(6.0 / fan_in)
                params.append({
                    "W": rng.uniform(-limit, limit, size=(spec.filters, c, kh, kw)).astype(self.dtype),
                    "b": np.zeros(spec.filters, dtype=self.dtype),
                })
            elif isinstance(spec, Dense):
                fan_in = self.shapes[idx][0]
                limit = np.sqrt(6.0 / fan_in)
                params.append({
                    "W": rng.uniform(-limit, limit, size=(spec.units, fan_in)).astype(self.dtype),
                    "b": np.zeros(spec.units, dtype=self.dtype),
                })
            else:
                params.append({})
        return params

    @property
    def n_classes(self) -> int:
        return self.shapes[-1][0]

    def zero_grads(self) -> list[dict[str, np.ndarray]]:
        return [
            {name: np.zeros_like(t) for name, t in layer.items()} for layer in self.params
        ]

    def parameter_count(self) -> int:
        return sum(t.size for layer in self.params for t in layer.values())

    def set_params(self, params: Sequence[dict[str, np.ndarray]]) -> None:
        for mine, new in zip(self.params, params):
            for name in mine:
                if mine[name].shape != new[name].shape:
                    raise ValueError("parameter shape mismatch")
                mine[name][...] = new[name].astype(self.dtype)

    def copy_params(self) -> list[dict[str, np.ndarray]]:
        return [{n: t.copy() for n, t in layer.items()} for layer in self.params]

    # -- forward / backward -------------------------------------------------

    def _prepare(self, x, aux):
        x = np.asarray(x, dtype=self.dtype)
        if x.shape == self.input_shape:
            x = x[None]
        if x.shape[1:] != self.input_shape:
            raise ValueError(f"input shape {x.shape[1:]} != expected {self.input_shape}")
        if self.aux_len:
            if aux is None:
                raise ValueError(f"network expects an aux vector of length {self.aux_len}")
            aux = np.asarray(aux, dtype=self.dtype)
            if aux.ndim == 1:
                aux = aux[None]
            if aux.shape != (x.shape[0], self.aux_len):
                raise ValueError(f"aux shape {aux.shape} != ({x.shape[0]}, {self.aux_len})")
        return x, aux

    def _forward(self, x: np.ndarray, aux, keep_cache: bool):
        caches: list = []
        out = x
        for idx, spec in enumerate(self.specs):
            if isinstance(spec, Conv2D):
                w, b = self.params[idx]["W"], self.params[idx]["b"]
                z, cols = _conv_forward_batch(out, w, b, spec.stride)
                mask = None
                if spec.activation == "relu":
                    mask = z > 0
                    z = np.maximum(z, 0.0)   # propagates non-finite values
                caches.append((out.shape, cols, mask) if keep_cache else None)
                out = z
            elif isinstance(spec, MaxPool2D):
                windows = sliding_window_view(out, (spec.size, spec.size), axis=(2, 3))
                windows = windows[:, :, ::spec.step, ::spec.step]
                flat = windows.reshape(*windows.shape[:4], -1)
                amax = flat.argmax(axis=-1)
                caches.append((out.shape, amax) if keep_cache else None)
                out = np.take_along_axis(flat, amax[..., None], axis=-1)[..., 0]
            elif isinstance(spec, Flatten):
                caches.append(out.shape if keep_cache else None)
                out = out.reshape(out.shape[0], -1)
            elif isinstance(spec, ConcatAux):
                caches.append(out.shape[1] if keep_cache else None)
                out = np.concatenate([out, aux], axis=1)
            elif isinstance(spec, Dense):
                w, b = self.params[idx]["W"], self.params[idx]["b"]
                z = out @ w.T + b
                mask = None
                if spec.activation == "relu":
                    mask = z > 0
                    z = np.maximum(z, 0.0)
                caches.append((out, mask) if keep_cache else None)
                out = z
            else:  # Softmax: logits pass through; probabilities via predict_proba
                caches.append(None)
            if not np.isfinite(out).all():
                raise FloatingPointError(
                    f"non-finite activations after layer {idx} ({type(spec).__name__})"
                )
        return out, caches

    def forward(self, x, aux=None) -> np.ndarray:
        """Logits for a batch (or single sample)."""
        x, aux = self._prepare(x, aux)
        out, _ = self._forward(x, aux, keep_cache=False)
        return out

    def predict_proba(self, x, aux=None) -> np.ndarray:
        return _softmax_rows(self.forward(x, aux))

    def loss_only(self, x, aux, targets) -> float:
        x, aux = self._prepare(x, aux)
        targets = np.atleast_1d(np.asarray(targets, dtype=np.int64))
        logits, _ = self._forward(x, aux, keep_cache=False)
        loss_sum, _, _ = _batch_cross_entropy(logits, targets)
        return loss_sum

    def loss_and_gradients(self, x, aux, targets):
        """Summed loss, correct count, parameter gradient sums and the aux gradient.

        Gradients are sums over the batch (not means) so partition results
        combine by addition; divide by the batch size for the average.
        """
        x, aux = self._prepare(x, aux)
        targets = np.atleast_1d(np.asarray(targets, dtype=np.int64))
        if targets.shape[0] != x.shape[0]:
            raise ValueError("one target per sample required")
        if targets.min() < 0 or targets.max() >= self.n_classes:
            raise ValueError(f"targets out of range for {self.n_classes} classes")
        if not isinstance(self.specs[-1], Softmax):
            raise ValueError("training requires a Softmax output layer")

        logits, caches = self._forward(x, aux, keep_cache=True)
        loss_sum, correct, delta = _batch_cross_entropy(logits, targets)
        delta = delta.astype(self.dtype)

        grads = self.zero_grads()
        d_aux = None
        for idx in range(len(self.specs) - 1, -1, -1):
            spec = self.specs[idx]
            if isinstance(spec, Softmax):
                continue
            if isinstance(spec, Dense):
                inp, mask = caches[idx]
                if mask is not None:
                    delta = np.where(mask, delta, 0.0)
                grads[idx]["W"][...] = delta.T @ inp
                grads[idx]["b"][...] = delta.sum(axis=0)
                delta = delta @ self.params[idx]["W"]
            elif isinstance(spec, ConcatAux):
                split = caches[idx]
                d_aux = delta[:, split:]
                delta = delta[:, :split]
            elif isinstance(spec, Flatten):
                delta = delta.reshape(caches[idx])
            elif isinstance(spec, MaxPool2D):
                in_shape, amax = caches[idx]
                dx = np.zeros(in_shape, dtype=self.dtype)
                oh, ow = amax.shape[2], amax.shape[3]
                for i in range(spec.size):
                    for j in range(spec.size):
                        sel = amax == (i * spec.size + j)
                        dx[:, :, i : i + spec.step * oh : spec.step,
                           j : j + spec.step * ow : spec.step] += delta * sel
                delta = dx
            elif isinstance(spec, Conv2D):
                in_shape, cols, mask = caches[idx]
                if mask is not None:
                    delta = np.where(mask, delta, 0.0)
                delta, dw, db = _conv_backward_batch(
                    delta, cols, self.params[idx]["W"], in_shape, spec.stride
                )
                grads[idx]["W"][...] = dw
                grads[idx]["b"][...] = db
            if not np.isfinite(delta).all():
                raise FloatingPointError(f"non-finite gradient below layer {idx}")
        return loss_sum, correct, grads, d_aux


def reference_specs(n_classes: int = 7, aux_len: int = 4) -> tuple[LayerSpec, ...]:
    """The reference architecture: two relu convolutions, demographic concat,
    one hidden dense layer and a softmax head."""
    return (
        Conv2D(filters=16, kernel=(3, 3), activation="relu"),
        Conv2D(filters=32, kernel=(3, 3), activation="relu"),
        Flatten(),
        ConcatAux(aux_len=aux_len),
        Dense(units=64, activation="relu"),
        Dense(units=n_classes, activation="none"),
        Softmax(),
    )


def reference_network(
    n_classes: int = 7,
    input_shape: tuple[int, int, int] = (6, 19, 19),
    aux_len: int = 4,
    seed: int = 0,
    dtype=VERIFY_DTYPE,
) -> Network:
    return Network(reference_specs(n_classes, aux_len), input_shape, seed=seed, dtype=dtype)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

class AdamState:
    """Adam with bias correction; mutates parameters in place (single owner)."""

    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = [{n: np.zeros_like(t) for n, t in layer.items()} for layer in params]
        self.v = [{n: np.zeros_like(t) for n, t in layer.items()} for layer in params]

    def step(self, params, grads) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for layer_p, layer_g, layer_m, layer_v in zip(params, grads, self.m, self.v):
            for name in layer_p:
                g = layer_g[name]
                if g.shape != layer_p[name].shape:
                    raise ValueError(f"gradient shape mismatch for {name!r}")
                m = layer_m[name]
                v = layer_v[name]
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * (g * g)
                layer_p[name] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(params, grads, state: AdamState):
    """Functional wrapper around AdamState.step; returns (params, state)."""
    state.step(params, grads)
    return params, state


# ---------------------------------------------------------------------------
# Gradient verification
# ---------------------------------------------------------------------------

def gradient_check(
    net: Network,
    x,
    aux,
    target: int,
    h: float = 1e-6,
    n_samples: int = 200,
    seed: int = 0,
    analytic_grads=None,
):
    """Compare analytic gradients against central differences.

    Perturbs a random subset of at least n_samples parameters by +-h and
    returns the worst relative error. Requires the 64-bit verification
    precision; pass analytic_grads to check an externally supplied gradient
    (for fault-injection tests).
    """
    if net.dtype != np.float64:
        raise ValueError("gradient_check requires the float64 verify precision")
    targets = np.asarray([target], dtype=np.int64)
    if analytic_grads is None:
        _, _, analytic_grads, _ = net.loss_and_gradients(x, aux, targets)

    tensors = []
    for idx, layer in enumerate(net.params):
        for name, t in layer.items():
            tensors.append((idx, name, t.size))
    total = sum(size for _, _, size in tensors)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(total, size=min(n_samples, total), replace=False)

    bounds = np.cumsum([size for _, _, size in tensors])
    max_rel = 0.0
    for flat in np.sort(chosen):
        ti = int(np.searchsorted(bounds, flat, side="right"))
        offset = int(flat - (bounds[ti - 1] if ti else 0))
        idx, name, _ = tensors[ti]
        tensor = net.params[idx][name]
        flat_view = tensor.reshape(-1)
        original = flat_view[offset]
        flat_view[offset] = original + h
        loss_plus = net.loss_only(x, aux, targets)
        flat_view[offset] = original - h
        loss_minus = net.loss_only(x, aux, targets)
        flat_view[offset] = original
        numeric = (loss_plus - loss_minus) / (2.0 * h)
        analytic = float(analytic_grads[idx][name].reshape(-1)[offset])
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        max_rel = max(max_rel, rel)
    return max_rel
