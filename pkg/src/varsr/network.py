"""Deep residual convolutional network for luminance super-resolution.

The model is a plain cascade of same-size convolutions (zero padding
(k-1)/2) with a rectifier after every layer except the last, plus a global
skip connection: the network predicts a residual plane and the output is
input + residual. All math is float64 numpy; forward, backward, and the
SGD-side helpers are pure functions, so identical inputs give bit-identical
results.

Batches are 4-D arrays (batch, channels, height, width). The first layer
takes 1 channel (luminance), the last emits 1 channel (residual); interior
layers are ``filters`` wide.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InvalidParameter, ShapeMismatch

FORMAT_MAGIC = b"VSRN"
FORMAT_VERSION = 1


@dataclass
class ConvLayer:
    weights: np.ndarray  # (out_channels, in_channels, k, k)
    biases: np.ndarray  # (out_channels,)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 4 or self.weights.shape[2] != self.weights.shape[3]:
            raise ShapeMismatch(f"conv weights must be (o, c, k, k), got {self.weights.shape}")
        if self.kernel % 2 == 0:
            raise InvalidParameter(f"kernel size must be odd, got {self.kernel}")
        if self.biases.shape != (self.out_channels,):
            raise ShapeMismatch("bias vector must have one entry per output channel")

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel(self) -> int:
        return self.weights.shape[2]


@dataclass
class NetworkModel:
    """Ordered conv layers plus training provenance.

    metadata holds the estimator id and scale factors the model was trained
    with, and a free-form run descriptor; all fields must stay deterministic
    for a given training configuration so that serialized models are
    reproducible byte for byte.
    """

    layers: list
    activation: str = "relu"
    estimator: str | None = None
    scales: tuple = ()
    run: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.layers) < 1:
            raise InvalidParameter("model needs at least one layer")
        if self.layers[0].in_channels != 1:
            raise ShapeMismatch("first layer must take 1 input channel")
        if self.layers[-1].out_channels != 1:
            raise ShapeMismatch("last layer must emit 1 output channel")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.in_channels != prev.out_channels:
                raise ShapeMismatch("adjacent layers disagree on channel width")
        interior = {l.out_channels for l in self.layers[:-1]}
        if len(interior) > 1:
            raise ShapeMismatch("interior layers must share one filter width")
        self.scales = tuple(int(s) for s in self.scales)

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def filters(self) -> int:
        return self.layers[0].out_channels

    @property
    def kernel(self) -> int:
        return self.layers[0].kernel

    @property
    def receptive_field(self) -> int:
        return receptive_field(self.depth, self.kernel)

    def copy(self) -> "NetworkModel":
        return NetworkModel(
            layers=[ConvLayer(l.weights.copy(), l.biases.copy()) for l in self.layers],
            activation=self.activation,
            estimator=self.estimator,
            scales=self.scales,
            run=dict(self.run),
        )


@dataclass
class GradientSet:
    """Per-layer parameter gradients, shape-congruent with a model.

    input_grad is the gradient with respect to the network input (including
    the identity term contributed by the skip connection).
    """

    weight_grads: list
    bias_grads: list
    input_grad: np.ndarray

    def arrays(self):
        yield from self.weight_grads
        yield from self.bias_grads
        yield self.input_grad


def receptive_field(depth: int, kernel: int) -> int:
    """Spatial extent of input pixels influencing one output pixel."""
    if depth < 1:
        raise InvalidParameter(f"depth must be >= 1, got {depth}")
    if kernel % 2 == 0 or kernel < 1:
        raise InvalidParameter(f"kernel size must be odd and positive, got {kernel}")
    return depth * (kernel - 1) + 1


def init_model(depth: int, filters: int, kernel: int = 3, seed: int = 0) -> NetworkModel:
    """He-initialized model: N(0, sqrt(2/fan_in)) weights, zero biases.

    Deterministic for a given seed. fan_in = in_channels * kernel^2.
    """
    if depth < 2:
        raise InvalidParameter(f"depth must be >= 2, got {depth}")
    if filters < 1:
        raise InvalidParameter(f"filters must be >= 1, got {filters}")
    if kernel % 2 == 0:
        raise InvalidParameter(f"kernel size must be odd, got {kernel}")
    rng = np.random.default_rng(seed)
    layers = []
    for i in range(depth):
        c_in = 1 if i == 0 else filters
        c_out = 1 if i == depth - 1 else filters
        std = np.sqrt(2.0 / (c_in * kernel * kernel))
        w = rng.normal(0.0, std, size=(c_out, c_in, kernel, kernel))
        layers.append(ConvLayer(w, np.zeros(c_out)))
    return NetworkModel(layers=layers)


def parameter_counts(model: NetworkModel) -> tuple[int, int]:
    """(weight count, bias count) summed over all layers."""
    return (
        sum(l.weights.size for l in model.layers),
        sum(l.biases.size for l in model.layers),
    )


def _check_input(model: NetworkModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ShapeMismatch(f"input batch must be 4-D (b, c, h, w), got shape {x.shape}")
    if x.shape[1] != model.layers[0].in_channels:
        raise ShapeMismatch(
            f"input has {x.shape[1]} channels, model expects {model.layers[0].in_channels}"
        )
    k = model.kernel
    if x.shape[2] < k or x.shape[3] < k:
        raise ShapeMismatch(f"spatial size {x.shape[2]}x{x.shape[3]} smaller than kernel {k}")
    return x


def _conv2d(x: np.ndarray, layer: ConvLayer) -> np.ndarray:
    # Same-size convolution: zero pad by (k-1)/2, contract windows with weights.
    k = layer.kernel
    p = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))
    out = np.einsum("bchwij,ocij->bohw", win, layer.weights, optimize=True)
    return out + layer.biases[None, :, None, None]


def _forward_states(model: NetworkModel, x: np.ndarray):
    """Residual output plus per-layer (input, pre-activation) pairs for backprop."""
    states = []
    a = x
    last = model.depth - 1
    for i, layer in enumerate(model.layers):
        z = _conv2d(a, layer)
        states.append((a, z))
        a = np.maximum(z, 0.0) if i < last else z
    return a, states


def forward(model: NetworkModel, ilr) -> np.ndarray:
    """Super-resolved batch: ilr plus the predicted residual."""
    x = _check_input(model, ilr)
    res, _ = _forward_states(model, x)
    return x + res


def forward_residual(model: NetworkModel, ilr) -> np.ndarray:
    """The raw residual prediction, before the skip connection adds it back."""
    x = _check_input(model, ilr)
    res, _ = _forward_states(model, x)
    return res


def backward(model: NetworkModel, ilr, grad_out, _states=None) -> GradientSet:
    """Exact parameter gradients under d(loss)/d(output) = grad_out.

    The rectifier subgradient at exactly 0 is taken as 0. ``_states`` lets a
    caller reuse activations from a forward pass it already ran.
    """
    x = _check_input(model, ilr)
    g = np.asarray(grad_out, dtype=np.float64)
    if g.shape != x.shape:
        raise ShapeMismatch(f"grad_out shape {g.shape} differs from output shape {x.shape}")
    if _states is None:
        _, _states = _forward_states(model, x)

    weight_grads = [None] * model.depth
    bias_grads = [None] * model.depth
    last = model.depth - 1
    for i in range(last, -1, -1):
        a_in, z = _states[i]
        if i < last:
            g = g * (z > 0.0)
        layer = model.layers[i]
        k = layer.kernel
        p = (k - 1) // 2
        h, w = a_in.shape[2], a_in.shape[3]
        ap = np.pad(a_in, ((0, 0), (0, 0), (p, p), (p, p)))
        win = sliding_window_view(ap, (k, k), axis=(2, 3))
        weight_grads[i] = np.einsum("bohw,bchwij->ocij", g, win, optimize=True)
        bias_grads[i] = g.sum(axis=(0, 2, 3))
        gp = np.zeros_like(ap)
        for di in range(k):
            for dj in range(k):
                gp[:, :, di : di + h, dj : dj + w] += np.einsum(
                    "bohw,oc->bchw", g, layer.weights[:, :, di, dj], optimize=True
                )
        g = gp[:, :, p : p + h, p : p + w]
    # Skip connection: the output feeds back to the input with unit weight.
    return GradientSet(weight_grads, bias_grads, input_grad=grad_out + g)


def clip_gradients(grads: GradientSet, theta: float) -> GradientSet:
    """Element-wise clamp of every gradient to [-theta, theta]."""
    if not theta > 0:
        raise InvalidParameter(f"clip threshold must be positive, got {theta}")
    return GradientSet(
        weight_grads=[np.clip(g, -theta, theta) for g in grads.weight_grads],
        bias_grads=[np.clip(g, -theta, theta) for g in grads.bias_grads],
        input_grad=np.clip(grads.input_grad, -theta, theta),
    )


def sgd_step(model: NetworkModel, grads: GradientSet, learning_rate: float) -> None:
    """In-place plain SGD update w <- w - lr * g."""
    for layer, gw, gb in zip(model.layers, grads.weight_grads, grads.bias_grads):
        layer.weights -= learning_rate * gw
        layer.biases -= learning_rate * gb


def save_model(path, model: NetworkModel) -> None:
    """Serialize a model; the byte layout is documented in the README.

    Header fields and layer order are fixed, array payloads are raw
    little-endian float64, so save/load round-trips are bit-exact.
    """
    header = {
        "format_version": FORMAT_VERSION,
        "depth": model.depth,
        "filters": model.filters,
        "kernel": model.kernel,
        "activation": model.activation,
        "estimator": model.estimator,
        "scales": list(model.scales),
        "run": model.run,
        "layer_shapes": [list(l.weights.shape) for l in model.layers],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(FORMAT_MAGIC)
        f.write(struct.pack("<II", FORMAT_VERSION, len(blob)))
        f.write(blob)
        for layer in model.layers:
            f.write(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(layer.biases, dtype="<f8").tobytes())


def load_model(path) -> NetworkModel:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != FORMAT_MAGIC:
            raise InvalidParameter(f"not a model file (bad magic {magic!r})")
        version, hlen = struct.unpack("<II", f.read(8))
        if version != FORMAT_VERSION:
            raise InvalidParameter(f"unsupported model format version {version}")
        header = json.loads(f.read(hlen).decode("utf-8"))
        layers = []
        for shape in header["layer_shapes"]:
            o, c, k, _ = shape
            w = np.frombuffer(f.read(o * c * k * k * 8), dtype="<f8").reshape(o, c, k, k)
            b = np.frombuffer(f.read(o * 8), dtype="<f8")
            layers.append(ConvLayer(w.copy(), b.copy()))
    return NetworkModel(
        layers=layers,
        activation=header["activation"],
        estimator=header["estimator"],
        scales=tuple(header["scales"]),
        run=header["run"],
    )
