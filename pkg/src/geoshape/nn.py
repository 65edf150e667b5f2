"""Multilayer perceptrons on the autodiff tape, plus Adam/SGD."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad

ACTIVATIONS = ("relu", "linear")


@dataclass
class MLPSpec:
    input_width: int
    output_width: int
    hidden_widths: list[int] = field(default_factory=lambda: [32, 32])
    activation: str = "relu"
    init_seed: int = 0

    def widths(self) -> list[int]:
        return [self.input_width, *self.hidden_widths, self.output_width]

    def validate(self):
        if any(int(w) < 1 for w in self.widths()):
            raise ValueError(f"layer widths must be >= 1, got {self.widths()}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class DenseLayer:
    weights: ad.Node  # [in, out]
    bias: ad.Node  # [out]
    activation: str

    @property
    def fan_in(self) -> int:
        return self.weights.shape[0]

    @property
    def fan_out(self) -> int:
        return self.weights.shape[1]

    def __call__(self, x: ad.Node) -> ad.Node:
        z = ad.add(ad.matmul(x, self.weights), self.bias)
        return ad.relu(z) if self.activation == "relu" else z


class MLP:
    def __init__(self, layers: list[DenseLayer]):
        self.layers = layers

    @property
    def input_width(self) -> int:
        return self.layers[0].fan_in

    @property
    def output_width(self) -> int:
        return self.layers[-1].fan_out

    def parameters(self) -> list[ad.Node]:
        out = []
        for layer in self.layers:
            out += [layer.weights, layer.bias]
        return out

    def __call__(self, x) -> ad.Node:
        x = x if isinstance(x, ad.Node) else ad.constant(x)
        if x.shape[-1] != self.input_width:
            raise ad.ShapeError("mlp input", x.shape, (self.input_width,))
        for layer in self.layers:
            x = layer(x)
        return x

    def state(self) -> list[np.ndarray]:
        return [p.value.copy() for p in self.parameters()]


def init_mlp(spec: MLPSpec, seed: int | None = None) -> MLP:
    """Glorot-uniform weights, zero biases; hidden layers use ``spec.activation``."""
    spec.validate()
    rng = np.random.default_rng(spec.init_seed if seed is None else seed)
    widths = spec.widths()
    layers = []
    for k, (n_in, n_out) in enumerate(zip(widths[:-1], widths[1:])):
        limit = np.sqrt(6.0 / (n_in + n_out))
        w = rng.uniform(-limit, limit, size=(n_in, n_out))
        act = spec.activation if k < len(widths) - 2 else "linear"
        layers.append(DenseLayer(ad.leaf(w, trainable=True, name=f"W{k}"),
                                 ad.leaf(np.zeros(n_out), trainable=True, name=f"b{k}"),
                                 act))
    return MLP(layers)


def _check_one_hot(s: np.ndarray):
    ok = np.all((s == 0.0) | (s == 1.0), axis=1) & (s.sum(axis=1) == 1.0)
    if not np.all(ok):
        bad = int(np.flatnonzero(~ok)[0])
        raise ValueError(f"row {bad} is not one-hot")


def encode(mlp: MLP, s, validate: bool = False) -> ad.Node:
    """Map one-hot rows [B, M] to unnormalized points [B, N]."""
    s_node = s if isinstance(s, ad.Node) else ad.constant(s)
    if validate:
        _check_one_hot(s_node.value)
    return mlp(s_node)


def decode(mlp: MLP, y) -> ad.Node:
    """Map received points [B, N] to logits [B, M]."""
    return mlp(y)


# ---------------------------------------------------------------------------
# optimizers


class SGD:
    def __init__(self, params: list[ad.Node], lr: float = 1e-2):
        self.params = params
        self.lr = lr

    def step(self, grads: dict):
        for p in self.params:
            p.value -= self.lr * grads[p]


class Adam:
    def __init__(self, params: list[ad.Node], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in params]
        self.v = [np.zeros_like(p.value) for p in params]

    def step(self, grads: dict):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1 ** self.t
        corr2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = grads[p]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.value -= self.lr * (m / corr1) / (np.sqrt(v / corr2) + self.eps)


def make_optimizer(name: str, params: list[ad.Node], lr: float, **kw):
    if name == "adam":
        return Adam(params, lr=lr, **kw)
    if name == "sgd":
        return SGD(params, lr=lr)
    raise ValueError(f"unknown optimizer {name!r}")


# ---------------------------------------------------------------------------
# persistence
#
# Text format:
#   mlp <n_layers>
#   layer <in> <out> <activation>
#   <in rows of out weights>
#   <one row of out biases>


def format_mlp(mlp: MLP) -> str:
    lines = [f"mlp {len(mlp.layers)}"]
    for layer in mlp.layers:
        lines.append(f"layer {layer.fan_in} {layer.fan_out} {layer.activation}")
        for row in layer.weights.value:
            lines.append(" ".join(repr(float(v)) for v in row))
        lines.append(" ".join(repr(float(v)) for v in layer.bias.value))
    return "\n".join(lines) + "\n"


def parse_mlp(text: str) -> MLP:
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not rows or rows[0][0] != "mlp":
        raise ValueError("line 1: expected 'mlp <n_layers>' header")
    n_layers = int(rows[0][1])
    pos, layers = 1, []
    for _ in range(n_layers):
        head = rows[pos] if pos < len(rows) else ["<eof>"]
        if head[0] != "layer" or len(head) != 4:
            raise ValueError(f"entry {pos + 1}: expected 'layer' header")
        n_in, n_out, act = int(head[1]), int(head[2]), head[3]
        if pos + 1 + n_in >= len(rows):
            raise ValueError(f"entry {pos + 1}: truncated layer, expected {n_in} weight rows and a bias row")
        w = np.array([[float(v) for v in r] for r in rows[pos + 1:pos + 1 + n_in]])
        b = np.array([float(v) for v in rows[pos + 1 + n_in]])
        if w.shape != (n_in, n_out) or b.shape != (n_out,):
            raise ValueError(f"entry {pos + 1}: layer shape mismatch")
        layers.append(DenseLayer(ad.leaf(w, trainable=True), ad.leaf(b, trainable=True), act))
        pos += n_in + 2
    return MLP(layers)


def save_mlp(mlp: MLP, path):
    Path(path).write_text(format_mlp(mlp))


def load_mlp(path) -> MLP:
    return parse_mlp(Path(path).read_text())
