"""Small dense-network engine with hand-written backpropagation.

Batches are row-major: an ``(N, in_dim)`` input maps to ``(N, out_dim)``.
Each layer computes ``iota = a_prev @ W.T + b`` followed by an elementwise
activation, with ``W`` stored as ``(out_dim, in_dim)``.
"""

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ShapeError


class Activation(str, enum.Enum):
    AFFINE = "affine"
    SQUARE = "square"
    SIGMOID = "sigmoid"
    GAUSSIAN = "gaussian"
    TANH = "tanh"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        short = {"A": cls.AFFINE, "Q": cls.SQUARE, "S": cls.SIGMOID, "G": cls.GAUSSIAN, "T": cls.TANH}
        if value in short:
            return short[value]
        return cls(str(value).lower())


def activate(kind, x):
    if kind is Activation.AFFINE:
        return x
    if kind is Activation.SQUARE:
        return x * x
    if kind is Activation.SIGMOID:
        # split by sign so exp never overflows
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        e = np.exp(x[~pos])
        out[~pos] = e / (1.0 + e)
        return out
    if kind is Activation.GAUSSIAN:
        return 1.0 - np.exp(-x * x)
    if kind is Activation.TANH:
        return np.tanh(x)
    raise ValueError(f"unknown activation {kind!r}")


def activation_grad(kind, x, a):
    """Derivative of ``activate(kind, x)`` w.r.t. ``x``; ``a`` is the forward value."""
    if kind is Activation.AFFINE:
        return np.ones_like(x)
    if kind is Activation.SQUARE:
        return 2.0 * x
    if kind is Activation.SIGMOID:
        return a * (1.0 - a)
    if kind is Activation.GAUSSIAN:
        return 2.0 * x * (1.0 - a)
    if kind is Activation.TANH:
        return 1.0 - a * a
    raise ValueError(f"unknown activation {kind!r}")


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: Activation = Activation.AFFINE

    def __post_init__(self):
        if int(self.in_dim) <= 0 or int(self.out_dim) <= 0:
            raise ShapeError(f"layer dims must be positive, got {self.in_dim}->{self.out_dim}")
        object.__setattr__(self, "activation", Activation.parse(self.activation))


@dataclass
class Dense:
    """One affine map plus activation. ``weight`` is ``(out_dim, in_dim)``."""

    weight: np.ndarray
    bias: np.ndarray
    activation: Activation = Activation.AFFINE
    frozen: bool = False

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        self.activation = Activation.parse(self.activation)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(f"weight {self.weight.shape} and bias {self.bias.shape} do not match")

    @property
    def spec(self):
        return LayerSpec(self.weight.shape[1], self.weight.shape[0], self.activation)

    @classmethod
    def init(cls, spec, rng):
        """Glorot-uniform weights, zero bias."""
        limit = np.sqrt(6.0 / (spec.in_dim + spec.out_dim))
        w = rng.uniform(-limit, limit, size=(spec.out_dim, spec.in_dim))
        return cls(w, np.zeros(spec.out_dim), spec.activation)


@dataclass
class LayerCache:
    inputs: np.ndarray
    iota: np.ndarray
    out: np.ndarray


@dataclass
class Network:
    layers: list = field(default_factory=list)

    def __post_init__(self):
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.weight.shape[0] != nxt.weight.shape[1]:
                raise ShapeError(
                    f"layers do not chain: {prev.weight.shape[0]} outputs feed {nxt.weight.shape[1]} inputs"
                )

    @classmethod
    def build(cls, specs, rng):
        specs = [s if isinstance(s, LayerSpec) else LayerSpec(*s) for s in specs]
        return cls([Dense.init(s, rng) for s in specs])

    @property
    def in_dim(self):
        return self.layers[0].weight.shape[1]

    @property
    def out_dim(self):
        return self.layers[-1].weight.shape[0]

    @property
    def specs(self):
        return [layer.spec for layer in self.layers]

    def freeze(self, frozen=True):
        for layer in self.layers:
            layer.frozen = frozen
        return self

    @property
    def frozen(self):
        return all(layer.frozen for layer in self.layers)

    def parameters(self):
        """Flat list ``[W1, b1, W2, b2, ...]`` (same order as gradients)."""
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def forward(self, x, name="network"):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(f"{name}: expected (N, {self.in_dim}) input, got {x.shape}")
        caches = []
        a = x
        for i, layer in enumerate(self.layers):
            # overflow is reported below with the layer index
            with np.errstate(over="ignore", invalid="ignore"):
                iota = a @ layer.weight.T + layer.bias
                out = activate(layer.activation, iota)
            if not np.all(np.isfinite(out)):
                raise NumericError(f"{name}: non-finite activations in layer {i}")
            caches.append(LayerCache(a, iota, out))
            a = out
        return a, caches

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, caches, grad_out):
        """Backpropagate ``dL/d(output)``.

        Returns ``(param_grads, grad_in)`` where ``param_grads`` lines up with
        ``parameters()``. Frozen layers still pass gradients to their inputs.
        """
        grad_out = np.asarray(grad_out, dtype=np.float64)
        if len(caches) != len(self.layers) or grad_out.shape != caches[-1].out.shape:
            raise ShapeError(
                f"gradient shape {grad_out.shape} does not match cached output "
                f"{caches[-1].out.shape if caches else None}"
            )
        grads = [None] * (2 * len(self.layers))
        g = grad_out
        for i in range(len(self.layers) - 1, -1, -1):
            layer, c = self.layers[i], caches[i]
            g_iota = g * activation_grad(layer.activation, c.iota, c.out)
            grads[2 * i] = g_iota.T @ c.inputs
            grads[2 * i + 1] = g_iota.sum(axis=0)
            g = g_iota @ layer.weight
        return grads, g

    def copy(self):
        return Network(
            [Dense(l.weight.copy(), l.bias.copy(), l.activation, l.frozen) for l in self.layers]
        )


@dataclass
class RMSProp:
    """RMSProp over a fixed list of networks.

    ``state`` holds one running mean of squared gradients per parameter
    array, aligned with the concatenated ``parameters()`` of ``networks``.
    """

    networks: list
    learning_rate: float = 1e-3
    decay: float = 0.9
    epsilon: float = 1e-8
    state: list = None

    def __post_init__(self):
        if self.state is None:
            self.state = [np.zeros_like(p) for net in self.networks for p in net.parameters()]

    def step(self, grads):
        """Apply one update; ``grads`` is one list per network."""
        i = 0
        for net, net_grads in zip(self.networks, grads):
            params = net.parameters()
            if len(params) != len(net_grads):
                raise ShapeError("gradient list does not match network parameters")
            for j, (p, g) in enumerate(zip(params, net_grads)):
                if not net.layers[j // 2].frozen:
                    rmsprop_step(p, g, self.state[i], self.learning_rate, self.decay, self.epsilon)
                i += 1


def rmsprop_step(param, grad, sq_avg, learning_rate=1e-3, decay=0.9, epsilon=1e-8):
    """In-place RMSProp update of ``param`` and its accumulator ``sq_avg``."""
    if param.shape != grad.shape or sq_avg.shape != param.shape:
        raise ShapeError(f"shape mismatch: param {param.shape}, grad {grad.shape}, state {sq_avg.shape}")
    sq_avg *= decay
    sq_avg += (1.0 - decay) * grad * grad
    param -= learning_rate * grad / np.sqrt(sq_avg + epsilon)
    return param, sq_avg
