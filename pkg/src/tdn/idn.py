"""Input-output decoupled network.

Each sample ``z`` is spread into ``m`` masked rows (row ``j`` keeps only
``z[j]``), every row goes through one shared dense network, and output ``j``
is read from row ``j``. Output ``j`` therefore depends on input ``j`` alone.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .nn import Activation, LayerSpec, Network
from .serialization import ModelBundle

A, Q, G = Activation.AFFINE, Activation.SQUARE, Activation.GAUSSIAN

# hidden-layer activations; every variant is m -> 100 -> 100 -> m with an affine output
IDN_ARCHITECTURES = {
    "D1": (A, A),
    "D2": (A, Q),
    "D3": (A, G),
}


@dataclass
class IdnModel:
    core: Network
    architecture: str = "custom"

    def __post_init__(self):
        if self.core.in_dim != self.core.out_dim:
            raise ShapeError(f"decoupling core must be square, got {self.core.in_dim} -> {self.core.out_dim}")

    @property
    def m_z(self):
        return self.core.in_dim

    @property
    def networks(self):
        return {"core": self.core}

    def copy(self):
        return IdnModel(self.core.copy(), self.architecture)

    def to_bundle(self, scaler=None, meta=None):
        m = {"architecture": self.architecture}
        m.update(meta or {})
        return ModelBundle("idn", {"core": self.core}, m, scaler)

    @classmethod
    def from_bundle(cls, bundle):
        if bundle.role != "idn":
            raise ShapeError(f"expected an idn model file, got role {bundle.role!r}")
        return cls(bundle.networks["core"], bundle.meta.get("architecture", "custom"))


def build_idn(architecture, m_z, rng, hidden=100):
    try:
        a1, a2 = IDN_ARCHITECTURES[architecture]
    except KeyError:
        raise ConfigError(f"unknown IDN architecture {architecture!r}; known: {sorted(IDN_ARCHITECTURES)}") from None
    specs = [LayerSpec(m_z, hidden, a1), LayerSpec(hidden, hidden, a2), LayerSpec(hidden, m_z, A)]
    return IdnModel(Network.build(specs, rng), architecture)


def diagonalize(batch):
    """``(N, m)`` -> ``(N*m, m)``; row ``k*m + j`` holds ``batch[k, j]`` at column ``j``."""
    z = np.asarray(batch, dtype=np.float64)
    if z.ndim != 2:
        raise ShapeError(f"expected a 2-D batch, got shape {z.shape}")
    n, m = z.shape
    rows = np.zeros((n, m, m))
    idx = np.arange(m)
    rows[:, idx, idx] = z
    return rows.reshape(n * m, m)


@dataclass
class IdnForward:
    delta: np.ndarray
    n: int
    m: int
    caches: list = field(repr=False, default_factory=list)


def idn_forward(model, batch):
    z = np.asarray(batch, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != model.m_z:
        raise ShapeError(f"idn expects (N, {model.m_z}) input, got {z.shape}")
    n, m = z.shape
    out, caches = model.core.forward(diagonalize(z), "idn core")
    idx = np.arange(m)
    delta = out.reshape(n, m, m)[:, idx, idx]
    return IdnForward(delta, n, m, caches)


def idn_backward(model, fwd, grad_delta):
    """Parameter gradients for upstream ``dL/d(delta)``.

    Row ``(k, j)`` receives gradient only on its output coordinate ``j``.
    """
    g = np.asarray(grad_delta, dtype=np.float64)
    if g.shape != (fwd.n, fwd.m):
        raise ShapeError(f"gradient shape {g.shape} does not match delta {(fwd.n, fwd.m)}")
    up = np.zeros((fwd.n, fwd.m, fwd.m))
    idx = np.arange(fwd.m)
    up[:, idx, idx] = g
    grads, _ = model.core.backward(fwd.caches, up.reshape(fwd.n * fwd.m, fwd.m))
    return grads


def idn_apply(model, Z, chunk=4096):
    """``D(Z)`` for a large array, evaluated in chunks to bound memory."""
    Z = np.asarray(Z, dtype=np.float64)
    out = np.empty_like(Z)
    for i in range(0, len(Z), chunk):
        out[i : i + chunk] = idn_forward(model, Z[i : i + chunk]).delta
    return out
