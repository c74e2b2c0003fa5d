"""Transfer training of the decoupling network against a frozen VAE."""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import serialization
from .errors import ConfigError, ContractError, NumericError, ShapeError, TrainingError
from .idn import IdnModel, idn_backward, idn_forward
from .nn import RMSProp
from .seeding import substream
from .serialization import ModelBundle
from .vae import VaeModel, vae_backward, vae_forward, vae_loss

log = logging.getLogger(__name__)


@dataclass
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ShapeError("scaler mean and std must be equal-length vectors")
        if np.any(~(self.std > 0)):
            raise ConfigError(f"scaler std must be positive, got {self.std}")

    def apply(self, Z):
        return (np.asarray(Z, dtype=np.float64) - self.mean) / self.std

    def invert(self, Zs):
        return np.asarray(Zs, dtype=np.float64) * self.std + self.mean

    def scale_only(self, F):
        """Express an additive signal (no offset) in standardized units."""
        return np.asarray(F, dtype=np.float64) / self.std

    def unscale_only(self, F):
        return np.asarray(F, dtype=np.float64) * self.std

    def as_tuple(self):
        return (self.mean, self.std)


def fit_scaler(Z, names=None):
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or len(Z) == 0:
        raise ConfigError("cannot fit a scaler on an empty dataset")
    mean = Z.mean(axis=0)
    std = Z.std(axis=0)
    bad = np.flatnonzero(~(std > 0))
    if bad.size:
        label = names[bad[0]] if names is not None else f"column {bad[0]}"
        raise ConfigError(f"zero variance in {label}; cannot standardize")
    return Scaler(mean, std)


@dataclass
class FaultSampler:
    """Random additive training faults in standardized units.

    Each entry is faulty with probability ``p_add``; a faulty entry gets an
    amplitude drawn from ``U(amp_low, amp_high)`` (scalars or per-variable
    vectors) and, unless ``positive_only``, a random sign.
    """

    p_add: float = 0.1
    amp_low: object = 0.5
    amp_high: object = 3.0
    positive_only: bool = False

    def __post_init__(self):
        if not 0.0 <= self.p_add <= 1.0:
            raise ConfigError(f"p_add must lie in [0, 1], got {self.p_add}")
        lo, hi = np.asarray(self.amp_low, float), np.asarray(self.amp_high, float)
        if np.any(lo < 0) or np.any(hi < lo):
            raise ConfigError("fault amplitude bounds must satisfy 0 <= amp_low <= amp_high")

    def sample(self, shape, rng):
        mask = rng.random(shape) < self.p_add
        amp = rng.uniform(self.amp_low, self.amp_high, size=shape)
        sign = np.ones(shape) if self.positive_only else np.where(rng.random(shape) < 0.5, -1.0, 1.0)
        return np.where(mask, sign * amp, 0.0)


def generate_random_faults(Z, sampler, rng):
    """Return ``(Z + F, F)`` with ``F`` drawn from ``sampler``."""
    Z = np.asarray(Z, dtype=np.float64)
    F = sampler.sample(Z.shape, rng)
    return Z + F, F


@dataclass
class TdnModel:
    idn: IdnModel
    vae: VaeModel
    scaler: Scaler = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.idn.m_z != self.vae.m_z:
            raise ShapeError(f"idn width {self.idn.m_z} does not match vae input {self.vae.m_z}")

    def to_bundle(self):
        nets = {"idn.core": self.idn.core}
        nets.update({f"vae.{k}": v for k, v in self.vae.networks.items()})
        meta = {
            "idn_architecture": self.idn.architecture,
            "vae_architecture": self.vae.architecture,
            "lambda_v": self.vae.lambda_v,
            "n_samples": self.vae.n_samples,
        }
        meta.update(self.meta)
        scaler = self.scaler.as_tuple() if self.scaler is not None else None
        return ModelBundle("tdn", nets, meta, scaler)

    @classmethod
    def from_bundle(cls, bundle):
        if bundle.role != "tdn":
            raise ShapeError(f"expected a tdn model file, got role {bundle.role!r}")
        m = dict(bundle.meta)
        idn = IdnModel(bundle.networks["idn.core"], m.pop("idn_architecture", "custom"))
        vnets = {k[4:]: v for k, v in bundle.networks.items() if k.startswith("vae.")}
        vae = VaeModel(
            **vnets,
            n_samples=int(m.pop("n_samples", 8)),
            lambda_v=float(m.pop("lambda_v", 1.0)),
            architecture=m.pop("vae_architecture", "custom"),
            pretrained=True,
        )
        scaler = Scaler(*bundle.scaler) if bundle.scaler is not None else None
        return cls(idn, vae, scaler, m)


@dataclass
class TdnForward:
    idn_n: object
    idn_f: object
    V_n: np.ndarray
    V_f: np.ndarray
    vae_n: object
    vae_f: object

    @property
    def D_n(self):
        return self.idn_n.delta

    @property
    def D_f(self):
        return self.idn_f.delta

    @property
    def Vhat_n(self):
        return self.vae_n.recon

    @property
    def Vhat_f(self):
        return self.vae_f.recon


def tdn_forward(model, batch_n, batch_f, rng=None, n_samples=1, noise=None):
    """``V = Z + D(Z)`` for both batches, then reconstruct each through the VAE.

    ``noise`` may be a pair of explicit VAE noise arrays (normal, faulty).
    """
    batch_n = np.asarray(batch_n, dtype=np.float64)
    batch_f = np.asarray(batch_f, dtype=np.float64)
    if batch_n.shape != batch_f.shape:
        raise ShapeError(f"normal and faulty batches differ in shape: {batch_n.shape} vs {batch_f.shape}")
    try:
        fn = idn_forward(model.idn, batch_n)
        ff = idn_forward(model.idn, batch_f)
    except NumericError as exc:
        raise NumericError(f"tdn idn phase: {exc}") from None
    V_n = batch_n + fn.delta
    V_f = batch_f + ff.delta
    nz = noise if noise is not None else (None, None)
    try:
        vn = vae_forward(model.vae, V_n, rng, n_samples, noise=nz[0])
        vf = vae_forward(model.vae, V_f, rng, n_samples, noise=nz[1])
    except NumericError as exc:
        raise NumericError(f"tdn vae phase: {exc}") from None
    return TdnForward(fn, ff, V_n, V_f, vn, vf)


def mmd_loss(V_n, V_f):
    """Squared distance between batch means."""
    d = np.mean(V_n, axis=0) - np.mean(V_f, axis=0)
    return float(d @ d)


def tdn_loss(model, fwd, lambda_tl=0.1):
    """Return ``(J_tl, {"J_V_n", "J_V_f", "J_mmd"})``."""
    jn = vae_loss(model.vae, fwd.V_n, fwd.vae_n)[0]
    jf = vae_loss(model.vae, fwd.V_f, fwd.vae_f)[0]
    jm = mmd_loss(fwd.V_n, fwd.V_f)
    return jn + jf + lambda_tl * jm, {"J_V_n": jn, "J_V_f": jf, "J_mmd": jm}


def tdn_backward(model, fwd, lambda_tl=0.1):
    """Gradient of ``J_tl`` with respect to the decoupling-network parameters."""
    _, g_vn = vae_backward(model.vae, fwd.vae_n)
    _, g_vf = vae_backward(model.vae, fwd.vae_f)
    n = fwd.V_n.shape[0]
    g_m = (2.0 * lambda_tl / n) * (fwd.V_n.mean(axis=0) - fwd.V_f.mean(axis=0))
    gn = idn_backward(model.idn, fwd.idn_n, g_vn + g_m)
    gf = idn_backward(model.idn, fwd.idn_f, g_vf - g_m)
    return [a + b for a, b in zip(gn, gf)]


def vae_checksum(vae):
    return serialization.checksum(ModelBundle("vae", dict(vae.networks)))


@dataclass
class TrainTrace:
    rows: list = field(default_factory=list)  # (epoch, batch, J_V_n, J_V_f, J_mmd, J_tl)

    HEADER = ("epoch", "batch", "J_V_n", "J_V_f", "J_mmd", "J_tl")

    def epoch_means(self):
        arr = np.array([r[2:] for r in self.rows]) if self.rows else np.empty((0, 4))
        ep = np.array([r[0] for r in self.rows], dtype=int)
        return [arr[ep == e].mean(axis=0) for e in np.unique(ep)]


def train_tdn(
    model,
    Z_n,
    sampler,
    seed,
    epochs=15,
    batch_size=16,
    learning_rate=1e-3,
    lambda_tl=0.1,
    train_samples=1,
    on_epoch=None,
):
    """Transfer training loop.

    Per epoch a fresh faulty copy of ``Z_n`` is drawn; the two sets are
    shuffled with one shared permutation so each faulty batch is the faulty
    twin of its normal batch. Only the decoupling network is updated.
    ``on_epoch(epoch, model)`` is called after every epoch if given.
    """
    Z_n = np.asarray(Z_n, dtype=np.float64)
    if Z_n.ndim != 2 or Z_n.shape[1] != model.idn.m_z:
        raise ShapeError(f"expected (N, {model.idn.m_z}) training data, got {Z_n.shape}")
    if not model.vae.frozen:
        raise ContractError("vae must be frozen before transfer training")
    before = vae_checksum(model.vae)
    rng_faults = substream(seed, "faults")
    rng_noise = substream(seed, "noise")
    rng_shuffle = substream(seed, "shuffle")
    opt = RMSProp([model.idn.core], learning_rate)
    trace = TrainTrace()
    for epoch in range(int(epochs)):
        Z_f, _ = generate_random_faults(Z_n, sampler, rng_faults)
        order = rng_shuffle.permutation(len(Z_n))
        for b, i in enumerate(range(0, len(order), batch_size)):
            idx = order[i : i + batch_size]
            try:
                fwd = tdn_forward(model, Z_n[idx], Z_f[idx], rng_noise, train_samples)
            except NumericError as exc:
                raise TrainingError(f"transfer training diverged: {exc}", epoch=epoch) from None
            total, parts = tdn_loss(model, fwd, lambda_tl)
            if not np.isfinite(total):
                raise TrainingError("transfer loss is not finite", epoch=epoch)
            opt.step([tdn_backward(model, fwd, lambda_tl)])
            trace.rows.append((epoch, b, parts["J_V_n"], parts["J_V_f"], parts["J_mmd"], total))
        log.info("tdn epoch %d mean J_tl %.6f", epoch + 1, trace.epoch_means()[-1][3])
        if on_epoch is not None:
            on_epoch(epoch, model)
    if vae_checksum(model.vae) != before:
        raise ContractError("vae parameters changed during transfer training")
    return trace
