"""Variational autoencoder on top of ``nn``: forward, loss, gradients, pretraining."""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError, ShapeError, TrainingError
from .nn import Activation, LayerSpec, Network, RMSProp
from .serialization import ModelBundle

log = logging.getLogger(__name__)

LOGVAR_CLAMP = 10.0

A, Q, S, G, T = (Activation.AFFINE, Activation.SQUARE, Activation.SIGMOID, Activation.GAUSSIAN, Activation.TANH)

# (encoder layers, decoder hidden layers); widths after the input dim.
# Heads are affine maps from the last encoder width to latent_dim, and the
# decoder always ends with an affine layer back to m_z.
VAE_ARCHITECTURES = {
    "V1": ([(100, A)], [(100, A)]),
    "V2": ([(100, A)], [(100, T)]),
    "V3": ([(100, T)], [(100, A)]),
    "V4": ([(100, G), (20, S)], [(20, S), (100, S)]),
    "V5": ([(100, Q), (20, S)], [(20, S), (100, S)]),
    "V6": ([(100, Q), (20, A)], [(20, S), (100, S)]),
}


@dataclass
class VaeModel:
    trunk: Network
    mean_head: Network
    logvar_head: Network
    decoder: Network
    n_samples: int = 8
    lambda_v: float = 1.0
    architecture: str = "custom"
    pretrained: bool = False

    def __post_init__(self):
        t_out = self.trunk.out_dim
        if self.mean_head.in_dim != t_out or self.logvar_head.in_dim != t_out:
            raise ShapeError("mean and log-variance heads must consume the trunk output")
        if self.mean_head.out_dim != self.logvar_head.out_dim:
            raise ShapeError("mean and log-variance heads must share the latent width")
        if self.decoder.in_dim != self.latent_dim or self.decoder.out_dim != self.trunk.in_dim:
            raise ShapeError(
                f"decoder must map latent {self.latent_dim} -> observation {self.trunk.in_dim}, "
                f"got {self.decoder.in_dim} -> {self.decoder.out_dim}"
            )
        if int(self.n_samples) < 1:
            raise ConfigError("n_samples must be >= 1")
        if not self.lambda_v > 0:
            raise ConfigError("lambda_v must be positive")

    @property
    def latent_dim(self):
        return self.mean_head.out_dim

    @property
    def m_z(self):
        return self.trunk.in_dim

    @property
    def networks(self):
        return {
            "trunk": self.trunk,
            "mean_head": self.mean_head,
            "logvar_head": self.logvar_head,
            "decoder": self.decoder,
        }

    def freeze(self, frozen=True):
        for net in self.networks.values():
            net.freeze(frozen)
        return self

    @property
    def frozen(self):
        return all(net.frozen for net in self.networks.values())

    def copy(self):
        nets = {k: v.copy() for k, v in self.networks.items()}
        return VaeModel(**nets, n_samples=self.n_samples, lambda_v=self.lambda_v,
                        architecture=self.architecture, pretrained=self.pretrained)

    def to_bundle(self, scaler=None, meta=None):
        m = {
            "architecture": self.architecture,
            "lambda_v": self.lambda_v,
            "latent_dim": self.latent_dim,
            "n_samples": self.n_samples,
            "pretrained": self.pretrained,
        }
        m.update(meta or {})
        return ModelBundle("vae", dict(self.networks), m, scaler)

    @classmethod
    def from_bundle(cls, bundle):
        if bundle.role != "vae":
            raise ShapeError(f"expected a vae model file, got role {bundle.role!r}")
        m = bundle.meta
        return cls(
            **bundle.networks,
            n_samples=int(m.get("n_samples", 8)),
            lambda_v=float(m.get("lambda_v", 1.0)),
            architecture=m.get("architecture", "custom"),
            pretrained=bool(m.get("pretrained", False)),
        )


def build_vae(architecture, m_z, rng, latent_dim=10, n_samples=8, lambda_v=1.0):
    """Glorot-initialised VAE from one of ``VAE_ARCHITECTURES``."""
    try:
        enc, dec = VAE_ARCHITECTURES[architecture]
    except KeyError:
        raise ConfigError(f"unknown VAE architecture {architecture!r}; known: {sorted(VAE_ARCHITECTURES)}") from None
    specs, d = [], m_z
    for width, act in enc:
        specs.append(LayerSpec(d, width, act))
        d = width
    trunk = Network.build(specs, rng)
    mean_head = Network.build([LayerSpec(d, latent_dim, A)], rng)
    logvar_head = Network.build([LayerSpec(d, latent_dim, A)], rng)
    specs, d = [], latent_dim
    for width, act in dec:
        specs.append(LayerSpec(d, width, act))
        d = width
    specs.append(LayerSpec(d, m_z, A))
    decoder = Network.build(specs, rng)
    return VaeModel(trunk, mean_head, logvar_head, decoder, n_samples, lambda_v, architecture)


@dataclass
class LatentBatch:
    mean: np.ndarray  # (N, m)
    logvar: np.ndarray  # (N, m), clamped
    noise: np.ndarray  # (S, N, m)
    samples: np.ndarray  # (S, N, m)


@dataclass
class VaeForward:
    inputs: np.ndarray
    recon: np.ndarray  # mean over samples, (N, m_z)
    sample_recons: np.ndarray  # (S, N, m_z)
    latent: LatentBatch
    caches: dict = field(repr=False, default_factory=dict)
    raw_logvar: np.ndarray = field(repr=False, default=None)


def vae_forward(model, batch, rng=None, n_samples=None, noise=None):
    """Encode, sample ``n_samples`` latents by reparameterisation, decode.

    Either ``rng`` or an explicit ``noise`` array of shape ``(S, N, latent)``
    must be supplied.
    """
    z = np.asarray(batch, dtype=np.float64)
    h, c_trunk = model.trunk.forward(z, "vae trunk")
    mu, c_mu = model.mean_head.forward(h, "vae mean head")
    lv_raw, c_lv = model.logvar_head.forward(h, "vae log-variance head")
    lv = np.clip(lv_raw, -LOGVAR_CLAMP, LOGVAR_CLAMP)
    n = z.shape[0]
    if noise is None:
        if rng is None:
            raise ValueError("vae_forward needs rng or noise")
        s = int(n_samples or model.n_samples)
        noise = rng.standard_normal((s, n, model.latent_dim))
    else:
        noise = np.asarray(noise, dtype=np.float64)
        if noise.ndim != 3 or noise.shape[1:] != (n, model.latent_dim):
            raise ShapeError(f"noise must be (S, {n}, {model.latent_dim}), got {noise.shape}")
        s = noise.shape[0]
    std = np.exp(0.5 * lv)
    samples = mu + std * noise
    if not np.all(np.isfinite(samples)):
        raise NumericError("vae: non-finite latent samples")
    dec_out, c_dec = model.decoder.forward(samples.reshape(s * n, -1), "vae decoder")
    sample_recons = dec_out.reshape(s, n, -1)
    return VaeForward(
        z,
        sample_recons.mean(axis=0),
        sample_recons,
        LatentBatch(mu, lv, noise, samples),
        {"trunk": c_trunk, "mean_head": c_mu, "logvar_head": c_lv, "decoder": c_dec},
        lv_raw,
    )


def kl_terms(mean, logvar):
    """Per-row KL divergence of N(mean, exp(logvar)) from N(0, I)."""
    return 0.5 * np.sum(mean**2 + np.expm1(logvar) - logvar, axis=1)


def vae_loss(model, batch, fwd, lambda_v=None):
    """Return ``(total, recon_term, kl_term)``."""
    lam = model.lambda_v if lambda_v is None else lambda_v
    z = np.asarray(batch, dtype=np.float64)
    err = z[None, :, :] - fwd.sample_recons
    recon = float(np.mean(np.sum(err * err, axis=2)))
    kl = float(np.mean(kl_terms(fwd.latent.mean, fwd.latent.logvar)))
    return recon + lam * kl, recon, kl


def vae_backward(model, fwd, lambda_v=None, scale=1.0):
    """Gradients of ``scale * J_V`` for the batch in ``fwd``.

    Returns ``(grads, input_grad)``; ``grads`` maps network name to its
    parameter-gradient list. ``input_grad`` includes both the direct
    reconstruction term and the path through the encoder.
    """
    lam = model.lambda_v if lambda_v is None else lambda_v
    z = fwd.inputs
    s, n, _ = fwd.sample_recons.shape
    lat = fwd.latent
    err = fwd.sample_recons - z[None]  # (S, N, m_z)
    g_rec = (2.0 * scale / (n * s)) * err
    g_dec, g_samp = model.decoder.backward(fwd.caches["decoder"], g_rec.reshape(s * n, -1))
    g_samp = g_samp.reshape(s, n, -1)
    std = np.exp(0.5 * lat.logvar)
    kl_scale = lam * scale / n
    g_mu = g_samp.sum(axis=0) + kl_scale * lat.mean
    g_lv = np.sum(g_samp * lat.noise, axis=0) * 0.5 * std + kl_scale * 0.5 * np.expm1(lat.logvar)
    # clamp kills the gradient outside [-LOGVAR_CLAMP, LOGVAR_CLAMP]
    g_lv = g_lv * (np.abs(fwd.raw_logvar) <= LOGVAR_CLAMP)
    g_mh, g_h1 = model.mean_head.backward(fwd.caches["mean_head"], g_mu)
    g_lh, g_h2 = model.logvar_head.backward(fwd.caches["logvar_head"], g_lv)
    g_tr, g_in = model.trunk.backward(fwd.caches["trunk"], g_h1 + g_h2)
    g_in = g_in - g_rec.sum(axis=0)
    grads = {"trunk": g_tr, "mean_head": g_mh, "logvar_head": g_lh, "decoder": g_dec}
    return grads, g_in


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


def pretrain_vae(model, Z, rng, epochs=15, batch_size=16, learning_rate=1e-3, lambda_v=None, train_samples=1):
    """RMSProp pretraining on standardized normal data.

    ``rng`` drives both batch shuffling and reparameterisation noise.
    Returns the per-epoch mean loss trace; ``model`` is updated in place.
    """
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[1] != model.m_z:
        raise ShapeError(f"expected (N, {model.m_z}) training data, got {Z.shape}")
    lam = model.lambda_v if lambda_v is None else lambda_v
    names = list(model.networks)
    opt = RMSProp([model.networks[k] for k in names], learning_rate)
    trace = []
    for epoch in range(int(epochs)):
        total, count = 0.0, 0
        for idx in _batches(len(Z), batch_size, rng):
            zb = Z[idx]
            try:
                fwd = vae_forward(model, zb, rng, n_samples=train_samples)
            except NumericError as exc:
                raise TrainingError(f"vae pretraining diverged: {exc}", epoch=epoch) from None
            loss, _, _ = vae_loss(model, zb, fwd, lam)
            if not np.isfinite(loss):
                raise TrainingError("vae pretraining loss is not finite", epoch=epoch)
            grads, _ = vae_backward(model, fwd, lam)
            opt.step([grads[k] for k in names])
            total += loss * len(idx)
            count += len(idx)
        trace.append(total / count)
        log.info("vae epoch %d mean J_V %.6f", epoch + 1, trace[-1])
    if epochs:
        model.pretrained = True
    return trace
