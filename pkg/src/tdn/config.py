"""Experiment configuration (JSON) and its content hash."""

import dataclasses
import hashlib
import json
from dataclasses import dataclass

from .errors import ConfigError
from .idn import IDN_ARCHITECTURES
from .sim.datasets import SYSTEMS
from .vae import VAE_ARCHITECTURES

# fields that identify a run rather than the experiment; left out of the hash
# so that repeated seeds of one experiment share a hash
RUN_FIELDS = ("seed", "workdir")


@dataclass
class ExperimentConfig:
    system: str = "numex"
    idn_architecture: str = "D1"
    vae_architecture: str = "V4"
    latent_dim: int = 10
    # vae pretraining
    vae_epochs: int = 15
    lambda_v: float = 1.0
    train_samples: int = 1
    eval_samples: int = 8
    # transfer training
    epochs: int = 15
    batch_size: int = 16
    learning_rate: float = 0.001
    lambda_tl: float = 0.1
    p_add: float = 0.1
    amp_low: float = 0.5
    amp_high: float = 3.0
    # monitoring
    expected_far: float = 0.005
    # data
    train_size: int = None  # None: system default
    test_size: int = None
    seed: int = 0
    workdir: str = "run"

    def validate(self):
        if self.system not in SYSTEMS:
            raise ConfigError(f"system must be one of {sorted(SYSTEMS)}, got {self.system!r}")
        if self.idn_architecture not in IDN_ARCHITECTURES:
            raise ConfigError(f"idn_architecture must be one of {sorted(IDN_ARCHITECTURES)}")
        if self.vae_architecture not in VAE_ARCHITECTURES:
            raise ConfigError(f"vae_architecture must be one of {sorted(VAE_ARCHITECTURES)}")
        for name in ("latent_dim", "batch_size", "train_samples", "eval_samples"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("epochs", "vae_epochs", "seed"):
            if int(getattr(self, name)) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("learning_rate", "lambda_v"):
            if not float(getattr(self, name)) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.lambda_tl < 0:
            raise ConfigError("lambda_tl must be >= 0")
        if not 0.0 <= self.p_add <= 1.0:
            raise ConfigError("p_add must lie in [0, 1]")
        if not 0.0 <= self.amp_low <= self.amp_high:
            raise ConfigError("need 0 <= amp_low <= amp_high")
        if not 0.0 < self.expected_far < 1.0:
            raise ConfigError("expected_far must lie in (0, 1)")
        for name in ("train_size", "test_size"):
            v = getattr(self, name)
            if v is not None and int(v) < 1:
                raise ConfigError(f"{name} must be positive")
        return self

    def to_dict(self):
        return dataclasses.asdict(self)

    def config_hash(self):
        d = {k: v for k, v in self.to_dict().items() if k not in RUN_FIELDS}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d):
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        kwargs = {}
        for key, value in d.items():
            default = known[key].default
            if value is not None and default is not None and not isinstance(default, str):
                try:
                    value = type(default)(value)
                except (TypeError, ValueError):
                    raise ConfigError(f"config key {key!r} has invalid value {value!r}") from None
            elif key in ("train_size", "test_size") and value is not None:
                value = int(value)
            kwargs[key] = value
        return cls(**kwargs).validate()


def load_config(path=None, overrides=None):
    """Read a JSON config (optional) and apply ``overrides`` (non-None values win)."""
    data = {}
    if path is not None:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    return ExperimentConfig.from_dict(data)
