"""Named dataset scenarios and their CSV/JSON file format.

Scenarios per system: ``train`` (normal only) and ``test-<fault id>`` (a
normal prefix of ``ONSET`` samples followed by the faulty remainder).
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DataError
from ..fileio import atomic_write_text, csv_text, format_float
from ..seeding import substream
from . import numex, tts

SYSTEMS = {
    "numex": {"module": numex, "train_size": 15000, "test_size": 1000},
    "tts": {"module": tts, "train_size": 16000, "test_size": 2000},
}
ONSET = 200


@dataclass
class Dataset:
    Z: np.ndarray
    labels: np.ndarray  # True where the sample is faulty
    F: np.ndarray  # additive ground truth in physical units
    fault_id: str = "normal"
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.Z)

    @property
    def additive(self):
        return bool(self.meta.get("additive", False))


def system_module(system):
    try:
        return SYSTEMS[system]["module"]
    except KeyError:
        raise ConfigError(f"unknown system {system!r}; known: {sorted(SYSTEMS)}") from None


def scenarios(system):
    mod = system_module(system)
    return ["train"] + [f"test-{fid}" for fid in mod.FAULTS]


def _split_scenario(system, scenario):
    # accept both "train" and "numex-train"
    if scenario.startswith(system + "-"):
        scenario = scenario[len(system) + 1 :]
    if scenario == "train":
        return "train", None
    if scenario.startswith("test-"):
        fid = scenario[5:]
        if fid not in system_module(system).FAULTS:
            raise ConfigError(f"unknown {system} fault {fid!r}")
        return "test", fid
    raise ConfigError(f"unknown scenario {scenario!r}; expected 'train' or 'test-<fault id>'")


def gen_dataset(system, scenario, seed, train_size=None, test_size=None):
    """Simulate one scenario. Every scenario has its own random substream."""
    mod = system_module(system)
    kind, fid = _split_scenario(system, scenario)
    name = "train" if kind == "train" else f"test-{fid}"
    rng = substream(seed, f"sim/{system}/{name}")
    if kind == "train":
        n = int(train_size or SYSTEMS[system]["train_size"])
        Z, F = mod.simulate(n, rng)
        labels = np.zeros(n, dtype=bool)
        profile = None
    else:
        n = int(test_size or SYSTEMS[system]["test_size"])
        if n <= ONSET:
            raise ConfigError(f"test size must exceed the {ONSET}-sample normal prefix, got {n}")
        profile = mod.fault_profile(fid)
        Z, F = mod.simulate(n, rng, fault=profile)
        labels = np.arange(n) >= profile.onset
    meta = {
        "system": system,
        "scenario": name,
        "seed": int(seed),
        "n_samples": int(n),
        "fault_id": fid or "normal",
        "onset": int(profile.onset) if profile else None,
        "location": profile.location if profile else None,
        "additive": bool(profile.additive) if profile else False,
        "channels": list(mod.CHANNELS),
    }
    return Dataset(Z, labels, F, fid or "normal", meta)


def dataset_csv(ds):
    m = ds.Z.shape[1]
    header = ["k"] + [f"z_{j + 1}" for j in range(m)] + ["label"] + [f"f_{j + 1}" for j in range(m)] + ["fault_id"]
    rows = (
        [k] + [format_float(v) for v in ds.Z[k]] + [int(ds.labels[k])] + [format_float(v) for v in ds.F[k]] + [ds.fault_id]
        for k in range(len(ds))
    )
    return csv_text(header, rows)


def write_dataset(path, ds, extra_meta=None):
    """Write ``path`` (CSV) and ``path + '.meta.json'``; both atomically."""
    meta = dict(ds.meta)
    meta.update(extra_meta or {})
    directory = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(directory):
        raise ConfigError(f"output directory does not exist: {directory}")
    atomic_write_text(path, dataset_csv(ds))
    atomic_write_text(path + ".meta.json", json.dumps(meta, sort_keys=True, indent=1) + "\n")


def read_dataset(path):
    try:
        with open(path, newline="") as fh:
            header = fh.readline().strip().split(",")
            body = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from None
    m = (len(header) - 3) // 2
    expected = ["k"] + [f"z_{j + 1}" for j in range(m)] + ["label"] + [f"f_{j + 1}" for j in range(m)] + ["fault_id"]
    if header != expected:
        raise DataError(f"{path}: unexpected header {header[:4]}...")
    lines = [ln for ln in body.splitlines() if ln]
    if not lines:
        raise DataError(f"{path}: dataset has no rows")
    try:
        cells = [ln.split(",") for ln in lines]
        if any(len(c) != len(header) for c in cells):
            raise ValueError("ragged row")
        num = np.array([c[:-1] for c in cells], dtype=np.float64)
    except ValueError as exc:
        raise DataError(f"{path}: cannot parse dataset rows ({exc})") from None
    if not np.all(np.isfinite(num)):
        raise DataError(f"{path}: dataset contains non-finite values")
    Z = num[:, 1 : 1 + m]
    labels = num[:, 1 + m].astype(bool)
    F = num[:, 2 + m : 2 + 2 * m]
    fault_id = cells[0][-1]
    meta = {}
    if os.path.exists(path + ".meta.json"):
        with open(path + ".meta.json") as fh:
            meta = json.load(fh)
    return Dataset(Z, labels, F, fault_id, meta)
