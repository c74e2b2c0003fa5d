"""Binary model container.

Layout (all integers little-endian)::

    magic    4 bytes   b"TDNM"
    version  uint32    FORMAT_VERSION
    hlen     uint32    byte length of the JSON header
    header   hlen      UTF-8 JSON, sorted keys, no whitespace
    payload  ...       float64 little-endian arrays, concatenated

The header lists, per network, its layers as ``{in, out, activation,
frozen}``; the payload stores each layer's weight (row-major, out x in)
followed by its bias, networks in header order. An optional scaler stores
``mean`` then ``std``. No timestamps are written, so identical models give
identical bytes.
"""

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ModelFormatError, ShapeError, TruncatedError, VersionError
from .fileio import atomic_write_bytes
from .nn import Dense, LayerSpec, Network

MAGIC = b"TDNM"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<4sII")


@dataclass
class ModelBundle:
    """Named networks plus a role tag, free-form metadata and an optional scaler."""

    role: str
    networks: dict
    meta: dict = field(default_factory=dict)
    scaler: tuple = None  # (mean, std)


def dumps(bundle):
    header = {
        "role": bundle.role,
        "meta": bundle.meta,
        "networks": [],
        "scaler": None,
    }
    chunks = []
    for name, net in bundle.networks.items():
        layers = []
        for layer in net.layers:
            s = layer.spec
            layers.append(
                {"in": s.in_dim, "out": s.out_dim, "activation": s.activation.value, "frozen": bool(layer.frozen)}
            )
            chunks.append(layer.weight)
            chunks.append(layer.bias)
        header["networks"].append({"name": name, "layers": layers})
    if bundle.scaler is not None:
        mean, std = (np.asarray(a, dtype=np.float64) for a in bundle.scaler)
        header["scaler"] = {"dim": int(mean.size)}
        chunks.extend([mean, std])
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(c, dtype="<f8").tobytes() for c in chunks)
    return _PREFIX.pack(MAGIC, FORMAT_VERSION, len(hbytes)) + hbytes + payload


def loads(data):
    data = bytes(data)
    if len(data) < _PREFIX.size:
        raise TruncatedError("model stream shorter than its fixed prefix")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise ModelFormatError(f"bad magic {magic!r}; not a model file")
    if version != FORMAT_VERSION:
        raise VersionError(f"model format version {version}, this build reads {FORMAT_VERSION}")
    start = _PREFIX.size
    if len(data) < start + hlen:
        raise TruncatedError("model header truncated")
    try:
        header = json.loads(data[start : start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"unreadable model header: {exc}") from None
    body = memoryview(data)[start + hlen :]
    pos = 0

    def take(shape):
        nonlocal pos
        n = int(np.prod(shape)) * 8
        if pos + n > len(body):
            raise TruncatedError("model payload truncated")
        arr = np.frombuffer(body[pos : pos + n], dtype="<f8").astype(np.float64).reshape(shape)
        pos += n
        return arr

    try:
        networks = {}
        for entry in header["networks"]:
            layers = []
            for ls in entry["layers"]:
                spec = LayerSpec(int(ls["in"]), int(ls["out"]), ls["activation"])
                w = take((spec.out_dim, spec.in_dim))
                b = take((spec.out_dim,))
                layers.append(Dense(w, b, spec.activation, bool(ls["frozen"])))
            networks[entry["name"]] = Network(layers)
        scaler = None
        if header.get("scaler"):
            d = int(header["scaler"]["dim"])
            scaler = (take((d,)), take((d,)))
        role, meta = header["role"], header.get("meta", {})
    except ModelFormatError:
        raise
    except ShapeError as exc:
        raise ModelFormatError(f"inconsistent layer dimensions: {exc}") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"inconsistent model header: {exc}") from None
    if pos != len(body):
        raise ModelFormatError(f"{len(body) - pos} trailing bytes after model payload")
    return ModelBundle(role, networks, meta, scaler)


def checksum(bundle_or_bytes):
    data = bundle_or_bytes if isinstance(bundle_or_bytes, (bytes, bytearray)) else dumps(bundle_or_bytes)
    return hashlib.sha256(data).hexdigest()


def save(path, bundle):
    atomic_write_bytes(path, dumps(bundle))


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
