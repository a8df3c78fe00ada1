"""Binary weight files.

Layout (all integers little-endian)::

    b"TCNN" | version u32 | header length u32 | header (UTF-8 JSON) |
    float32 payload | FNV-1a 64-bit checksum of the payload (u64)

The JSON header echoes the model config and lists every parameter array as
``{"name": ..., "shape": [...]}`` in payload order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numba
import numpy as np

from .model import Model, ModelConfig, build_model

MAGIC = b"TCNN"
VERSION = 1

_FNV_OFFSET = np.uint64(0xCBF29CE484222325)
_FNV_PRIME = np.uint64(0x100000001B3)


class WeightFileError(ValueError):
    pass


class ChecksumError(WeightFileError):
    pass


class ShapeMismatchError(WeightFileError):
    pass


class VersionError(WeightFileError):
    pass


@numba.njit(cache=True)
def _fnv1a_kernel(data, h, prime):
    for b in data:
        h = (h ^ np.uint64(b)) * prime
    return h


def fnv1a64(data: bytes) -> int:
    arr = np.frombuffer(data, dtype=np.uint8)
    return int(_fnv1a_kernel(arr, _FNV_OFFSET, _FNV_PRIME))


def _manifest(model: Model) -> list[dict]:
    return [{"name": name, "shape": list(p.shape)} for name, p in model.named_params()]


def save_weights(model: Model, path) -> Path:
    path = Path(path)
    header = json.dumps(
        {"config": model.config.to_dict(), "layers": _manifest(model)}, sort_keys=True
    ).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(p.value, dtype="<f4").tobytes() for p in model.params())
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(header)))
        f.write(header)
        f.write(payload)
        f.write(struct.pack("<Q", fnv1a64(payload)))
    return path


def _read(path) -> tuple[dict, bytes]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise WeightFileError(f"{path}: not a weight file (bad magic {raw[:4]!r})")
    if len(raw) < 12:
        raise ChecksumError(f"{path}: truncated header")
    version, hlen = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise VersionError(f"{path}: unsupported weight file version {version} (expected {VERSION})")
    try:
        header = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ChecksumError(f"{path}: corrupt header ({e})") from None
    expected = 4 * sum(int(np.prod(e["shape"])) for e in header["layers"])
    body = raw[12 + hlen :]
    if len(body) != expected + 8:
        raise ChecksumError(
            f"{path}: payload is {max(len(body) - 8, 0)} bytes, manifest requires {expected}; checksum cannot validate"
        )
    payload = body[:expected]
    (stored,) = struct.unpack("<Q", body[expected:])
    if fnv1a64(payload) != stored:
        raise ChecksumError(f"{path}: checksum mismatch")
    return header, payload


def read_config(path) -> ModelConfig:
    """The model config echoed in a weight file's header."""
    header, _ = _read(path)
    return ModelConfig.from_dict(header["config"])


def load_weights(path, config: ModelConfig | None = None) -> Model:
    """Load a model; ``config`` defaults to the one stored in the file.

    Raises ShapeMismatchError naming the first layer whose name or shape
    differs from what ``config`` expects.
    """
    header, payload = _read(path)
    if config is None:
        config = ModelConfig.from_dict(header["config"])
    model = build_model(config)
    params = model.named_params()
    stored = header["layers"]
    for i, (name, p) in enumerate(params):
        if i >= len(stored):
            raise ShapeMismatchError(f"{path}: missing layer {name} {p.shape}")
        entry = stored[i]
        if entry["name"] != name or tuple(entry["shape"]) != p.shape:
            raise ShapeMismatchError(
                f"{path}: layer {i} mismatch: file has {entry['name']} {tuple(entry['shape'])}, "
                f"config expects {name} {p.shape}"
            )
    if len(stored) != len(params):
        extra = stored[len(params)]
        raise ShapeMismatchError(f"{path}: unexpected extra layer {extra['name']} {tuple(extra['shape'])}")
    values = np.frombuffer(payload, dtype="<f4")
    offset = 0
    for _, p in params:
        n = p.size
        p.value = values[offset : offset + n].reshape(p.shape).astype(np.float32)
        p.grad = np.zeros_like(p.value)
        offset += n
    return model
