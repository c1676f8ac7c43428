"""File formats: HHEB embedding dumps, model checkpoints, key=value configs.

HHEB layout (little-endian): magic ``b"HHEB"``, uint32 version, uint32 n,
uint32 sample count, then per sample n float64 coordinates and a uint32
label.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError
from .geometry import BallConfig
from .mlr import EuclideanMLR, HyperbolicMLR

MAGIC = b"HHEB"
VERSION = 1
_HEADER = struct.Struct("<4sIII")


def _record_dtype(n: int) -> np.dtype:
    return np.dtype([("x", "<f8", (n,)), ("y", "<u4")])


def write_hheb(path, X, labels) -> None:
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    if X.ndim != 2 or labels.shape != (X.shape[0],):
        raise DataError("expected X (N, n) and labels (N,)")
    if labels.size and (labels.min() < 0 or labels.max() > 0xFFFFFFFF):
        raise DataError("labels must fit in uint32")
    rec = np.empty(X.shape[0], dtype=_record_dtype(X.shape[1]))
    rec["x"] = X
    rec["y"] = labels
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, X.shape[1], X.shape[0]))
        fh.write(rec.tobytes())


def read_hheb(path):
    """Return ``(X, labels)`` with labels as int64."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated header")
    magic, version, n, count = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise DataError(f"{path}: unsupported version {version}")
    dt = _record_dtype(n)
    body = raw[_HEADER.size:]
    if len(body) != count * dt.itemsize:
        raise DataError(f"{path}: expected {count} records of {dt.itemsize} bytes, "
                        f"found {len(body)} bytes")
    rec = np.frombuffer(body, dtype=dt, count=count)
    return np.array(rec["x"], dtype=np.float64).reshape(count, n), rec["y"].astype(np.int64)


# -- checkpoints ---------------------------------------------------------------


def _fmt(values) -> str:
    return " ".join(format(float(v), ".17g") for v in np.ravel(values))


def dumps_checkpoint(model) -> str:
    K, n = model.n_classes, model.dim
    if isinstance(model, HyperbolicMLR):
        head = (f"# geometry=hyperbolic K={K} n={n} c={model.ball.c!r} "
                f"boundary_epsilon={model.ball.boundary_epsilon!r}")
        body = [f"offsets = {_fmt(model.offsets)}", f"normals = {_fmt(model.normals)}"]
    elif isinstance(model, EuclideanMLR):
        head = f"# geometry=euclidean K={K} n={n}"
        body = [f"weights = {_fmt(model.weights)}", f"biases = {_fmt(model.biases)}"]
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    return "\n".join([head, *body]) + "\n"


def loads_checkpoint(text: str):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise DataError("checkpoint header missing")
    try:
        header = dict(tok.split("=", 1) for tok in lines[0][1:].split())
        params = {}
        for ln in lines[1:]:
            name, sep, vals = ln.partition("=")
            if not sep:
                raise ValueError(ln)
            params[name.strip()] = np.array([float(v) for v in vals.split()], dtype=np.float64)
        K, n = int(header["K"]), int(header["n"])
        if header["geometry"] == "hyperbolic":
            ball = BallConfig(float(header["c"]), float(header["boundary_epsilon"]))
            return HyperbolicMLR(params["offsets"].reshape(K, n),
                                 params["normals"].reshape(K, n), ball)
        if header["geometry"] == "euclidean":
            return EuclideanMLR(params["weights"].reshape(K, n), params["biases"].reshape(K))
    except (KeyError, ValueError) as exc:
        raise DataError(f"malformed checkpoint: {exc}") from None
    raise DataError(f"unknown geometry {header['geometry']!r}")


def save_checkpoint(model, path) -> None:
    Path(path).write_text(dumps_checkpoint(model))


def load_checkpoint(path):
    return loads_checkpoint(Path(path).read_text())


# -- config files ----------------------------------------------------------


def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment line."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ValueError(f"{path}:{lineno}: expected key = value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out
