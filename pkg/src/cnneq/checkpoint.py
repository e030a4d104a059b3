"""Versioned model checkpoints: JSON header followed by a little-endian float64 blob.

Layout::

    b"CNNEQCK1" | u32 header length | header (UTF-8 JSON, sorted keys) | tensors

The header lists every tensor as ``[name, shape]`` in blob order.
"""

import io
import json
import struct

import numpy as np

from . import __version__
from .equalizers import CnnModel, FirModel, VolterraModel
from .errors import UsageError
from .quantization import QuantizedCnn
from .signals import RNG_ALGORITHM
from .training import MATH_MODE

MAGIC = b"CNNEQCK1"
FORMAT_VERSION = 1

_FAMILIES = {cls.family: cls for cls in (FirModel, VolterraModel, CnnModel, QuantizedCnn)}


def _header(model, lineage):
    config, tensors = model.state()
    header = {
        "format_version": FORMAT_VERSION,
        "tool_version": __version__,
        "family": model.family,
        "config": config,
        "tensors": [[k, list(np.shape(v))] for k, v in tensors.items()],
        "rng": RNG_ALGORITHM,
        "math_mode": MATH_MODE,
        "lineage": dict(lineage or {}),
    }
    if isinstance(model, QuantizedCnn):
        header["formats"] = model.formats()
    return header, tensors


def to_bytes(model, lineage=None):
    header, tensors = _header(model, lineage)
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    for _, v in tensors.items():
        buf.write(np.ascontiguousarray(v, dtype="<f8").tobytes())
    return buf.getvalue()


def save_checkpoint(path, model, lineage=None):
    """Write ``model``; ``lineage`` records seeds and provenance (JSON-serializable)."""
    data = to_bytes(model, lineage)
    with open(path, "wb") as fh:
        fh.write(data)


def read_header(fh):
    if fh.read(8) != MAGIC:
        raise UsageError("not a checkpoint file (bad magic)")
    (hlen,) = struct.unpack("<I", fh.read(4))
    header = json.loads(fh.read(hlen))
    if header.get("format_version") != FORMAT_VERSION:
        raise UsageError(f"unsupported checkpoint version {header.get('format_version')}")
    return header


def load_checkpoint(path):
    """Return ``(model, header)``."""
    with open(path, "rb") as fh:
        header = read_header(fh)
        tensors = {}
        for name, shape in header["tensors"]:
            n = int(np.prod(shape)) if shape else 1
            raw = fh.read(8 * n)
            if len(raw) != 8 * n:
                raise UsageError(f"truncated checkpoint while reading {name}")
            tensors[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
    cls = _FAMILIES.get(header["family"])
    if cls is None:
        raise UsageError(f"unknown model family {header['family']!r}")
    if cls is QuantizedCnn:
        model = cls.from_state(header["config"], tensors, header["formats"])
    else:
        model = cls.from_state(header["config"], tensors)
    return model, header


def dump_checkpoint(path):
    """Line-oriented text rendering for diffing two checkpoints."""
    model, header = load_checkpoint(path)
    _, tensors = model.state()
    lines = ["header " + json.dumps({k: v for k, v in header.items() if k != "tensors"}, sort_keys=True)]
    for name, arr in tensors.items():
        flat = np.asarray(arr, dtype=np.float64).reshape(-1)
        lines.append(f"tensor {name} shape={list(np.shape(arr))}")
        lines.extend(f"  {i} {float(v)!r}" for i, v in enumerate(flat))
    return "\n".join(lines) + "\n"
