"""Binary container for trained reduced models.

Layout (all integers little-endian)::

    b"R2BF"            magic
    u32                format version
    u32                number of records
    record*            name (u32 length + utf-8), kind (u8), ndim (u32),
                       dims (u64 each), payload

Record kinds: 1 = float64 array, 2 = int64 array, 3 = utf-8 JSON text.
Arrays are stored C-ordered as ``<f8`` / ``<i8`` so a save/load round trip
is bit-exact.
"""
from __future__ import annotations

import io
import json
import struct

import numpy as np

from .kernels import Kernel
from .nodes import NodeSet
from .problems import get_problem
from .reduced import ReducedModel, ReducedOperators

MAGIC = b"R2BF"
VERSION = 1
_F64, _I64, _JSON = 1, 2, 3


class ModelFormatError(ValueError):
    pass


def _write_record(fh, name: str, value) -> None:
    key = name.encode("utf-8")
    fh.write(struct.pack("<I", len(key)))
    fh.write(key)
    if isinstance(value, (dict, list, str)):
        data = json.dumps(value).encode("utf-8")
        fh.write(struct.pack("<BI", _JSON, 1))
        fh.write(struct.pack("<Q", len(data)))
        fh.write(data)
        return
    arr = np.asarray(value)
    if arr.dtype.kind in "iub":
        kind, arr = _I64, np.asarray(arr, dtype="<i8", order="C")
    else:
        kind, arr = _F64, np.asarray(arr, dtype="<f8", order="C")
    fh.write(struct.pack("<BI", kind, arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    fh.write(arr.tobytes(order="C"))


def _read_exact(fh, n: int) -> bytes:
    b = fh.read(n)
    if len(b) != n:
        raise ModelFormatError("truncated model file")
    return b


def _read_record(fh):
    (klen,) = struct.unpack("<I", _read_exact(fh, 4))
    name = _read_exact(fh, klen).decode("utf-8")
    kind, ndim = struct.unpack("<BI", _read_exact(fh, 5))
    dims = struct.unpack(f"<{ndim}Q", _read_exact(fh, 8 * ndim)) if ndim else ()
    if kind == _JSON:
        return name, json.loads(_read_exact(fh, dims[0]).decode("utf-8"))
    dtype = {_F64: "<f8", _I64: "<i8"}.get(kind)
    if dtype is None:
        raise ModelFormatError(f"unknown record kind {kind}")
    count = int(np.prod(dims)) if ndim else 1
    arr = np.frombuffer(_read_exact(fh, 8 * count), dtype=dtype).reshape(dims)
    return name, arr.astype(dtype[1:], copy=True)


def dumps(records: dict) -> bytes:
    fh = io.BytesIO()
    fh.write(MAGIC)
    fh.write(struct.pack("<II", VERSION, len(records)))
    for k, v in records.items():
        _write_record(fh, k, v)
    return fh.getvalue()


def loads(data: bytes) -> dict:
    fh = io.BytesIO(data)
    if fh.read(4) != MAGIC:
        raise ModelFormatError("not a reduced model file (bad magic)")
    version, count = struct.unpack("<II", _read_exact(fh, 8))
    if version != VERSION:
        raise ModelFormatError(f"unsupported model format version {version}")
    out = dict(_read_record(fh) for _ in range(count))
    if fh.read(1):
        raise ModelFormatError("trailing bytes after the last record")
    return out


def model_records(model: ReducedModel) -> dict:
    meta = {
        "problem": model.problem.name,
        "history": model.history,
        "config": model.config,
    }
    rec = {
        "meta": meta,
        "alpha": np.array([model.alpha]),
        "selected_mus": model.selected_mus,
        "snapshots": model.snapshots,
        "basis": model.basis,
        "M": model.ops.M,
        "G": model.ops.G,
        "F": model.ops.F,
        "residual_factor": model.ops.residual_factor,
        "forcing_vectors": model.forcing_vectors,
        "training": model.training,
        "beta": model.beta,
        "max_delta": model.max_delta,
    }
    if model.nodes is not None:
        rec["nodes"] = model.nodes.points
        rec["n_interior"] = np.array([model.nodes.n_interior], dtype=np.int64)
    return rec


def save_model(model: ReducedModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(model_records(model)))


def load_model(path) -> ReducedModel:
    with open(path, "rb") as fh:
        rec = loads(fh.read())
    meta = rec["meta"]
    nodes = None
    if "nodes" in rec:
        nodes = NodeSet(rec["nodes"], int(rec["n_interior"][0]))
    ops = ReducedOperators(rec["M"], rec["G"], rec["F"], rec["residual_factor"])
    return ReducedModel(
        problem=get_problem(meta["problem"]),
        selected_mus=rec["selected_mus"],
        snapshots=rec["snapshots"],
        basis=rec["basis"],
        ops=ops,
        forcing_vectors=rec["forcing_vectors"],
        training=rec["training"],
        beta=rec["beta"],
        alpha=float(rec["alpha"][0]),
        history=meta["history"],
        max_delta=rec["max_delta"],
        config=meta["config"],
        nodes=nodes,
    )


def model_kernel(model: ReducedModel) -> Kernel:
    cfg = model.config
    return Kernel(cfg["kernel"], cfg["eps"])
