"""Binary snapshot formats: named-tensor files and flow fields.

Tensor snapshot (little-endian): magic "RCTN", version u32, count u32, then
per tensor {name-length u32, UTF-8 name, rank u32, extents u64[], dtype tag
u8 (0 = f32), raw data}. Flow file: magic "RCFL", H u32, W u32, then H*W
(dx, dy) f32 pairs.
"""

import struct

import numpy as np

from .errors import ContractError, DataError

TENSOR_MAGIC = b"RCTN"
TENSOR_VERSION = 1
FLOW_MAGIC = b"RCFL"


def save_tensors(path, tensors):
    """Write an ordered {name: float32 ndarray} mapping."""
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(struct.pack("<II", TENSOR_VERSION, len(tensors)))
        for name, arr in tensors.items():
            arr = np.asarray(arr)
            if arr.dtype != np.float32:
                raise ContractError(f"tensor snapshots are float32; '{name}' is {arr.dtype}")
            enc = name.encode("utf-8")
            fh.write(struct.pack("<I", len(enc)))
            fh.write(enc)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(np.asarray(arr.shape, dtype="<u8").tobytes())
            fh.write(struct.pack("<B", 0))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise DataError(f"truncated tensor snapshot while reading {what}")
    return buf


def load_tensors(path):
    out = {}
    with open(path, "rb") as fh:
        if _read(fh, 4, "magic") != TENSOR_MAGIC:
            raise DataError(f"not a tensor snapshot: {path}")
        version, count = struct.unpack("<II", _read(fh, 8, "header"))
        if version != TENSOR_VERSION:
            raise DataError(f"unsupported tensor snapshot version {version}")
        for _ in range(count):
            (nlen,) = struct.unpack("<I", _read(fh, 4, "name length"))
            name = _read(fh, nlen, "name").decode("utf-8")
            (rank,) = struct.unpack("<I", _read(fh, 4, "rank"))
            extents = np.frombuffer(_read(fh, 8 * rank, "extents"), dtype="<u8")
            (tag,) = struct.unpack("<B", _read(fh, 1, "dtype tag"))
            if tag != 0:
                raise DataError(f"unsupported dtype tag {tag} for tensor '{name}'")
            size = int(np.prod(extents)) if rank else 1
            raw = _read(fh, 4 * size, f"data of '{name}'")
            arr = np.frombuffer(raw, dtype="<f4").reshape(extents.astype(np.int64))
            out[name] = np.ascontiguousarray(arr).astype(np.float32)
    return out


def save_flow(path, flow):
    flow = np.asarray(flow, dtype=np.float32)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise DataError(f"flow field must be H x W x 2, got {flow.shape}")
    h, w = flow.shape[:2]
    with open(path, "wb") as fh:
        fh.write(FLOW_MAGIC)
        fh.write(struct.pack("<II", h, w))
        fh.write(np.ascontiguousarray(flow, dtype="<f4").tobytes())


def load_flow(path):
    with open(path, "rb") as fh:
        if _read(fh, 4, "magic") != FLOW_MAGIC:
            raise DataError(f"not a flow file: {path}")
        h, w = struct.unpack("<II", _read(fh, 8, "dimensions"))
        raw = _read(fh, h * w * 8, "flow samples")
    flow = np.frombuffer(raw, dtype="<f4").reshape(h, w, 2)
    return np.ascontiguousarray(flow).astype(np.float32)
