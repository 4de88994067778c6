# dpmn/diffcore/checkpoint.py
'''Little-endian binary parameter checkpoints

Layout: magic "DPMN", u32 format version, u32 tensor count, then per tensor
u16 name length, UTF-8 name, u8 rank, u32 dims, fp32 values (row-major).
'''

import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from dpmn.errors import DPMNError

MAGIC = b"DPMN"
FORMAT_VERSION = 1


def encode_checkpoint(tensors: Mapping[str, np.ndarray]) -> bytes:
    chunks = [struct.pack("<4sII", MAGIC, FORMAT_VERSION, len(tensors))]
    for name, array in tensors.items():
        encoded = name.encode("utf-8")
        array = np.asarray(array)
        if len(encoded) > 0xFFFF or array.ndim > 0xFF:
            raise CheckpointFormatError(f"tensor {name!r} cannot be encoded")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack(f"<B{array.ndim}I", array.ndim, *array.shape))
        chunks.append(np.ascontiguousarray(array, dtype="<f4").tobytes())
    return b"".join(chunks)


def decode_checkpoint(data: bytes) -> dict[str, np.ndarray]:
    try:
        magic, version, count = struct.unpack_from("<4sII", data, 0)
    except struct.error as e:
        raise CheckpointFormatError("truncated checkpoint header") from e
    if magic != MAGIC:
        raise CheckpointFormatError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    offset = 12
    tensors: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", data, offset)
            offset += 2
            name = data[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<B", data, offset)
            offset += 1
            dims = struct.unpack_from(f"<{rank}I", data, offset)
            offset += 4 * rank
            n_values = int(np.prod(dims)) if rank else 1
            if offset + 4 * n_values > len(data):
                raise CheckpointFormatError(f"tensor {name!r} truncated")
            values = np.frombuffer(data, dtype="<f4", count=n_values, offset=offset)
            offset += 4 * n_values
            tensors[name] = values.reshape(dims).astype(np.float32)
    except (struct.error, UnicodeDecodeError) as e:
        raise CheckpointFormatError("corrupt checkpoint body") from e
    if offset != len(data):
        raise CheckpointFormatError(f"{len(data) - offset} trailing bytes after last tensor")
    return tensors


def write_checkpoint(path: str | Path, tensors: Mapping[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(tensors))
    return path


def read_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise MissingCheckpointError(f"checkpoint not found: {path}")
    return decode_checkpoint(path.read_bytes())


class CheckpointFormatError(DPMNError):
    pass


class MissingCheckpointError(DPMNError, FileNotFoundError):
    pass
