"""Binary checkpoint format.

Layout (all integers little-endian):

    magic   4 bytes  b"DPLY"
    version u32      currently 1
    records          back to back until 4 bytes remain:
        name_len u32, name utf-8,
        dtype    u8   (0 = float32),
        shape    4 x u32, leading axes padded with 1,
        payload  float32 little-endian, prod(shape) values
    crc     u32      zlib.crc32 over all record bytes

Records cover every learnable parameter and every normalization buffer,
keyed by dotted module path, so a round-trip restores training state
bit-exactly.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .errors import CheckpointError

MAGIC = b"DPLY"
VERSION = 1
_DTYPE_F32 = 0


def _state_entries(net):
    for name, p in net.named_parameters():
        yield name, p.data
    for name, buf in net.named_buffers():
        yield name, buf


def _pack_record(name, arr):
    data = np.ascontiguousarray(arr, dtype="<f4")
    if data.ndim > 4:
        raise CheckpointError(f"{name}: rank {data.ndim} exceeds format limit 4")
    shape = (1,) * (4 - data.ndim) + data.shape
    raw = name.encode("utf-8")
    head = struct.pack("<I", len(raw)) + raw + struct.pack("<B4I", _DTYPE_F32, *shape)
    return head + data.tobytes()


def save_checkpoint(path, net):
    body = b"".join(_pack_record(name, arr) for name, arr in _state_entries(net))
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(body)
        fh.write(struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF))


def read_checkpoint(path):
    """Parse a checkpoint into {name: float32 array (4-D padded shape)}."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    body = blob[8:-4]
    (crc_stored,) = struct.unpack_from("<I", blob, len(blob) - 4)
    if zlib.crc32(body) & 0xFFFFFFFF != crc_stored:
        raise CheckpointError(f"{path}: CRC mismatch, file corrupted")

    entries = {}
    pos = 0
    while pos < len(body):
        if pos + 4 > len(body):
            raise CheckpointError(f"{path}: truncated record header")
        (name_len,) = struct.unpack_from("<I", body, pos)
        pos += 4
        if pos + name_len + 17 > len(body):
            raise CheckpointError(f"{path}: truncated record")
        name = body[pos:pos + name_len].decode("utf-8")
        pos += name_len
        dtype_tag, *shape = struct.unpack_from("<B4I", body, pos)
        pos += 17
        if dtype_tag != _DTYPE_F32:
            raise CheckpointError(f"{path}: unknown dtype tag {dtype_tag} for {name}")
        count = int(np.prod(shape))
        nbytes = 4 * count
        if pos + nbytes > len(body):
            raise CheckpointError(f"{path}: truncated payload for {name}")
        arr = np.frombuffer(body, dtype="<f4", count=count, offset=pos)
        pos += nbytes
        if name in entries:
            raise CheckpointError(f"{path}: duplicate record {name}")
        entries[name] = arr.reshape(shape)
    return entries


def load_checkpoint(path, net):
    """Restore parameters and buffers in place; names and shapes must match."""
    entries = read_checkpoint(path)
    targets = dict(_state_entries(net))
    missing = sorted(set(targets) - set(entries))
    extra = sorted(set(entries) - set(targets))
    if missing or extra:
        raise CheckpointError(
            f"{path}: state mismatch (missing {missing[:3]}, unexpected {extra[:3]})")
    for name, p in net.named_parameters():
        stored = entries[name]
        if stored.size != p.data.size:
            raise CheckpointError(
                f"{path}: {name} has {stored.size} values, model expects {p.data.size}")
        p.data = stored.reshape(p.data.shape).astype(np.float32).copy()
        p.grad = None
    for name, buf in net.named_buffers():
        stored = entries[name]
        if stored.size != buf.size:
            raise CheckpointError(
                f"{path}: {name} has {stored.size} values, model expects {buf.size}")
        buf[...] = stored.reshape(buf.shape)
    return net
