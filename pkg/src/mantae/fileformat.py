"""Binary tensor files (NTT1), checkpoints (NTCK) and label sidecars.

NTT1 layout, all integers little-endian::

    0   4B   magic b"NTT1"
    4   u16  format version (1)
    6   u8   dtype code: 0 = float64, 1 = float32
    7   u8   order N
    8   N*u64 extents
    ..  payload, row-major scalars, little-endian
    ..  u32  CRC32 of the payload bytes

NTCK layout::

    0   4B   magic b"NTCK"
    4   u16  format version (1)
    6   u32  metadata length M
    10  M    metadata, UTF-8 JSON
    ..  u32  entry count E
    ..  E entries: u16 name length, name (UTF-8), u8 order, order*u64 extents,
        u64 absolute offset of the entry's NTT1 blob, u64 blob length
    ..  NTT1 blobs
    ..  u32  CRC32 of every preceding byte
"""

import json
import math
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import FormatError, TruncationError

NTT_MAGIC = b"NTT1"
NTCK_MAGIC = b"NTCK"
NTT_VERSION = 1
NTCK_VERSION = 1
DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}
DTYPE_CODES = {"float64": 0, "float32": 1}


def tensor_to_bytes(x, dtype="float64"):
    code = DTYPE_CODES[dtype]
    x = np.asarray(x)
    if x.ndim < 1 or x.ndim > 255:
        raise ValueError(f"cannot store tensor of order {x.ndim}")
    payload = np.ascontiguousarray(x, dtype=DTYPES[code]).tobytes()
    header = NTT_MAGIC + struct.pack("<HBB", NTT_VERSION, code, x.ndim)
    header += struct.pack(f"<{x.ndim}Q", *x.shape)
    return header + payload + struct.pack("<I", zlib.crc32(payload))


def tensor_from_bytes(buf, offset=0):
    """Parse one NTT1 blob starting at ``offset``; returns (array, end offset)."""
    buf = memoryview(buf)
    if len(buf) - offset < 8:
        raise TruncationError("file too short for an NTT1 header", offset)
    if bytes(buf[offset:offset + 4]) != NTT_MAGIC:
        raise FormatError(f"bad magic {bytes(buf[offset:offset + 4])!r}, expected {NTT_MAGIC!r}", offset)
    version, code, order = struct.unpack_from("<HBB", buf, offset + 4)
    if version != NTT_VERSION:
        raise FormatError(f"unsupported NTT1 version {version}", offset + 4)
    if code not in DTYPES:
        raise FormatError(f"unknown dtype code {code}", offset + 6)
    if order < 1:
        raise FormatError("tensor order must be >= 1", offset + 7)
    pos = offset + 8
    if len(buf) - pos < 8 * order:
        raise TruncationError("truncated extent table", pos)
    shape = struct.unpack_from(f"<{order}Q", buf, pos)
    if any(s < 1 for s in shape):
        raise FormatError(f"zero extent in shape {shape}", pos)
    pos += 8 * order
    nbytes = math.prod(shape) * DTYPES[code].itemsize
    available = len(buf) - pos - 4
    if available < nbytes:
        raise TruncationError(
            f"declared {math.prod(shape)} elements ({nbytes} bytes) but only {max(available, 0)} payload bytes present", pos)
    payload = bytes(buf[pos:pos + nbytes])
    (crc,) = struct.unpack_from("<I", buf, pos + nbytes)
    if crc != zlib.crc32(payload):
        raise FormatError("payload CRC32 mismatch", pos + nbytes)
    arr = np.frombuffer(payload, dtype=DTYPES[code]).reshape(shape).astype(np.float64)
    return arr, pos + nbytes + 4


def save_tensor(path, x, dtype="float64"):
    Path(path).write_bytes(tensor_to_bytes(x, dtype))


def load_tensor(path):
    buf = Path(path).read_bytes()
    arr, end = tensor_from_bytes(buf)
    if end != len(buf):
        raise FormatError(f"{len(buf) - end} trailing bytes after tensor", end)
    return arr


def save_labels(path, labels):
    Path(path).write_text("".join(f"{int(v)}\n" for v in labels))


def load_labels(path):
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            out.append(int(line))
        except ValueError:
            raise FormatError(f"label file {path}: line {lineno} is not an integer: {line!r}") from None
    return np.asarray(out, dtype=np.int64)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint_arrays(path, arrays, meta):
    """Write named float64 arrays plus a JSON metadata dict as an NTCK file."""
    meta_bytes = json.dumps(meta, sort_keys=True).encode()
    names = list(arrays)
    blobs = [tensor_to_bytes(np.atleast_1d(arrays[n])) for n in names]

    head = NTCK_MAGIC + struct.pack("<HI", NTCK_VERSION, len(meta_bytes)) + meta_bytes
    head += struct.pack("<I", len(names))
    manifest_size = 0
    for n in names:
        shape = np.atleast_1d(arrays[n]).shape
        manifest_size += 2 + len(n.encode()) + 1 + 8 * len(shape) + 16
    offset = len(head) + manifest_size
    manifest = b""
    for n, blob in zip(names, blobs):
        shape = np.atleast_1d(arrays[n]).shape
        nb = n.encode()
        manifest += struct.pack("<H", len(nb)) + nb + struct.pack("<B", len(shape))
        manifest += struct.pack(f"<{len(shape)}Q", *shape) + struct.pack("<QQ", offset, len(blob))
        offset += len(blob)
    body = head + manifest + b"".join(blobs)
    Path(path).write_bytes(body + struct.pack("<I", zlib.crc32(body)))


def load_checkpoint_arrays(path):
    buf = Path(path).read_bytes()
    if len(buf) < 14:
        raise TruncationError("file too short for an NTCK header", 0)
    if buf[:4] != NTCK_MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {NTCK_MAGIC!r}", 0)
    version, meta_len = struct.unpack_from("<HI", buf, 4)
    if version != NTCK_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", 4)
    (crc,) = struct.unpack_from("<I", buf, len(buf) - 4)
    if crc != zlib.crc32(buf[:-4]):
        raise FormatError("checkpoint CRC32 mismatch", len(buf) - 4)
    pos = 10
    meta = json.loads(buf[pos:pos + meta_len].decode())
    pos += meta_len
    (count,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    arrays = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", buf, pos)
        name = buf[pos + 2:pos + 2 + nlen].decode()
        pos += 2 + nlen
        (order,) = struct.unpack_from("<B", buf, pos)
        shape = struct.unpack_from(f"<{order}Q", buf, pos + 1)
        pos += 1 + 8 * order
        off, length = struct.unpack_from("<QQ", buf, pos)
        pos += 16
        arr, end = tensor_from_bytes(buf[:len(buf) - 4], off)
        if arr.shape != tuple(shape) or end != off + length:
            raise FormatError(f"entry {name!r} does not match its manifest record", off)
        arrays[name] = arr
    return arrays, meta
