"""Binary container for named float32 arrays (checkpoints, embedding indexes).

Layout, all little-endian:

    magic (4 bytes) | u32 version | u32 entry-count |
    per entry: u32 name-len | name utf-8 | u32 ndim | u32 dim... | f32 data |
    u32 CRC32 over everything between magic and CRC

Model checkpoints use magic ``CKPT`` and carry the optimizer moments
alongside the parameters so training can resume. Embedding indexes reuse
the container with magic ``EIDX``. Writes are atomic
(write-temp-then-rename) so concurrent readers never see partial files.
"""

from __future__ import annotations

import os
import struct
import zlib

import numpy as np

from .errors import ChecksumMismatch, FormatVersionMismatch, IoFailure

CKPT_MAGIC = b"CKPT"
EIDX_MAGIC = b"EIDX"
VERSION = 1


def _pack_entries(arrays: dict[str, np.ndarray]) -> bytes:
    chunks = [struct.pack("<II", VERSION, len(arrays))]
    for name, arr in arrays.items():
        data = np.ascontiguousarray(arr, dtype=np.float32)
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", data.ndim))
        chunks.append(struct.pack(f"<{data.ndim}I", *data.shape))
        chunks.append(data.astype("<f4").tobytes())
    return b"".join(chunks)


def atomic_write(path, payload: bytes):
    path = os.fspath(path)
    tmp = f"{path}.tmp.{os.getpid()}"
    try:
        with open(tmp, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except OSError as exc:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def save_arrays(path, arrays: dict[str, np.ndarray], magic: bytes = CKPT_MAGIC):
    payload = _pack_entries(arrays)
    blob = magic + payload + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)
    atomic_write(path, blob)


def load_arrays(path, magic: bytes = CKPT_MAGIC) -> dict[str, np.ndarray]:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if len(blob) < 12 or blob[:4] != magic:
        raise FormatVersionMismatch(f"{path}: bad magic, expected {magic!r}")
    payload, crc_raw = blob[4:-4], blob[-4:]
    if zlib.crc32(payload) & 0xFFFFFFFF != struct.unpack("<I", crc_raw)[0]:
        raise ChecksumMismatch(f"{path}: CRC32 mismatch (truncated or corrupt)")
    version, count = struct.unpack_from("<II", payload, 0)
    if version != VERSION:
        raise FormatVersionMismatch(f"{path}: version {version}, expected {VERSION}")
    off = 8
    out: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<I", payload, off)
            off += 4
            name = payload[off:off + name_len].decode("utf-8")
            off += name_len
            (ndim,) = struct.unpack_from("<I", payload, off)
            off += 4
            shape = struct.unpack_from(f"<{ndim}I", payload, off)
            off += 4 * ndim
            n = int(np.prod(shape, dtype=np.int64)) if ndim else 1
            arr = np.frombuffer(payload, dtype="<f4", count=n, offset=off).reshape(shape)
            off += 4 * n
            out[name] = arr.astype(np.float32)
    except (struct.error, ValueError) as exc:
        raise FormatVersionMismatch(f"{path}: malformed entry table: {exc}") from exc
    return out
