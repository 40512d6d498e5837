"""Reader and writer for the portable ``.amcd`` dataset format.

Layout (little-endian)::

    "AMCD" | u16 version | u32 frame_len | u32 frame_count | u8 class_count
    class_count x (u8 len | utf-8 name) | u8 domain (0 time, 1 freq)
    f64 snr_db | u64 seed
    frame_count x (u8 label | frame_len x f32 I | frame_len x f32 Q)
    [optional trailer: "ATRL" | u32 len | utf-8 JSON attack record]
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .sigsynth import DOMAINS, LabeledDataset

MAGIC = b"AMCD"
TRAILER_MAGIC = b"ATRL"
VERSION = 1


def _frame_dtype(frame_len: int) -> np.dtype:
    return np.dtype([("label", "u1"), ("i", "<f4", (frame_len,)), ("q", "<f4", (frame_len,))])


def dumps(ds: LabeledDataset) -> bytes:
    if ds.num_classes > 255:
        raise FormatError("at most 255 classes fit the class table")
    parts = [MAGIC, struct.pack("<HIIB", VERSION, ds.frames.shape[1], len(ds), ds.num_classes)]
    for name in ds.class_names:
        raw = name.encode("utf-8")
        if len(raw) > 255:
            raise FormatError(f"class name too long: {name!r}")
        parts.append(struct.pack("<B", len(raw)) + raw)
    parts.append(struct.pack("<BdQ", DOMAINS.index(ds.domain), ds.snr_db, ds.seed))
    records = np.empty(len(ds), dtype=_frame_dtype(ds.frames.shape[1]))
    records["label"] = ds.labels
    records["i"] = ds.frames[:, :, 0]
    records["q"] = ds.frames[:, :, 1]
    parts.append(records.tobytes())
    if ds.attack is not None:
        blob = json.dumps(ds.attack, sort_keys=True, separators=(",", ":")).encode("utf-8")
        parts.append(TRAILER_MAGIC + struct.pack("<I", len(blob)) + blob)
    return b"".join(parts)


def loads(data: bytes) -> LabeledDataset:
    if data[:4] != MAGIC:
        raise FormatError("not an AMCD file (bad magic)")
    try:
        version, frame_len, count, n_classes = struct.unpack_from("<HIIB", data, 4)
        if version != VERSION:
            raise FormatError(f"unsupported AMCD version {version} (expected {VERSION})")
        pos = 4 + struct.calcsize("<HIIB")
        names = []
        for _ in range(n_classes):
            (n,) = struct.unpack_from("<B", data, pos)
            names.append(data[pos + 1:pos + 1 + n].decode("utf-8"))
            pos += 1 + n
        domain, snr_db, seed = struct.unpack_from("<BdQ", data, pos)
        pos += struct.calcsize("<BdQ")
        dtype = _frame_dtype(frame_len)
        end = pos + count * dtype.itemsize
        if end > len(data):
            raise FormatError("truncated AMCD file")
        records = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    except struct.error as exc:
        raise FormatError(f"truncated AMCD header: {exc}") from exc
    attack = None
    if end < len(data):
        if data[end:end + 4] != TRAILER_MAGIC:
            raise FormatError("unexpected bytes after the last frame")
        (n,) = struct.unpack_from("<I", data, end + 4)
        attack = json.loads(data[end + 8:end + 8 + n].decode("utf-8"))
    if domain >= len(DOMAINS):
        raise FormatError(f"unknown domain tag {domain}")
    frames = np.stack([records["i"], records["q"]], axis=-1) if count else np.empty((0, frame_len, 2))
    return LabeledDataset(frames, records["label"].astype(np.int64), DOMAINS[domain], snr_db,
                          seed, names, attack)


def write(ds: LabeledDataset, path) -> None:
    Path(path).write_bytes(dumps(ds))


def read(path) -> LabeledDataset:
    return loads(Path(path).read_bytes())
