"""``.ckpt`` checkpoint format.

    u32 header length | utf-8 JSON header | float32 LE parameters

Parameters are concatenated in layer order and, within a layer, in the
layer's ``param_names`` order (dense/conv2d: W, b; lstm: Wx, Wh, b). The
header lists each parameter's key and shape under ``"parameters"``.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import FormatError
from .network import Network

FORMAT = "freqamc-ckpt"
VERSION = 1


def dumps(header: dict, network: Network) -> bytes:
    header = dict(header)
    header["format"] = FORMAT
    header["version"] = VERSION
    header["layers"] = network.specs
    header["input_shape"] = list(network.input_shape)
    header["parameters"] = [[k, list(a.shape)] for k, a in network.parameters()]
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes() for _, a in network.parameters())
    return struct.pack("<I", len(blob)) + blob + body


def loads(data: bytes) -> tuple[dict, Network]:
    try:
        (n,) = struct.unpack_from("<I", data, 0)
        header = json.loads(data[4:4 + n].decode("utf-8"))
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable checkpoint header: {exc}") from exc
    if header.get("format") != FORMAT:
        raise FormatError("not a freqamc checkpoint")
    if header.get("version") != VERSION:
        raise FormatError(f"unsupported checkpoint version {header.get('version')} (expected {VERSION})")
    net = Network(header["layers"], header["input_shape"], rng=0, dtype=np.float32)
    pos = 4 + n
    expected = [[k, list(a.shape)] for k, a in net.parameters()]
    if expected != header["parameters"]:
        raise FormatError("checkpoint parameter table does not match its layer specs")
    for _, arr in net.parameters():
        size = arr.size * 4
        if pos + size > len(data):
            raise FormatError("truncated checkpoint")
        arr[...] = np.frombuffer(data, dtype="<f4", count=arr.size, offset=pos).reshape(arr.shape)
        pos += size
    if pos != len(data):
        raise FormatError("trailing bytes after checkpoint parameters")
    return header, net
