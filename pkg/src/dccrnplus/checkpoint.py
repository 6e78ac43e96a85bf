"""Binary checkpoint container (layout in docs/checkpoint_format.md).

All integers little-endian::

    magic      4 bytes   b"DCCP"
    version    u32       1
    hdr_len    u32       length of the header text in bytes
    header     UTF-8     "key=value\\n" lines, keys sorted
    n_blobs    u32
    blob * n_blobs:
        name_len u16, name UTF-8
        dtype    u8      1 float32, 2 float64, 3 int64
        ndim     u8, dims u32 * ndim
        data     raw little-endian, C order
    crc32      u32       zlib.crc32 of every preceding byte
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import fields
from pathlib import Path

import numpy as np

from .model import DCCRNPlus, ModelConfig

MAGIC = b"DCCP"
VERSION = 1
DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8"), 3: np.dtype("<i8")}
CODES = {np.dtype(v).newbyteorder("="): k for k, v in DTYPES.items()}


class CheckpointError(ValueError):
    """Unreadable, corrupt or mismatched checkpoint."""


def _fmt(v) -> str:
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt(x) for x in v)
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    text = str(v)
    if "\n" in text:
        raise CheckpointError(f"header value {v!r} contains a newline")
    return text


def _parse_config(header: dict) -> ModelConfig:
    ref = ModelConfig()
    kwargs = {}
    for f in fields(ModelConfig):
        key = f"model.{f.name}"
        if key not in header:
            continue
        raw, default = header[key], getattr(ref, f.name)
        if isinstance(default, tuple):
            kwargs[f.name] = tuple(int(x) for x in raw.split(",") if x)
        elif isinstance(default, int):
            kwargs[f.name] = int(raw)
        else:
            kwargs[f.name] = raw
    return ModelConfig(**kwargs)


def write_container(path, header: dict, blobs: dict) -> None:
    text = "".join(f"{k}={_fmt(v)}\n" for k, v in sorted(header.items()))
    if any("\n" in str(k) or "=" in str(k) for k in header):
        raise CheckpointError("header keys may not contain '=' or newlines")
    out = bytearray(MAGIC)
    hdr = text.encode("utf-8")
    out += struct.pack("<II", VERSION, len(hdr)) + hdr
    out += struct.pack("<I", len(blobs))
    for name, arr in blobs.items():
        arr = np.ascontiguousarray(arr)
        code = CODES.get(arr.dtype.newbyteorder("="))
        if code is None:
            raise CheckpointError(f"blob {name!r}: unsupported dtype {arr.dtype}")
        nb = name.encode("utf-8")
        out += struct.pack("<H", len(nb)) + nb
        out += struct.pack("<BB", code, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.astype(DTYPES[code], copy=False).tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)))
    Path(path).write_bytes(bytes(out))


def read_container(path) -> tuple:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(raw) < 16 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    body, (crc,) = raw[:-4], struct.unpack("<I", raw[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointError(f"{path}: checksum mismatch (truncated or corrupt)")
    try:
        version, hlen = struct.unpack_from("<II", body, 4)
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        pos = 12
        text = body[pos:pos + hlen].decode("utf-8")
        pos += hlen
        header = dict(line.split("=", 1) for line in text.splitlines() if line)
        (count,) = struct.unpack_from("<I", body, pos)
        pos += 4
        blobs = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", body, pos)
            pos += 2
            name = body[pos:pos + nlen].decode("utf-8")
            pos += nlen
            code, ndim = struct.unpack_from("<BB", body, pos)
            pos += 2
            shape = struct.unpack_from(f"<{ndim}I", body, pos)
            pos += 4 * ndim
            dt = DTYPES[code]
            size = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
            if pos + size > len(body):
                raise CheckpointError(f"{path}: blob {name!r} runs past the end of the file")
            blobs[name] = np.frombuffer(body, dt, count=size // dt.itemsize, offset=pos).reshape(shape).astype(dt.newbyteorder("="))
            pos += size
    except (struct.error, KeyError, UnicodeDecodeError, ValueError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"{path}: malformed checkpoint ({exc})") from exc
    return header, blobs


def save_checkpoint(path, model: DCCRNPlus, header: dict | None = None, extra: dict | None = None) -> None:
    """Model weights (as ``model.<name>`` blobs) plus optional extra blobs and header fields."""
    hdr = {f"model.{k}": v for k, v in model.cfg.to_dict().items()}
    hdr["format"] = "dccrnplus"
    hdr.update(header or {})
    blobs = {f"model.{k}": v for k, v in model.state_dict().items()}
    blobs.update(extra or {})
    write_container(path, hdr, blobs)


def load_checkpoint(path, expect: ModelConfig | None = None) -> tuple:
    """Returns ``(model, header, extra_blobs)``.

    ``expect`` (optional) must equal the stored model config.
    """
    header, blobs = read_container(path)
    try:
        cfg = _parse_config(header)
    except (TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: bad model config in header ({exc})") from exc
    if expect is not None and expect != cfg:
        raise CheckpointError(f"{path}: checkpoint config {cfg} does not match expected {expect}")
    state = {k[len("model."):]: v for k, v in blobs.items() if k.startswith("model.")}
    dtypes = {v.dtype for v in state.values() if v.dtype.kind == "f"}
    model = DCCRNPlus(cfg)
    if dtypes:
        model.astype(dtypes.pop())
    try:
        model.load_state_dict(state)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: weights do not fit config ({exc})") from exc
    extra = {k: v for k, v in blobs.items() if not k.startswith("model.")}
    return model, header, extra
