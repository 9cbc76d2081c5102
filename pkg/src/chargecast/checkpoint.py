"""Bit-exact checkpointing of fitted forecasters.

The container is deliberately simple so it can be byte-identical across
runs: a magic line, one JSON header line (sorted keys) describing the
model kind, its config, and the block table (name, dtype, shape), then
each block's raw bytes in C order with explicit endianness, concatenated
in table order.  No timestamps or environment details are stored, so
saving the same state twice produces the same file.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, BinaryIO

import numpy as np

from .baselines import MODEL_REGISTRY, Forecaster
from .errors import DataError

MAGIC = b"CHARGECAST-CHECKPOINT v1\n"

# Allowed on-disk dtypes, normalized to explicit byte order.
_DTYPES = {"<f8", "<i8", "<i4", "|u1"}


def _normalize_dtype(arr: np.ndarray) -> tuple[str, np.ndarray]:
    kind = arr.dtype.kind
    if kind == "f":
        dt = "<f8"
    elif kind == "u" and arr.dtype.itemsize == 1:
        dt = "|u1"
    elif kind == "i" and arr.dtype.itemsize <= 4:
        dt = "<i4"
    elif kind == "i":
        dt = "<i8"
    else:
        raise DataError(f"unsupported checkpoint dtype {arr.dtype}")
    return dt, np.ascontiguousarray(arr.astype(np.dtype(dt), copy=False))


def save_checkpoint(
    path: str | Path | BinaryIO,
    kind: str,
    config: dict[str, Any],
    blocks: dict[str, np.ndarray],
) -> None:
    """Write a checkpoint; identical state always yields identical bytes."""
    table = []
    payload = []
    for name, arr in blocks.items():
        dt, normalized = _normalize_dtype(np.asarray(arr))
        table.append([name, dt, list(normalized.shape)])
        payload.append(normalized.tobytes(order="C"))
    header = json.dumps(
        {"kind": kind, "config": config, "blocks": table},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    if isinstance(path, (str, Path)):
        stream: BinaryIO = open(path, "wb")
        owned = True
    else:
        stream, owned = path, False
    try:
        stream.write(MAGIC)
        stream.write(header)
        stream.write(b"\n")
        for chunk in payload:
            stream.write(chunk)
    finally:
        if owned:
            stream.close()


def load_checkpoint(path: str | Path | BinaryIO) -> tuple[str, dict[str, Any], dict[str, np.ndarray]]:
    """Read a checkpoint written by :func:`save_checkpoint`.

    Raises:
        DataError: wrong magic, malformed header, unknown dtype, or a
            payload whose length does not match the block table.
    """
    if isinstance(path, (str, Path)):
        try:
            stream: BinaryIO = open(path, "rb")
        except OSError as exc:
            raise DataError(f"cannot read {path}: {exc}") from None
        owned = True
    else:
        stream, owned = path, False
    try:
        magic = stream.readline()
        if magic != MAGIC:
            raise DataError(f"not a checkpoint file (bad magic {magic[:32]!r})")
        header_line = stream.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DataError(f"malformed checkpoint header: {exc}") from None
        for key in ("kind", "config", "blocks"):
            if key not in header:
                raise DataError(f"checkpoint header is missing {key!r}")
        blocks: dict[str, np.ndarray] = {}
        for entry in header["blocks"]:
            if not (isinstance(entry, list) and len(entry) == 3):
                raise DataError(f"malformed block table entry {entry!r}")
            name, dt, shape = entry
            if dt not in _DTYPES:
                raise DataError(f"unsupported dtype {dt!r} in block {name!r}")
            shape = tuple(int(s) for s in shape)
            count = int(np.prod(shape)) if shape else 1
            nbytes = count * np.dtype(dt).itemsize
            raw = stream.read(nbytes)
            if len(raw) != nbytes:
                raise DataError(
                    f"truncated checkpoint: block {name!r} needs {nbytes} bytes, got {len(raw)}"
                )
            blocks[name] = np.frombuffer(raw, dtype=np.dtype(dt)).reshape(shape).copy()
        trailing = stream.read(1)
        if trailing:
            raise DataError("trailing bytes after the last checkpoint block")
        return header["kind"], header["config"], blocks
    finally:
        if owned:
            stream.close()


def save_forecaster(forecaster: Forecaster, path: str | Path | BinaryIO) -> None:
    """Checkpoint a fitted forecaster."""
    config, blocks = forecaster.state()
    save_checkpoint(path, forecaster.kind, config, blocks)


def load_forecaster(path: str | Path | BinaryIO) -> Forecaster:
    """Rebuild a fitted forecaster from a checkpoint."""
    kind, config, blocks = load_checkpoint(path)
    if kind not in MODEL_REGISTRY:
        raise DataError(f"checkpoint has unknown model kind {kind!r}")
    return MODEL_REGISTRY[kind].from_state(config, blocks)
