"""Checkpoint files.

Layout (text header, then binary blob)::

    STMBP-CKPT 1
    target=SBP
    [config]
    <run config, key=value lines>
    [tensors]
    <name>\t<shape, comma-separated>\t<blob offset>\t<nbytes>\t<crc32 hex>
    [end]
    <little-endian float32 parameters, concatenated in manifest order>

Offsets in the manifest are relative to the start of the blob.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .config import RunConfig, parse_config_text
from .errors import CheckpointError, StmbpError
from .estimator import Estimator

MAGIC = "STMBP-CKPT"
VERSION = 1
END = b"[end]\n"


@dataclass
class Checkpoint:
    model: Estimator
    config: RunConfig
    target: str


def checkpoint_bytes(model: Estimator, config: RunConfig) -> bytes:
    state = model.state_dict()
    blobs, rows, offset = [], [], 0
    for name, tensor in state.items():
        data = np.ascontiguousarray(tensor.detach().cpu().numpy(), dtype="<f4").tobytes()
        shape = ",".join(str(s) for s in tensor.shape)
        rows.append(f"{name}\t{shape}\t{offset}\t{len(data)}\t{zlib.crc32(data):08x}")
        blobs.append(data)
        offset += len(data)
    header = [f"{MAGIC} {VERSION}", f"target={model.target}", "[config]"]
    header += config.to_text().splitlines()
    header += ["[tensors]", *rows]
    return ("\n".join(header) + "\n").encode("utf-8") + END + b"".join(blobs)


def save_checkpoint(model: Estimator, config: RunConfig, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(model, config))


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"{path}: unreadable ({exc})") from None
    end = raw.find(END)
    if end < 0:
        raise CheckpointError(f"{path}: header terminator not found (file truncated or not a checkpoint)")
    blob_start = end + len(END)
    try:
        lines = raw[:end].decode("utf-8").splitlines()
    except UnicodeDecodeError as exc:
        raise CheckpointError(f"{path}: corrupted header at byte offset {exc.start}") from None
    if not lines or lines[0] != f"{MAGIC} {VERSION}":
        raise CheckpointError(f"{path}: not a version-{VERSION} checkpoint (byte offset 0)")
    try:
        target = lines[1].split("=", 1)[1]
        i_cfg, i_tens = lines.index("[config]"), lines.index("[tensors]")
    except (IndexError, ValueError):
        raise CheckpointError(f"{path}: malformed header") from None
    try:
        config = parse_config_text("\n".join(lines[i_cfg + 1 : i_tens]))
    except StmbpError as exc:
        raise CheckpointError(f"{path}: bad embedded config: {exc}") from None

    model = Estimator(config.model, target)
    expected = model.state_dict()
    state = {}
    blob_end = blob_start
    for row in lines[i_tens + 1 :]:
        try:
            name, shape_s, off_s, n_s, crc_s = row.split("\t")
            shape = tuple(int(s) for s in shape_s.split(",") if s)
            off, n, crc = int(off_s), int(n_s), int(crc_s, 16)
        except ValueError:
            raise CheckpointError(f"{path}: malformed tensor entry {row!r}") from None
        start = blob_start + off
        data = raw[start : start + n]
        if len(data) != n:
            raise CheckpointError(f"{path}: truncated at byte offset {len(raw)} (tensor {name} needs {start + n})")
        if zlib.crc32(data) != crc:
            raise CheckpointError(f"{path}: checksum mismatch in tensor {name} at byte offset {start}")
        if name not in expected or tuple(expected[name].shape) != shape:
            raise CheckpointError(f"{path}: tensor {name} {shape} does not match the embedded model config")
        blob_end = max(blob_end, start + n)
        state[name] = torch.from_numpy(np.frombuffer(data, dtype="<f4").reshape(shape).copy())
    if blob_end != len(raw):
        raise CheckpointError(f"{path}: unexpected trailing bytes at byte offset {blob_end}")
    missing = set(expected) - set(state)
    if missing:
        raise CheckpointError(f"{path}: missing tensors {sorted(missing)}")
    model.load_state_dict(state)
    model.eval()
    return Checkpoint(model, config, target)
