"""Self-describing single-file checkpoints.

Layout, all offsets in bytes unless stated:

  0..7    magic  b"LBLATTN1"
  8..15   little-endian uint64: byte length of the JSON header
  header  UTF-8 JSON object with keys
            format_version  (currently 1)
            config          serialized ModelConfig
            vocab_sha256    hash of the vocabulary the model was trained with
            params          list of {path, shape, offset, count}; offset and
                            count are in float64 elements of the data section
  data    concatenated little-endian float64 parameter buffers

Loading rebuilds the parameter skeleton from the stored config and verifies
that the stored paths and shapes match it exactly, so a checkpoint can never
be silently applied to a mismatched architecture.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .config import ModelConfig
from .errors import CompatibilityError, InputError
from .model import Model, init_model, named_parameters

MAGIC = b"LBLATTN1"
FORMAT_VERSION = 1


def save_checkpoint(path, model: Model, vocab_sha256: str) -> None:
    params = named_parameters(model)
    entries = []
    offset = 0
    buffers = []
    for p, t in params.items():
        entries.append(
            {"path": p, "shape": list(t.shape), "offset": offset, "count": t.size}
        )
        buffers.append(t.data.astype("<f8", copy=False).tobytes())
        offset += t.size
    header = json.dumps(
        {
            "format_version": FORMAT_VERSION,
            "config": model.config.to_dict(),
            "vocab_sha256": vocab_sha256,
            "params": entries,
        },
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header).to_bytes(8, "little"))
        fh.write(header)
        for buf in buffers:
            fh.write(buf)


def load_checkpoint(path) -> tuple[Model, str]:
    """Read a checkpoint; returns the model and the stored vocab hash."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as e:
        raise InputError(f"cannot read checkpoint {path}: {e}") from e
    if blob[: len(MAGIC)] != MAGIC:
        raise CompatibilityError(f"{path} is not a checkpoint file (bad magic)")
    hdr_len = int.from_bytes(blob[8:16], "little")
    try:
        header = json.loads(blob[16 : 16 + hdr_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CompatibilityError(f"{path}: corrupt checkpoint header: {e}") from e
    if header.get("format_version") != FORMAT_VERSION:
        raise CompatibilityError(
            f"{path}: unsupported checkpoint version {header.get('format_version')!r}"
        )
    config = ModelConfig.from_dict(header["config"])
    model = init_model(config, seed=0)
    expected = named_parameters(model)
    stored = {e["path"]: e for e in header["params"]}
    missing = sorted(set(expected) - set(stored))
    if missing:
        raise CompatibilityError(f"{path}: checkpoint missing parameters {missing[:3]}")
    extra = sorted(set(stored) - set(expected))
    if extra:
        raise CompatibilityError(f"{path}: checkpoint has unexpected parameters {extra[:3]}")
    data = np.frombuffer(blob[16 + hdr_len :], dtype="<f8")
    for p, t in expected.items():
        e = stored[p]
        if tuple(e["shape"]) != t.shape:
            raise CompatibilityError(
                f"{path}: parameter {p} has shape {tuple(e['shape'])}, expected {t.shape}"
            )
        lo, n = e["offset"], e["count"]
        if n != t.size or lo + n > data.size:
            raise CompatibilityError(f"{path}: parameter {p} data out of bounds")
        t.data[:] = data[lo : lo + n]
        t.grad = None
    return model, header["vocab_sha256"]


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def config_sha256(config: ModelConfig) -> str:
    payload = json.dumps(config.to_dict(), sort_keys=True).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()
