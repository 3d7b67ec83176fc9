"""Versioned binary checkpoint container.

Layout (all integers little-endian u32, floats little-endian f8):

    magic "JKPE" | version | K | d | d_out | provider-kind string |
    config JSON blob | tensor count | tensors

Strings and the config blob are u32-length-prefixed UTF-8. Each tensor is
(name, rank, dims..., data) with data in C order. Tensors are written in
canonical sorted-name order so save -> load -> save is byte-identical.
The file is parsed and validated fully before any ModelParams is built, and
saves go through a temp file + rename, so a crash never leaves a partial or
half-valid checkpoint behind.
"""

import json
import os
import struct

import numpy as np

from . import CHECKPOINT_FORMAT_VERSION, FormatError
from .model import ModelParams, OBJECTIVES

MAGIC = b"JKPE"


def _pack_str(s):
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


class _Reader:
    def __init__(self, data, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n):
        if self.pos + n > len(self.data):
            raise FormatError(f"{self.path}: truncated checkpoint")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]

    def string(self, what):
        n = self.u32()
        if n > len(self.data):
            raise FormatError(f"{self.path}: corrupt {what} length")
        return self.take(n).decode("utf-8")

    def done(self):
        if self.pos != len(self.data):
            raise FormatError(f"{self.path}: {len(self.data) - self.pos} trailing bytes")


def save_checkpoint(params, path):
    """Atomically write a checkpoint; identical params give identical bytes."""
    config = {
        "objective": params.objective,
        "provider": {
            "kind": params.provider_kind,
            "vocab": params.vocab,
        },
    }
    parts = [
        MAGIC,
        struct.pack(
            "<IIII", CHECKPOINT_FORMAT_VERSION, params.k_max, params.d, params.d_out
        ),
        _pack_str(params.provider_kind),
        _pack_str(json.dumps(config, sort_keys=True)),
    ]
    tensors = params.tensor_items()
    parts.append(struct.pack("<I", len(tensors)))
    for name, arr in tensors:
        arr = np.ascontiguousarray(arr, dtype="<f8")
        parts.append(_pack_str(name))
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"".join(parts))
    os.replace(tmp, path)


def load_checkpoint(path, expect_k_max=None):
    """Parse, validate and rebuild ModelParams from a checkpoint file.

    ``expect_k_max`` guards runs configured for a different maximum phrase
    length than the checkpoint was trained with.
    """
    with open(path, "rb") as fh:
        reader = _Reader(fh.read(), path)
    if reader.take(4) != MAGIC:
        raise FormatError(f"{path}: not a checkpoint (bad magic bytes)")
    version = reader.u32()
    if version != CHECKPOINT_FORMAT_VERSION:
        raise FormatError(
            f"{path}: checkpoint format version {version} unsupported "
            f"(this build reads version {CHECKPOINT_FORMAT_VERSION})"
        )
    k_max, d, d_out = reader.u32(), reader.u32(), reader.u32()
    if expect_k_max is not None and expect_k_max != k_max:
        raise FormatError(
            f"{path}: checkpoint was trained with max phrase length {k_max}, "
            f"run is configured for {expect_k_max}"
        )
    provider_kind = reader.string("provider kind")
    try:
        config = json.loads(reader.string("config"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: corrupt config blob") from exc
    objective = config.get("objective", "joint")
    if objective not in OBJECTIVES:
        raise FormatError(f"{path}: unknown objective {objective!r}")
    vocab = config.get("provider", {}).get("vocab")

    n_tensors = reader.u32()
    tensors = {}
    for _ in range(n_tensors):
        name = reader.string("tensor name")
        rank = reader.u32()
        if rank > 8:
            raise FormatError(f"{path}: tensor {name!r} has implausible rank {rank}")
        dims = struct.unpack(f"<{rank}I", reader.take(4 * rank))
        count = int(np.prod(dims, dtype=np.int64)) if rank else 1
        data = np.frombuffer(reader.take(8 * count), dtype="<f8").reshape(dims)
        tensors[name] = data.astype(np.float64).copy()
    reader.done()

    expected = {"score.w": (d_out,), "score.b": (1,), "chunk.w": (d_out,), "chunk.b": (1,)}
    for k in range(1, k_max + 1):
        expected[f"conv{k}.w"] = (d_out, k * d)
        expected[f"conv{k}.b"] = (d_out,)
    if provider_kind == "lookup":
        if vocab is None:
            raise FormatError(f"{path}: lookup checkpoint carries no vocabulary")
        expected["emb.table"] = (len(vocab) + 1, d)
    missing = sorted(set(expected) - set(tensors))
    extra = sorted(set(tensors) - set(expected))
    if missing or extra:
        raise FormatError(f"{path}: tensor set mismatch (missing {missing}, extra {extra})")
    for name, shape in expected.items():
        if tensors[name].shape != shape:
            raise FormatError(
                f"{path}: tensor {name!r} has shape {tensors[name].shape}, expected {shape}"
            )
        if not np.all(np.isfinite(tensors[name])):
            raise FormatError(f"{path}: tensor {name!r} contains non-finite values")

    return ModelParams(
        k_max=k_max,
        d=d,
        d_out=d_out,
        conv_w=[tensors[f"conv{k}.w"] for k in range(1, k_max + 1)],
        conv_b=[tensors[f"conv{k}.b"] for k in range(1, k_max + 1)],
        score_w=tensors["score.w"],
        score_b=tensors["score.b"],
        chunk_w=tensors["chunk.w"],
        chunk_b=tensors["chunk.b"],
        objective=objective,
        provider_kind=provider_kind,
        vocab=vocab,
        emb_table=tensors.get("emb.table"),
    )
