"""TEDBEMB1 container writer and structural verifier.

Layout (all integers little-endian):
  bytes 0-7   magic "TEDBEMB1"
  u32         example_count
  u32         layer_count
  u32         hidden_dim
  per example:
    u32 example_id, u32 label, u32 token_count
    token_count * layer_count * hidden_dim float32, ordered token-major,
    then layer, then feature
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"TEDBEMB1"


class FormatError(ValueError):
    """Structural violation in a TEDBEMB1 file."""


@dataclass
class Record:
    example_id: int
    label: int
    grid: np.ndarray  # [tokens, layers, hidden]


def write_store(records: list[Record], layer_count: int, hidden_dim: int, path) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", len(records), layer_count, hidden_dim))
        for rec in records:
            grid = np.ascontiguousarray(rec.grid, dtype="<f4")
            if grid.shape[1:] != (layer_count, hidden_dim):
                raise FormatError(
                    f"example {rec.example_id}: grid shape {grid.shape} does not match "
                    f"(tokens, {layer_count}, {hidden_dim})"
                )
            fh.write(struct.pack("<III", rec.example_id, rec.label, grid.shape[0]))
            fh.write(grid.tobytes())


@dataclass
class VerifyReport:
    path: str
    example_count: int
    layer_count: int
    hidden_dim: int
    total_tokens: int

    def summary(self) -> str:
        return (
            f"{self.path}: {self.example_count} examples, "
            f"{self.layer_count} layers x {self.hidden_dim} features, "
            f"{self.total_tokens} tokens total"
        )


def verify(path) -> VerifyReport:
    """Re-parse the whole file, checking counts, dims, and finiteness."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 8 or data[:8] != MAGIC:
        raise FormatError(f"{path}: bad magic at byte 0")
    offset = 8
    if len(data) < offset + 12:
        raise FormatError(f"{path}: truncated header at byte {offset}")
    count, layer_count, hidden_dim = struct.unpack_from("<III", data, offset)
    offset += 12
    if layer_count == 0 or hidden_dim == 0:
        raise FormatError(f"{path}: zero layer_count or hidden_dim in header")
    seen: set[int] = set()
    total_tokens = 0
    for i in range(count):
        if len(data) < offset + 12:
            raise FormatError(f"{path}: truncated record header for example {i} at byte {offset}")
        ex_id, label, token_count = struct.unpack_from("<III", data, offset)
        offset += 12
        if ex_id in seen:
            raise FormatError(f"{path}: duplicate example id {ex_id}")
        seen.add(ex_id)
        if label not in (0, 1):
            raise FormatError(f"{path}: example {ex_id}: label {label} is not binary")
        if token_count == 0:
            raise FormatError(f"{path}: example {ex_id}: zero tokens")
        n = token_count * layer_count * hidden_dim
        if len(data) < offset + 4 * n:
            raise FormatError(f"{path}: truncated float data for example {ex_id} at byte {offset}")
        floats = np.frombuffer(data, dtype="<f4", count=n, offset=offset)
        if not np.isfinite(floats).all():
            raise FormatError(f"{path}: non-finite value at example {ex_id}")
        offset += 4 * n
        total_tokens += token_count
    if offset != len(data):
        raise FormatError(f"{path}: {len(data) - offset} trailing bytes at byte {offset}")
    return VerifyReport(str(path), count, layer_count, hidden_dim, total_tokens)
