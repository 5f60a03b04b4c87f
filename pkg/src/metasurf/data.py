"""Labeled pattern/response datasets and their binary file format.

Layout (little endian): b"MSDS", version byte, u32 record count, then per record
1024 code bytes (0 -> 0x00, 0.5 -> 0x01, 1 -> 0x02, row major) and 100 float32
response values.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError, FormatError
from .oracle import N_FREQ, simulate
from .pattern import GRID, assemble_full, is_ternary, random_quadrant

MAGIC = b"MSDS"
VERSION = 1
HEADER = 9
RECORD = GRID * GRID + 4 * N_FREQ


@dataclass
class Dataset:
    patterns: np.ndarray  # [N, 32, 32] float64 codes
    responses: np.ndarray  # [N, 100] float32

    def __post_init__(self):
        self.patterns = np.asarray(self.patterns, dtype=np.float64).reshape(-1, GRID, GRID)
        self.responses = np.asarray(self.responses, dtype=np.float32).reshape(-1, N_FREQ)
        if len(self.patterns) != len(self.responses):
            raise ContractError(f"{len(self.patterns)} patterns but {len(self.responses)} responses")
        if not is_ternary(self.patterns):
            raise ContractError("dataset patterns must be ternary")

    def __len__(self) -> int:
        return len(self.patterns)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.patterns[idx], self.responses[idx])

    def split(self, fraction: float = 0.9) -> tuple["Dataset", "Dataset"]:
        """Leading ``fraction`` of records for training, the rest for testing."""
        if not 0 < fraction < 1:
            raise ConfigError("split fraction must lie in (0, 1)")
        k = int(round(len(self) * fraction))
        return self.subset(slice(0, k)), self.subset(slice(k, None))


def generate_dataset(n: int, seed: int) -> Dataset:
    if n < 1:
        raise ConfigError("need at least one sample")
    patterns = assemble_full(random_quadrant(np.random.default_rng(seed), batch=n))
    return Dataset(patterns, simulate(patterns))


def encode(ds: Dataset) -> bytes:
    codes = np.rint(ds.patterns * 2).astype(np.uint8).reshape(len(ds), -1)
    resp = ds.responses.astype("<f4").reshape(len(ds), -1).view(np.uint8)
    body = np.concatenate([codes, resp], axis=1)
    return MAGIC + struct.pack("<BI", VERSION, len(ds)) + body.tobytes()


def decode(raw: bytes) -> Dataset:
    if len(raw) < HEADER or raw[:4] != MAGIC:
        raise FormatError("not a dataset file (bad magic)")
    version, count = struct.unpack("<BI", raw[4:HEADER])
    if version != VERSION:
        raise FormatError(f"dataset format version {version} is not supported (expected {VERSION})")
    if len(raw) != HEADER + count * RECORD:
        raise FormatError(f"dataset length {len(raw)} does not match {count} records")
    body = np.frombuffer(raw, dtype=np.uint8, offset=HEADER).reshape(count, RECORD)
    codes = body[:, :GRID * GRID]
    if codes.size and codes.max() > 2:
        raise FormatError("invalid pattern code byte")
    responses = np.ascontiguousarray(body[:, GRID * GRID:]).view("<f4").astype(np.float32)
    return Dataset(codes.reshape(count, GRID, GRID) / 2.0, responses)


def write_dataset(path, ds: Dataset) -> None:
    try:
        Path(path).write_bytes(encode(ds))
    except OSError as exc:
        raise OSError(f"cannot write dataset to {path}: {exc.strerror}") from exc


def read_dataset(path) -> Dataset:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read dataset {path}: {exc.strerror}") from exc
    return decode(raw)
