"""Binary persistence of a chain's retained states.

Layout (little-endian)::

    b"MACS"  u8 version
    u32 x_size, y_size, field_count, S, burn_in, thin
    u64 seed
    (S + 1) frames, initial state first

Each frame packs the cells in (i, j, l) row-major order at 2 bits per
cell (00 missing, 01 agree, 10 disagree).  Cell ``k`` occupies bits
``2 * (k % 4)`` and up of byte ``k // 4``; the last byte is zero-padded.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .kernel import SampleStream

MAGIC = b"MACS"
VERSION = 1
HEADER = struct.Struct("<4sBIIIIIIQ")

# cell code (-1, 0, 1) + 1 -> 2-bit code
_ENCODE = np.array([2, 0, 1], dtype=np.uint8)
_DECODE = np.array([0, 1, -1, 0], dtype=np.int8)


class SampleFormatError(ValueError):
    pass


class SampleCorruptionError(SampleFormatError):
    def __init__(self, message: str, frame: int):
        super().__init__(message)
        self.frame = frame


def frame_bytes(n_cells: int) -> int:
    return (2 * n_cells + 7) // 8


def pack_frame(cells: np.ndarray) -> bytes:
    codes = _ENCODE[cells.reshape(-1).astype(np.int16) + 1]
    pad = (-len(codes)) % 4
    if pad:
        codes = np.concatenate([codes, np.zeros(pad, dtype=np.uint8)])
    q = codes.reshape(-1, 4)
    packed = q[:, 0] | (q[:, 1] << 2) | (q[:, 2] << 4) | (q[:, 3] << 6)
    return packed.astype(np.uint8).tobytes()


def unpack_frame(data: bytes, shape: tuple[int, int, int]) -> np.ndarray:
    n = shape[0] * shape[1] * shape[2]
    raw = np.frombuffer(data, dtype=np.uint8)
    codes = np.stack([(raw >> s) & 3 for s in (0, 2, 4, 6)], axis=1).reshape(-1)[:n]
    if (codes == 3).any():
        raise SampleFormatError("invalid 2-bit cell code 11")
    return _DECODE[codes].reshape(shape)


class SampleWriter:
    """Write frames one at a time; the frame count is fixed by the header."""

    def __init__(self, path, shape: tuple[int, int, int], samples: int, burn_in: int,
                 thin: int, seed: int):
        self.path = Path(path)
        self.shape = tuple(shape)
        self.expected = samples + 1
        self.written = 0
        self._fh = open(self.path, "wb")
        self._fh.write(HEADER.pack(MAGIC, VERSION, *self.shape, samples, burn_in, thin,
                                   int(seed) & 0xFFFFFFFFFFFFFFFF))

    def write(self, cells: np.ndarray) -> None:
        if cells.shape != self.shape:
            raise ValueError(f"frame shape {cells.shape} != {self.shape}")
        if self.written >= self.expected:
            raise ValueError("more frames than declared in the header")
        self._fh.write(pack_frame(cells))
        self.written += 1

    def close(self) -> None:
        self._fh.close()
        if self.written != self.expected:
            raise SampleFormatError(
                f"{self.path}: wrote {self.written} of {self.expected} declared frames")

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.close()
        else:
            self._fh.close()


def save_samples(stream: SampleStream, path) -> None:
    shape = stream.frames.shape[1:]
    with SampleWriter(path, shape, stream.samples, stream.burn_in, stream.thin,
                      stream.seed) as w:
        for f in stream.frames:
            w.write(f)


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read(HEADER.size)
    return _parse_header(raw, path)


def _parse_header(raw: bytes, path) -> dict:
    if len(raw) < HEADER.size:
        raise SampleFormatError(f"{path}: file too short for a header")
    magic, version, nx, ny, nl, S, burn_in, thin, seed = HEADER.unpack(raw[:HEADER.size])
    if magic != MAGIC:
        raise SampleFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise SampleFormatError(f"{path}: unsupported format version {version}")
    return dict(x_size=nx, y_size=ny, field_count=nl, samples=S,
                burn_in=burn_in, thin=thin, seed=seed)


def load_samples(path, truth_map: np.ndarray | None = None) -> SampleStream:
    data = Path(path).read_bytes()
    h = _parse_header(data, path)
    shape = (h["x_size"], h["y_size"], h["field_count"])
    fb = frame_bytes(shape[0] * shape[1] * shape[2])
    frames = np.empty((h["samples"] + 1,) + shape, dtype=np.int8)
    off = HEADER.size
    for k in range(h["samples"] + 1):
        chunk = data[off: off + fb]
        if len(chunk) < fb:
            raise SampleCorruptionError(f"{path}: frame {k} truncated", k)
        try:
            frames[k] = unpack_frame(chunk, shape)
        except SampleFormatError as exc:
            raise SampleCorruptionError(f"{path}: frame {k}: {exc}", k) from None
        off += fb
    if off != len(data):
        raise SampleFormatError(f"{path}: {len(data) - off} trailing bytes")
    return SampleStream(frames, h["thin"], h["burn_in"], h["seed"], truth_map)
