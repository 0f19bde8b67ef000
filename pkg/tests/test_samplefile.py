import tempfile
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from macsim.kernel import SampleStream
from macsim.samplefile import (HEADER, SampleCorruptionError, SampleFormatError, frame_bytes,
                               load_samples, pack_frame, read_header, save_samples,
                               unpack_frame)


def _stream(rng, shape, S, burn_in=0):
    frames = rng.integers(-1, 2, size=(S + 1,) + shape).astype(np.int8)
    return SampleStream(frames, thin=7, burn_in=burn_in, seed=int(rng.integers(2**63)))


def test_frame_size():
    assert frame_bytes(59 * 400 * 6) == 35_400
    assert frame_bytes(5) == 2


def test_bit_layout():
    cells = np.array([0, 1, -1, 1, -1], dtype=np.int8).reshape(1, 5, 1)
    data = pack_frame(cells)
    # cell k at bits 2*(k%4): 00, 01, 10, 01 | 10 padded
    assert data == bytes([0b01_10_01_00, 0b00_00_00_10])
    assert np.array_equal(unpack_frame(data, (1, 5, 1)), cells)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 6), st.integers(1, 3), st.integers(0, 6),
       st.integers(0, 2**32 - 1))
def test_round_trip(nx, ny, nl, S, seed):
    rng = np.random.default_rng(seed)
    stream = _stream(rng, (nx, ny, nl), S, burn_in=min(S, 1) if S > 1 else 0)
    with tempfile.TemporaryDirectory() as d:
        _check_round_trip(stream, Path(d) / "b.macs", (nx, ny, nl), S)


def _check_round_trip(stream, path, shape, S):
    nx, ny, nl = shape
    save_samples(stream, path)
    back = load_samples(path)
    assert back == stream
    assert back.frames.dtype == np.int8
    h = read_header(path)
    assert (h["x_size"], h["y_size"], h["field_count"], h["samples"]) == (nx, ny, nl, S)
    assert path.stat().st_size == HEADER.size + (S + 1) * frame_bytes(nx * ny * nl)


def test_bad_magic(tmp_path):
    path = tmp_path / "b.macs"
    save_samples(_stream(np.random.default_rng(0), (2, 2, 1), 2), path)
    data = bytearray(path.read_bytes())
    data[:4] = b"NOPE"
    path.write_bytes(bytes(data))
    with pytest.raises(SampleFormatError, match="magic"):
        load_samples(path)


def test_bad_version(tmp_path):
    path = tmp_path / "b.macs"
    save_samples(_stream(np.random.default_rng(0), (2, 2, 1), 2), path)
    data = bytearray(path.read_bytes())
    data[4] = 9
    path.write_bytes(bytes(data))
    with pytest.raises(SampleFormatError, match="version"):
        load_samples(path)


def test_truncated_frame(tmp_path):
    path = tmp_path / "b.macs"
    save_samples(_stream(np.random.default_rng(0), (3, 5, 2), 4), path)
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(SampleCorruptionError) as err:
        load_samples(path)
    assert err.value.frame == 4


def test_trailing_bytes(tmp_path):
    path = tmp_path / "b.macs"
    save_samples(_stream(np.random.default_rng(0), (1, 2, 1), 1), path)
    path.write_bytes(path.read_bytes() + b"\0")
    with pytest.raises(SampleFormatError, match="trailing"):
        load_samples(path)


def test_invalid_code(tmp_path):
    with pytest.raises(SampleFormatError):
        unpack_frame(bytes([0b11]), (1, 1, 1))
