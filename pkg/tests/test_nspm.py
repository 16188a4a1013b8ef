import struct

import numpy as np
import pytest

from nonspam import nspm
from nonspam.errors import FormatError, NonSpamIOError
from nonspam.frame import ActivationTensor
from nonspam.spatial import PixelGrid


@pytest.fixture
def acts():
    rng = np.random.Generator(np.random.PCG64(5))
    return ActivationTensor(PixelGrid(3, 4), [0.01, 0.02], rng.normal(size=(2, 3, 4)))


def test_layout(acts):
    data = nspm.encode(acts)
    assert data[:4] == b"NSPM"
    assert struct.unpack_from("<4I", data, 4) == (1, 3, 4, 2)
    assert len(data) == 20 + 8 * 2 + 8 * 2 * 3 * 4
    stamps = np.frombuffer(data, dtype="<f8", count=2, offset=20)
    assert stamps.tolist() == [0.01, 0.02]
    first = np.frombuffer(data, dtype="<f8", count=1, offset=36)[0]
    assert first == acts.coeffs[0, 0, 0]


def test_payload_size_for_default_decomposition():
    acts = ActivationTensor(PixelGrid(64, 64), [0.1] * 5, np.zeros((5, 64, 64)))
    assert len(nspm.encode(acts)) == 20 + 8 * 5 + 8 * 5 * 64 * 64


def test_file_round_trip_is_bit_identical(acts, tmp_path):
    path = str(tmp_path / "c.nspm")
    nspm.write_coefficients(path, acts)
    back = nspm.read_coefficients(path)
    assert back.grid == acts.grid
    assert back.time_bins == acts.time_bins
    assert back.coeffs.tobytes() == acts.coeffs.tobytes()


def test_truncated_header(acts):
    with pytest.raises(FormatError) as info:
        nspm.decode(nspm.encode(acts)[:10])
    assert info.value.offset == 10


def test_bad_magic(acts):
    data = b"XSPM" + nspm.encode(acts)[4:]
    with pytest.raises(FormatError) as info:
        nspm.decode(data, path="c.nspm")
    assert info.value.offset == 0
    assert str(info.value).startswith("c.nspm: ")
    assert info.value.exit_code == 2


def test_bad_version(acts):
    data = bytearray(nspm.encode(acts))
    data[4:8] = struct.pack("<I", 2)
    with pytest.raises(FormatError) as info:
        nspm.decode(bytes(data))
    assert info.value.offset == 4


def test_zero_dimension(acts):
    data = bytearray(nspm.encode(acts))
    data[8:12] = struct.pack("<I", 0)
    with pytest.raises(FormatError) as info:
        nspm.decode(bytes(data))
    assert info.value.offset == 8


def test_size_mismatch(acts):
    data = nspm.encode(acts)
    with pytest.raises(FormatError):
        nspm.decode(data[:-1])
    with pytest.raises(FormatError):
        nspm.decode(data + b"\0")


def test_missing_file(tmp_path):
    with pytest.raises(NonSpamIOError):
        nspm.read_coefficients(str(tmp_path / "missing.nspm"))


@pytest.mark.parametrize(
    "stamps",
    [[float("nan"), 0.02], [0.01, float("inf")], [0.02, 0.01], [0.01, 0.01]],
)
def test_bad_time_stamps(acts, stamps):
    data = bytearray(nspm.encode(acts))
    data[20:36] = np.asarray(stamps, dtype="<f8").tobytes()
    with pytest.raises(FormatError) as info:
        nspm.decode(bytes(data))
    assert info.value.offset == 20
    assert info.value.exit_code == 2
