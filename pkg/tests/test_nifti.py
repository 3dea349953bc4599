import gzip
import struct

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from mdaug import nifti
from mdaug.volumes import SegmentationMask, Volume

from conftest import nifti_bytes


@pytest.fixture
def fixture_data():
    return np.arange(32, dtype=np.float32).reshape((4, 4, 2), order="F") * 0.5


def test_read_handmade_fixture(fixture_data):
    v = nifti.read_volume(nifti_bytes(fixture_data, (1.4, 1.4, 10.0)))
    assert v.dims == (4, 4, 2)
    assert v.spacing == (1.4, 1.4, 10.0)
    np.testing.assert_array_equal(v.data, fixture_data)
    # x varies fastest on disk
    assert v.data[1, 0, 0] == 0.5 and v.data[0, 1, 0] == 2.0


def test_big_endian_fixture_reads_identically(fixture_data):
    le = nifti.read_volume(nifti_bytes(fixture_data, (1.4, 1.4, 10.0)))
    be = nifti.read_volume(nifti_bytes(fixture_data, (1.4, 1.4, 10.0), endian=">"))
    assert be.spacing == le.spacing
    assert np.array_equal(be.data, le.data)


def test_gzip_wrapped(fixture_data):
    raw = nifti_bytes(fixture_data, (1, 1, 1))
    assert np.array_equal(nifti.read_volume(gzip.compress(raw)).data, fixture_data)


def test_scaling_applied(fixture_data):
    v = nifti.read_volume(nifti_bytes(fixture_data, (1, 1, 1), slope=2.0, inter=-1.0))
    np.testing.assert_array_equal(v.data, fixture_data * 2.0 - 1.0)


@pytest.mark.parametrize(
    "kwargs,error",
    [
        ({"magic": b"XXXX"}, nifti.BadMagicError),
        ({"magic": b"ni1\x00"}, nifti.UnsupportedFormatError),
        ({"sizeof_hdr": 540}, nifti.UnsupportedFormatError),
        ({"sizeof_hdr": 123}, nifti.InvalidHeaderError),
        ({"datatype": 32, "bitpix": 64}, nifti.UnsupportedDatatypeError),
        ({"datatype": 16, "bitpix": 8}, nifti.InvalidHeaderError),
        ({"ndim": 5}, nifti.UnsupportedDimensionError),
        ({"vox_offset": 100.0}, nifti.InvalidHeaderError),
    ],
)
def test_malformed_headers(fixture_data, kwargs, error):
    with pytest.raises(error):
        nifti.read_volume(nifti_bytes(fixture_data, (1, 1, 1), **kwargs))


def test_non_positive_pixdim(fixture_data):
    with pytest.raises(nifti.InvalidPixdimError):
        nifti.read_volume(nifti_bytes(fixture_data, (1.0, 0.0, 1.0)))


def test_truncated_payload_and_header(fixture_data):
    raw = nifti_bytes(fixture_data, (1, 1, 1))
    with pytest.raises(nifti.TruncatedDataError):
        nifti.read_volume(raw[:-3])
    with pytest.raises(nifti.TruncatedDataError):
        nifti.read_volume(raw[:200])


def test_corrupt_gzip():
    with pytest.raises(nifti.CorruptStreamError):
        nifti.read_volume(b"\x1f\x8b" + b"garbage" * 10)


def test_4d_with_single_frame_accepted_multi_rejected(fixture_data):
    one = nifti_bytes(fixture_data, (1, 1, 1), ndim=4, dims=(4, 4, 2, 1))
    assert nifti.read_volume(one).dims == (4, 4, 2)
    many = nifti_bytes(np.zeros((4, 4, 2, 2), np.float32), (1, 1, 1), ndim=4)
    with pytest.raises(nifti.UnsupportedDimensionError):
        nifti.read_volume(many)


def test_2d_file(rng):
    data = rng.normal(size=(5, 3)).astype(np.float32)
    v = nifti.read_volume(nifti_bytes(data, (0.8, 0.9, 0.0), ndim=2, dims=(5, 3)))
    assert v.dims == (5, 3, 1) and v.spacing == (0.8, 0.9, 1.0)


def test_float64_round_trip_bit_exact(rng):
    data = rng.normal(size=(6, 5, 4)) * 1e3
    data[0, 0, 0] = -0.0
    v = Volume(data, (1.25, 0.7, 8.0))
    back = nifti.read_volume(nifti.write_volume(v, "float64"))
    assert back.data.tobytes() == v.data.tobytes()
    assert back.spacing == v.spacing


@pytest.mark.parametrize("datatype", ["uint8", "int16", "int32", "float32"])
def test_integral_round_trips(datatype, rng):
    data = rng.integers(0, 200, size=(4, 3, 2)).astype(np.float64)
    back = nifti.read_volume(nifti.write_volume(Volume(data), datatype, compress=True))
    assert np.array_equal(back.data, data)


def test_out_of_range_integer_write():
    with pytest.raises(nifti.ValueRangeError):
        nifti.write_volume(Volume(np.array([[[300.0]]])), "uint8")
    with pytest.raises(nifti.ValueRangeError):
        nifti.write_volume(Volume(np.array([[[1.5]]])), "int16")
    with pytest.raises(nifti.UnsupportedDatatypeError):
        nifti.write_volume(Volume(np.zeros((1, 1, 1))), "complex64")


def test_written_header_layout(rng):
    raw = nifti.write_volume(Volume(rng.normal(size=(3, 2, 2)), (2.0, 3.0, 4.0)), "float32")
    assert struct.unpack_from("<i", raw, 0)[0] == 348
    assert raw[344:348] == b"n+1\x00"
    assert struct.unpack_from("<8h", raw, 40)[:4] == (3, 3, 2, 2)
    assert struct.unpack_from("<2h", raw, 70) == (16, 32)
    assert struct.unpack_from("<f", raw, 108)[0] == 352.0
    assert len(raw) == 352 + 12 * 4


def test_orientation_preserved(fixture_data):
    raw = bytearray(nifti_bytes(fixture_data, (1, 1, 1)))
    struct.pack_into("<hh", raw, 252, 1, 2)
    struct.pack_into("<12f", raw, 280, *range(1, 13))
    v = nifti.read_volume(bytes(raw))
    out = nifti.write_volume(v, "float32")
    assert out[252:328] == bytes(raw[252:328])


def test_mask_round_trip(rng):
    m = SegmentationMask(rng.integers(0, 4, size=(5, 4, 3)), (1.4, 1.4, 10))
    back = nifti.read_mask(nifti.write_mask(m))
    assert np.array_equal(back.labels, m.labels)
    back16 = nifti.read_mask(nifti.write_mask(m, "int16"))
    assert np.array_equal(back16.labels, m.labels)


def test_mask_invalid_class():
    raw = nifti_bytes(np.array([[[0, 7]]], np.uint8), (1, 1, 1), datatype=2, bitpix=8)
    with pytest.raises(nifti.InvalidClassError):
        nifti.read_mask(raw)


def test_float_mask_file_accepted():
    raw = nifti_bytes(np.array([[[0.0, 1.0], [1.0, 0.0]]], np.float32), (1, 1, 1))
    m = nifti.read_mask(raw)
    assert m.labels.dtype == np.uint8
    assert m.labels.ravel().tolist() == [0, 1, 1, 0]
    with pytest.raises(nifti.InvalidClassError):
        nifti.read_mask(nifti_bytes(np.array([[[0.5]]], np.float32), (1, 1, 1)))


def test_file_helpers(tmp_path, rng):
    v = Volume(rng.normal(size=(3, 3, 3)))
    nifti.save_volume(tmp_path / "a.nii.gz", v, "float64")
    assert (tmp_path / "a.nii.gz").read_bytes()[:2] == b"\x1f\x8b"
    assert np.array_equal(nifti.load_volume(tmp_path / "a.nii.gz").data, v.data)


@settings(max_examples=300, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.data())
def test_parsing_is_total(data):
    """Any corruption of a valid file either parses or raises a NiftiError."""
    base = bytearray(nifti_bytes(np.arange(8, dtype=np.float32).reshape(2, 2, 2), (1, 1, 1)))
    n_edits = data.draw(st.integers(1, 8))
    for _ in range(n_edits):
        pos = data.draw(st.integers(0, len(base) - 1))
        base[pos] = data.draw(st.integers(0, 255))
    cut = data.draw(st.integers(0, len(base)))
    blob = bytes(base[:cut])
    try:
        v = nifti.read_volume(blob)
    except nifti.NiftiError:
        return
    assert np.all(np.isfinite(v.data)) and all(s > 0 for s in v.spacing)


@settings(max_examples=200, deadline=None)
@given(st.binary(max_size=600))
def test_random_bytes_never_crash(blob):
    try:
        nifti.read_volume(blob)
    except nifti.NiftiError:
        pass
