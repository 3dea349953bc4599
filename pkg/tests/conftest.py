import struct

import numpy as np
import pytest

from mdaug.volumes import CaseRecord


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def nifti_bytes(data, spacing, *, endian="<", datatype=16, bitpix=32, magic=b"n+1\x00",
                sizeof_hdr=348, ndim=3, vox_offset=352.0, slope=0.0, inter=0.0, dims=None):
    """Assemble a NIfTI-1 file field by field, independently of the package writer."""
    data = np.asarray(data)
    dims = dims or data.shape
    hdr = bytearray(348)
    struct.pack_into(endian + "i", hdr, 0, sizeof_hdr)
    dim = [ndim] + list(dims) + [1] * (7 - len(dims))
    struct.pack_into(endian + "8h", hdr, 40, *dim)
    struct.pack_into(endian + "h", hdr, 70, datatype)
    struct.pack_into(endian + "h", hdr, 72, bitpix)
    struct.pack_into(endian + "8f", hdr, 76, 1.0, *spacing, 0, 0, 0, 0)
    struct.pack_into(endian + "f", hdr, 108, vox_offset)
    struct.pack_into(endian + "2f", hdr, 112, slope, inter)
    hdr[344:348] = magic
    kind = {2: "u1", 4: "i2", 8: "i4", 16: "f4", 64: "f8"}.get(datatype, "f4")
    payload = data.astype(endian + kind).tobytes(order="F")
    return bytes(hdr) + b"\x00" * (int(vox_offset) - 348) + payload


def make_cases(counts, annotated=True):
    """``counts``: mapping (vendor, centre) -> number of cases."""
    cases = []
    for (vendor, centre), n in counts.items():
        for i in range(n):
            cases.append(CaseRecord(f"{vendor}{centre}_{i:03d}", vendor, centre, annotated))
    return cases


@pytest.fixture
def mnms_cases():
    # Training split: 75 A (centre 1), 50 + 25 B (centres 2, 3), 25 unannotated C
    return make_cases({("A", 1): 75, ("B", 2): 50, ("B", 3): 25}) + make_cases(
        {("C", 4): 25}, annotated=False
    )


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
