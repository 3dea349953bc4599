"""Minimal NIfTI-1 single-file (``.nii`` / ``.nii.gz``) reader and writer.

Only the fields needed for voxel data are interpreted. Orientation (qform,
sform, units) is carried through ``Volume.metadata["nifti"]`` untouched and
written back out. Writes are always little-endian with ``vox_offset = 352``.
"""
from __future__ import annotations

import gzip
import struct
import zlib
from pathlib import Path
from typing import Union

import numpy as np

from .volumes import CLASS_NAMES, SegmentationMask, Volume

HEADER_SIZE = 348
VOX_OFFSET = 352

# datatype code -> (name, numpy kind, bitpix)
DATATYPES = {
    2: ("uint8", "u1", 8),
    4: ("int16", "i2", 16),
    8: ("int32", "i4", 32),
    16: ("float32", "f4", 32),
    64: ("float64", "f8", 64),
}
_BY_NAME = {name: code for code, (name, _, _) in DATATYPES.items()}


class NiftiError(ValueError):
    """Base class for every NIfTI parsing or encoding failure."""


class BadMagicError(NiftiError):
    pass


class UnsupportedFormatError(NiftiError):
    """NIfTI-2 or header/image pairs (``ni1``)."""


class InvalidHeaderError(NiftiError):
    pass


class UnsupportedDimensionError(NiftiError):
    pass


class UnsupportedDatatypeError(NiftiError):
    pass


class InvalidPixdimError(NiftiError):
    pass


class TruncatedDataError(NiftiError):
    pass


class CorruptStreamError(NiftiError):
    pass


class InvalidDataError(NiftiError):
    pass


class ValueRangeError(NiftiError):
    pass


class InvalidClassError(NiftiError):
    pass


def datatype_code(datatype: Union[str, int]) -> int:
    if isinstance(datatype, str):
        if datatype not in _BY_NAME:
            raise UnsupportedDatatypeError(f"unsupported datatype {datatype!r}")
        return _BY_NAME[datatype]
    if int(datatype) not in DATATYPES:
        raise UnsupportedDatatypeError(f"unsupported datatype code {datatype}")
    return int(datatype)


def _maybe_gunzip(data: bytes) -> bytes:
    if data[:2] == b"\x1f\x8b":
        try:
            return gzip.decompress(data)
        except (OSError, EOFError, zlib.error) as exc:
            raise CorruptStreamError(f"bad gzip stream: {exc}") from exc
    return data


def _endianness(data: bytes) -> str:
    if len(data) < HEADER_SIZE:
        raise TruncatedDataError(f"header needs {HEADER_SIZE} bytes, got {len(data)}")
    for order in "<>":
        size = struct.unpack_from(order + "i", data, 0)[0]
        if size == HEADER_SIZE:
            return order
        if size == 540:
            raise UnsupportedFormatError("NIfTI-2 files are not supported")
    raise InvalidHeaderError("sizeof_hdr is not 348 in either byte order")


def parse_header(data: bytes) -> dict:
    """Decode and validate the 348-byte header; ``data`` must already be un-gzipped."""
    e = _endianness(data)
    magic = bytes(data[344:348])
    if magic == b"ni1\x00":
        raise UnsupportedFormatError("header/image file pairs are not supported")
    if magic != b"n+1\x00":
        raise BadMagicError(f"bad magic {magic!r}")

    def get(fmt, offset):
        return struct.unpack_from(e + fmt, data, offset)

    dim = get("8h", 40)
    ndim = dim[0]
    if not 2 <= ndim <= 4:
        raise UnsupportedDimensionError(f"dim[0] must be 2..4, got {ndim}")
    if any(d < 1 for d in dim[1:ndim + 1]):
        raise InvalidHeaderError(f"non-positive dimension in {dim[1:ndim + 1]}")
    if ndim == 4 and dim[4] != 1:
        raise UnsupportedDimensionError(f"4D input with {dim[4]} frames")
    shape = (dim[1], dim[2], dim[3] if ndim >= 3 else 1)

    code = get("h", 70)[0]
    if code not in DATATYPES:
        raise UnsupportedDatatypeError(f"unsupported datatype code {code}")
    bitpix = get("h", 72)[0]
    if bitpix != DATATYPES[code][2]:
        raise InvalidHeaderError(f"bitpix {bitpix} does not match datatype {code}")

    pixdim = get("8f", 76)
    spacing = list(pixdim[1:4])
    if ndim == 2 and not (np.isfinite(spacing[2]) and spacing[2] > 0):
        spacing[2] = 1.0
    if not all(np.isfinite(s) and s > 0 for s in spacing):
        raise InvalidPixdimError(f"pixdim[1..3] must be positive, got {tuple(pixdim[1:4])}")

    vox_offset = get("f", 108)[0]
    if not np.isfinite(vox_offset) or vox_offset < HEADER_SIZE or vox_offset != int(vox_offset):
        raise InvalidHeaderError(f"invalid vox_offset {vox_offset}")
    slope, inter = get("2f", 112)

    orientation = {
        "qform_code": get("h", 252)[0],
        "sform_code": get("h", 254)[0],
        "quatern": list(get("6f", 256)),
        "srow": list(get("12f", 280)),
        "qfac": pixdim[0],
        "xyzt_units": data[123],
    }
    return {
        "endian": e,
        "shape": shape,
        "datatype": code,
        # shortest decimal for the stored float32, so 1.4 reads back as 1.4
        "spacing": tuple(float(str(np.float32(s))) for s in spacing),
        "vox_offset": int(vox_offset),
        "scl_slope": slope,
        "scl_inter": inter,
        "orientation": orientation,
    }


def _read(data: bytes):
    data = _maybe_gunzip(bytes(data))
    hdr = parse_header(data)
    kind = DATATYPES[hdr["datatype"]][1]
    dtype = np.dtype(hdr["endian"] + kind)
    count = int(np.prod(hdr["shape"]))
    end = hdr["vox_offset"] + count * dtype.itemsize
    if len(data) < end:
        raise TruncatedDataError(f"payload needs {end} bytes, stream has {len(data)}")
    arr = np.frombuffer(data, dtype=dtype, count=count, offset=hdr["vox_offset"])
    arr = arr.reshape(hdr["shape"], order="F").astype(np.float64)
    slope, inter = hdr["scl_slope"], hdr["scl_inter"]
    if slope != 0 and np.isfinite(slope):
        arr = arr * slope + (inter if np.isfinite(inter) else 0.0)
    if not np.all(np.isfinite(arr)):
        raise InvalidDataError("voxel data contains non-finite values")
    return arr, hdr


def read_volume(data: bytes) -> Volume:
    arr, hdr = _read(data)
    return Volume(arr, hdr["spacing"], {"nifti": hdr["orientation"]})


def read_mask(data: bytes, num_classes: int = len(CLASS_NAMES)) -> SegmentationMask:
    arr, hdr = _read(data)
    labels = np.rint(arr)
    if np.any(np.abs(arr - labels) > 1e-6):
        raise InvalidClassError("mask contains non-integral values")
    bad = (labels < 0) | (labels >= num_classes)
    if np.any(bad):
        raise InvalidClassError(f"mask value {arr[bad][0]:g} is not a class code below {num_classes}")
    return SegmentationMask(labels.astype(np.uint8), hdr["spacing"], num_classes,
                            {"nifti": hdr["orientation"]})


def _header(shape, spacing, code: int, orientation=None) -> bytes:
    o = dict(orientation or {})
    h = bytearray(HEADER_SIZE)
    struct.pack_into("<i", h, 0, HEADER_SIZE)
    struct.pack_into("<8h", h, 40, 3, shape[0], shape[1], shape[2], 1, 1, 1, 1)
    struct.pack_into("<h", h, 70, code)
    struct.pack_into("<h", h, 72, DATATYPES[code][2])
    qfac = o.get("qfac", 1.0)
    struct.pack_into("<8f", h, 76, qfac, spacing[0], spacing[1], spacing[2], 0, 0, 0, 0)
    struct.pack_into("<f", h, 108, float(VOX_OFFSET))
    struct.pack_into("<2f", h, 112, 0.0, 0.0)  # slope 0: stored values are the values
    h[123] = int(o.get("xyzt_units", 2)) & 0xFF  # 2 = millimetres
    struct.pack_into("<h", h, 252, int(o.get("qform_code", 0)))
    struct.pack_into("<h", h, 254, int(o.get("sform_code", 0)))
    struct.pack_into("<6f", h, 256, *o.get("quatern", [0.0] * 6))
    struct.pack_into("<12f", h, 280, *o.get("srow", [0.0] * 12))
    h[344:348] = b"n+1\x00"
    return bytes(h)


def _encode(arr: np.ndarray, spacing, code: int, orientation, compress: bool) -> bytes:
    kind = DATATYPES[code][1]
    if kind[0] in "ui":
        info = np.iinfo(kind)
        if arr.size and (arr.min() < info.min or arr.max() > info.max):
            raise ValueRangeError(
                f"values [{arr.min():g}, {arr.max():g}] exceed {DATATYPES[code][0]} range"
            )
        if np.any(arr != np.rint(arr)):
            raise ValueRangeError(f"non-integral values cannot be stored as {DATATYPES[code][0]}")
    elif kind == "f4" and arr.size and np.max(np.abs(arr)) > np.finfo(np.float32).max:
        raise ValueRangeError("values exceed float32 range")
    payload = np.asarray(arr).astype("<" + kind).tobytes(order="F")
    out = _header(arr.shape, spacing, code, orientation) + b"\x00" * 4 + payload
    return gzip.compress(out, mtime=0) if compress else out


def write_volume(v: Volume, datatype: Union[str, int] = "float64", compress: bool = False) -> bytes:
    code = datatype_code(datatype)
    return _encode(v.data, v.spacing, code, v.metadata.get("nifti"), compress)


def write_mask(m: SegmentationMask, datatype: Union[str, int] = "uint8",
               compress: bool = False) -> bytes:
    code = datatype_code(datatype)
    return _encode(m.labels, m.spacing, code, m.metadata.get("nifti"), compress)


def load_volume(path) -> Volume:
    return read_volume(Path(path).read_bytes())


def load_mask(path, num_classes: int = len(CLASS_NAMES)) -> SegmentationMask:
    return read_mask(Path(path).read_bytes(), num_classes)


def save_volume(path, v: Volume, datatype="float64") -> None:
    path = Path(path)
    path.write_bytes(write_volume(v, datatype, compress=path.suffix == ".gz"))


def save_mask(path, m: SegmentationMask, datatype="uint8") -> None:
    path = Path(path)
    path.write_bytes(write_mask(m, datatype, compress=path.suffix == ".gz"))
