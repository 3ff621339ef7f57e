"""Minimal NIfTI-1 reader/writer.

Little-endian single-file (``n+1``) volumes and header/image pairs
(``ni1``) with datatypes uint8, int16, int32, float32 and float64. Writing
always produces a canonical float32 single-file volume with a 352-byte
offset, so ``write_nifti(parse_nifti(b)) == b`` for files this module wrote.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import (
    BadMagicError,
    BigEndianError,
    GridMismatchError,
    NiftiError,
    NonPositiveSpacingError,
    TruncatedDataError,
    UnsupportedDatatypeError,
    UnsupportedDimensionsError,
)
from .volume import MaskROI, VolumeGrid, check_same_grid

HEADER_SIZE = 348
SINGLE_FILE_OFFSET = 352

DATATYPES = {
    2: np.dtype("<u1"),
    4: np.dtype("<i2"),
    8: np.dtype("<i4"),
    16: np.dtype("<f4"),
    64: np.dtype("<f8"),
}

# (offset, struct format) for the header fields this module touches
_F = {
    "sizeof_hdr": (0, "i"),
    "dim": (40, "8h"),
    "datatype": (70, "h"),
    "bitpix": (72, "h"),
    "pixdim": (76, "8f"),
    "vox_offset": (108, "f"),
    "scl_slope": (112, "f"),
    "scl_inter": (116, "f"),
    "xyzt_units": (123, "B"),
    "descrip": (148, "80s"),
    "qform_code": (252, "h"),
    "sform_code": (254, "h"),
    "quatern": (256, "3f"),
    "qoffset": (268, "3f"),
    "srow_x": (280, "4f"),
    "srow_y": (296, "4f"),
    "srow_z": (312, "4f"),
    "magic": (344, "4s"),
}


def _get(buf: bytes, name: str, endian: str = "<"):
    off, fmt = _F[name]
    vals = struct.unpack_from(endian + fmt, buf, off)
    return vals if len(vals) > 1 else vals[0]


def _put(buf: bytearray, name: str, *vals):
    off, fmt = _F[name]
    struct.pack_into("<" + fmt, buf, off, *vals)


def parse_header(buf: bytes) -> dict:
    if len(buf) < HEADER_SIZE:
        raise TruncatedDataError(f"header needs {HEADER_SIZE} bytes, got {len(buf)}")
    sizeof_hdr = _get(buf, "sizeof_hdr")
    dim0 = _get(buf, "dim")[0]
    if sizeof_hdr != HEADER_SIZE or not 1 <= dim0 <= 7:
        be_size = _get(buf, "sizeof_hdr", ">")
        be_dim0 = _get(buf, "dim", ">")[0]
        if be_size == HEADER_SIZE and 1 <= be_dim0 <= 7:
            raise BigEndianError("big-endian NIfTI files are not supported")
        if sizeof_hdr != HEADER_SIZE:
            raise BadMagicError(f"sizeof_hdr is {sizeof_hdr}, expected {HEADER_SIZE}")
        raise BadMagicError(f"dim[0] = {dim0} outside [1, 7]")
    magic = _get(buf, "magic")
    if magic not in (b"n+1\x00", b"ni1\x00"):
        raise BadMagicError(f"unrecognized magic {magic!r}")

    dim = _get(buf, "dim")
    ndim = dim[0]
    shape = [int(d) for d in dim[1 : ndim + 1]]
    if any(n < 1 for n in shape):
        raise UnsupportedDimensionsError(f"non-positive dimension in {shape}")
    if any(n != 1 for n in shape[3:]):
        raise UnsupportedDimensionsError(f"only 3D volumes are supported, got dims {shape}")
    shape = (shape + [1, 1, 1])[:3]

    datatype = _get(buf, "datatype")
    if datatype not in DATATYPES:
        raise UnsupportedDatatypeError(f"datatype code {datatype} is not supported")

    pixdim = _get(buf, "pixdim")
    spacing = tuple(float(p) for p in pixdim[1:4])
    if any(not (s > 0) for s in spacing):
        raise NonPositiveSpacingError(f"pixdim[1..3] must be positive, got {spacing}")

    qform_code = _get(buf, "qform_code")
    sform_code = _get(buf, "sform_code")
    srow = np.array([_get(buf, "srow_x"), _get(buf, "srow_y"), _get(buf, "srow_z")], dtype=np.float64)
    if qform_code > 0:
        origin = tuple(float(v) for v in _get(buf, "qoffset"))
    elif sform_code > 0:
        origin = tuple(float(v) for v in srow[:, 3])
    else:
        origin = (0.0, 0.0, 0.0)

    descrip = _get(buf, "descrip").split(b"\x00", 1)[0].decode("utf-8", errors="replace")
    return {
        "magic": magic,
        "shape": tuple(shape),
        "datatype": datatype,
        "spacing": spacing,
        "origin": origin,
        "vox_offset": float(_get(buf, "vox_offset")),
        "scl_slope": float(_get(buf, "scl_slope")),
        "scl_inter": float(_get(buf, "scl_inter")),
        "qform_code": qform_code,
        "sform_code": sform_code,
        "srow": srow,
        "descrip": descrip,
    }


def parse_nifti(buf: bytes, payload: Optional[bytes] = None) -> VolumeGrid:
    """Decode a NIfTI-1 byte string into a :class:`VolumeGrid`.

    For ``ni1`` header/image pairs the image bytes are passed as ``payload``
    and ``vox_offset`` indexes into them.
    """
    hdr = parse_header(buf)
    if hdr["magic"] == b"n+1\x00":
        if len(buf) < SINGLE_FILE_OFFSET:
            raise TruncatedDataError(f"single-file NIfTI needs >= {SINGLE_FILE_OFFSET} bytes")
        source = buf
        offset = int(hdr["vox_offset"])
        if offset < HEADER_SIZE:
            offset = SINGLE_FILE_OFFSET
    else:
        if payload is None:
            raise TruncatedDataError("ni1 header given without its image payload")
        source = payload
        offset = int(hdr["vox_offset"])

    dtype = DATATYPES[hdr["datatype"]]
    n = int(np.prod(hdr["shape"]))
    need = n * dtype.itemsize
    if len(source) - offset < need:
        raise TruncatedDataError(
            f"payload has {max(len(source) - offset, 0)} bytes, need {need} for dims {hdr['shape']}"
        )
    flat = np.frombuffer(source, dtype=dtype, count=n, offset=offset).astype(np.float64)
    slope, inter = hdr["scl_slope"], hdr["scl_inter"]
    if slope != 0 and np.isfinite(slope):
        flat = flat * slope + (inter if np.isfinite(inter) else 0.0)

    affine = None
    if hdr["sform_code"] > 0:
        affine = np.vstack([hdr["srow"], [0.0, 0.0, 0.0, 1.0]])
    return VolumeGrid.from_flat(
        flat,
        hdr["shape"],
        spacing=hdr["spacing"],
        origin=hdr["origin"],
        intensity_unit=hdr["descrip"],
        affine=affine,
    )


def write_nifti(volume: VolumeGrid) -> bytes:
    """Encode ``volume`` as a canonical single-file float32 NIfTI-1."""
    hdr = bytearray(SINGLE_FILE_OFFSET)
    _put(hdr, "sizeof_hdr", HEADER_SIZE)
    nx, ny, nz = volume.dims
    _put(hdr, "dim", 3, nx, ny, nz, 1, 1, 1, 1)
    _put(hdr, "datatype", 16)
    _put(hdr, "bitpix", 32)
    sx, sy, sz = volume.spacing
    _put(hdr, "pixdim", 1.0, sx, sy, sz, 0.0, 0.0, 0.0, 0.0)
    _put(hdr, "vox_offset", float(SINGLE_FILE_OFFSET))
    _put(hdr, "scl_slope", 1.0)
    _put(hdr, "scl_inter", 0.0)
    _put(hdr, "xyzt_units", 2)  # millimetres
    _put(hdr, "descrip", volume.intensity_unit.encode("utf-8")[:79])
    ox, oy, oz = volume.origin
    _put(hdr, "qform_code", 1)
    _put(hdr, "sform_code", 1)
    _put(hdr, "quatern", 0.0, 0.0, 0.0)
    _put(hdr, "qoffset", ox, oy, oz)
    _put(hdr, "srow_x", sx, 0.0, 0.0, ox)
    _put(hdr, "srow_y", 0.0, sy, 0.0, oy)
    _put(hdr, "srow_z", 0.0, 0.0, sz, oz)
    _put(hdr, "magic", b"n+1\x00")
    payload = volume.flat_data().astype("<f4").tobytes()
    return bytes(hdr) + payload


def _read_bytes(path: Path) -> bytes:
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise NiftiError(f"file not found: {path}") from None
    if path.suffix == ".gz":
        try:
            data = gzip.decompress(data)
        except (OSError, EOFError) as exc:
            raise TruncatedDataError(f"{path}: corrupt gzip stream ({exc})") from None
    return data


def load_nifti(path: Union[str, Path]) -> VolumeGrid:
    path = Path(path)
    buf = _read_bytes(path)
    payload = None
    if path.suffix == ".hdr" or path.name.endswith(".hdr.gz"):
        img = path.with_name(path.name.replace(".hdr", ".img"))
        payload = _read_bytes(img)
    return parse_nifti(buf, payload)


def save_nifti(volume: VolumeGrid, path: Union[str, Path]):
    path = Path(path)
    data = write_nifti(volume)
    if path.suffix == ".gz":
        # mtime pinned so output bytes are reproducible
        data = gzip.compress(data, mtime=0)
    path.write_bytes(data)


def load_mask(path: Union[str, Path], like: Optional[VolumeGrid] = None, label: str = "GTV") -> MaskROI:
    vol = load_nifti(path)
    mask = MaskROI(vol.data, vol.spacing, vol.origin, label)
    if like is not None:
        try:
            check_same_grid(like, mask)
        except GridMismatchError as exc:
            raise GridMismatchError(f"{path}: {exc}") from None
    return mask


def mask_to_volume(mask: MaskROI) -> VolumeGrid:
    return VolumeGrid(mask.voxels.astype(np.float64), mask.spacing, mask.origin, "mask")
