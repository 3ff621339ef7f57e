import gzip
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from deltarad.errors import (
    BadMagicError,
    BigEndianError,
    GridMismatchError,
    InvalidMaskError,
    NiftiError,
    NonPositiveSpacingError,
    TruncatedDataError,
    UnsupportedDatatypeError,
    UnsupportedDimensionsError,
)
from deltarad.nifti import load_mask, load_nifti, mask_to_volume, parse_nifti, save_nifti, write_nifti
from deltarad.phantom import generate_phantom_course

from conftest import make_mask, make_volume, small_spec


def raw_header(dims=(2, 2, 2), datatype=16, pixdim=(1.0, 1.0, 1.0), magic=b"n+1\x00", slope=0.0, inter=0.0, endian="<"):
    """Hand-packed NIfTI-1 header, independent of the writer."""
    bitpix = {2: 8, 4: 16, 8: 32, 16: 32, 64: 64}.get(datatype, 8)
    h = bytearray(352)
    struct.pack_into(endian + "i", h, 0, 348)
    struct.pack_into(endian + "8h", h, 40, len(dims), *dims, *([1] * (7 - len(dims))))
    struct.pack_into(endian + "h", h, 70, datatype)
    struct.pack_into(endian + "h", h, 72, bitpix)
    struct.pack_into(endian + "8f", h, 76, 1.0, *pixdim, 0, 0, 0, 0)
    struct.pack_into(endian + "f", h, 108, 352.0)
    struct.pack_into(endian + "f", h, 112, slope)
    struct.pack_into(endian + "f", h, 116, inter)
    h[344:348] = magic
    return bytes(h)


def test_minimal_float32_volume_x_fastest():
    vals = np.arange(8, dtype="<f4")
    v = parse_nifti(raw_header() + vals.tobytes())
    assert v.dims == (2, 2, 2)
    assert v.spacing == (1.0, 1.0, 1.0)
    # x varies fastest on disk
    assert v.data[1, 0, 0] == 1.0
    assert v.data[0, 1, 0] == 2.0
    assert v.data[0, 0, 1] == 4.0
    np.testing.assert_array_equal(v.flat_data(), vals)


@pytest.mark.parametrize("code,dtype", [(2, "<u1"), (4, "<i2"), (8, "<i4"), (16, "<f4"), (64, "<f8")])
def test_datatypes_promote_to_float64(code, dtype):
    vals = np.array([0, 1, 2, 3, 4, 5, 6, 7], dtype=dtype)
    v = parse_nifti(raw_header(datatype=code) + vals.tobytes())
    assert v.data.dtype == np.float64
    np.testing.assert_array_equal(v.flat_data(), np.arange(8.0))


def test_scaling_applied_when_slope_nonzero():
    vals = np.arange(8, dtype="<i2")
    v = parse_nifti(raw_header(datatype=4, slope=2.0, inter=-1.0) + vals.tobytes())
    np.testing.assert_array_equal(v.flat_data(), 2.0 * np.arange(8) - 1.0)


def test_zero_slope_means_unscaled():
    vals = np.arange(8, dtype="<f4")
    v = parse_nifti(raw_header(slope=0.0, inter=5.0) + vals.tobytes())
    np.testing.assert_array_equal(v.flat_data(), np.arange(8.0))


def test_sizeof_hdr_347_rejected():
    h = bytearray(raw_header())
    struct.pack_into("<i", h, 0, 347)
    with pytest.raises(BadMagicError):
        parse_nifti(bytes(h) + bytes(32))


def test_bad_magic():
    with pytest.raises(BadMagicError):
        parse_nifti(raw_header(magic=b"abc\x00") + bytes(32))


def test_big_endian_reported():
    with pytest.raises(BigEndianError):
        parse_nifti(raw_header(endian=">") + bytes(32))


def test_unsupported_datatype():
    with pytest.raises(UnsupportedDatatypeError):
        parse_nifti(raw_header(datatype=32) + bytes(64))


def test_truncated_payload():
    with pytest.raises(TruncatedDataError):
        parse_nifti(raw_header() + bytes(31))


def test_nonpositive_spacing():
    with pytest.raises(NonPositiveSpacingError):
        parse_nifti(raw_header(pixdim=(1.0, 0.0, 1.0)) + bytes(32))


def test_4d_rejected():
    with pytest.raises(UnsupportedDimensionsError):
        parse_nifti(raw_header(dims=(2, 2, 2, 2)) + bytes(64))


def test_2d_volume_gets_unit_z():
    v = parse_nifti(raw_header(dims=(2, 3)) + np.arange(6, dtype="<f4").tobytes())
    assert v.dims == (2, 3, 1)


def test_single_voxel_writes_352_plus_payload():
    b = write_nifti(make_volume(np.zeros((1, 1, 1))))
    assert len(b) == 356
    assert b[344:348] == b"n+1\x00"
    assert struct.unpack_from("<i", b, 0)[0] == 348


def test_canonical_roundtrip_byte_identical():
    rng = np.random.default_rng(1)
    v = make_volume(rng.normal(size=(3, 4, 5)).astype(np.float32), spacing=(0.5, 1.5, 3.0))
    b = write_nifti(v)
    assert write_nifti(parse_nifti(b)) == b


@settings(max_examples=50, deadline=None)
@given(
    arrays(np.float32, st.tuples(*[st.integers(1, 5)] * 3), elements=st.floats(-1e6, 1e6, width=32)),
    st.tuples(*[st.floats(0.1, 10.0)] * 3),
)
def test_parse_write_identity(data, spacing):
    v = make_volume(data, spacing)
    w = parse_nifti(write_nifti(v))
    assert w.dims == v.dims
    np.testing.assert_allclose(w.spacing, v.spacing, rtol=1e-6)
    np.testing.assert_array_equal(w.data, data.astype(np.float64))


def test_gzip_files_are_bit_stable(tmp_path):
    rec = generate_phantom_course(small_spec(seed=5, n=1), 0)
    a, b = tmp_path / "a.nii.gz", tmp_path / "b.nii.gz"
    save_nifti(rec.images["F1"], a)
    rec2 = generate_phantom_course(small_spec(seed=5, n=1), 0)
    save_nifti(rec2.images["F1"], b)
    assert a.read_bytes() == b.read_bytes()
    assert gzip.decompress(a.read_bytes()) == write_nifti(rec.images["F1"])
    np.testing.assert_allclose(load_nifti(a).data, rec.images["F1"].data, rtol=1e-6)


def test_header_image_pair(tmp_path):
    vals = np.arange(8, dtype="<f4")
    h = bytearray(raw_header(magic=b"ni1\x00"))
    struct.pack_into("<f", h, 108, 0.0)
    (tmp_path / "v.hdr").write_bytes(bytes(h[:348]))
    (tmp_path / "v.img").write_bytes(vals.tobytes())
    np.testing.assert_array_equal(load_nifti(tmp_path / "v.hdr").flat_data(), vals)


def test_mask_loading_and_grid_check(tmp_path):
    m = make_mask(np.eye(3)[:, :, None].repeat(2, axis=2), spacing=(1.0, 1.0, 2.0))
    save_nifti(mask_to_volume(m), tmp_path / "m.nii.gz")
    like = make_volume(np.zeros((3, 3, 2)), spacing=(1.0, 1.0, 2.0))
    got = load_mask(tmp_path / "m.nii.gz", like=like)
    np.testing.assert_array_equal(got.voxels, m.voxels)
    with pytest.raises(GridMismatchError):
        load_mask(tmp_path / "m.nii.gz", like=make_volume(np.zeros((3, 3, 3))))
    with pytest.raises(GridMismatchError):
        load_mask(tmp_path / "m.nii.gz", like=make_volume(np.zeros((3, 3, 2))))


def test_non_binary_mask_rejected(tmp_path):
    save_nifti(make_volume(np.full((2, 2, 2), 2.0)), tmp_path / "m.nii")
    with pytest.raises(InvalidMaskError):
        load_mask(tmp_path / "m.nii")


def test_missing_file_and_corrupt_gzip(tmp_path):
    with pytest.raises(NiftiError):
        load_nifti(tmp_path / "absent.nii")
    (tmp_path / "bad.nii.gz").write_bytes(b"not gzip")
    with pytest.raises(TruncatedDataError):
        load_nifti(tmp_path / "bad.nii.gz")
