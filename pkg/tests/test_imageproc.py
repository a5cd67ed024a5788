import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from hfl.errors import DegenerateImage, PgmFormatError
from hfl.imageproc import (
    augment,
    crop_to_content,
    letterbox_resize,
    minmax_normalize,
    mirror,
    read_pgm,
    rotate,
    write_pgm,
)

u8_images = hnp.arrays(
    np.uint8,
    st.tuples(st.integers(2, 40), st.integers(2, 40)),
    elements=st.integers(0, 255),
)


@given(u8_images)
@settings(max_examples=60, deadline=None)
def test_crop_idempotent(img):
    if not (img < 250).any():
        with pytest.raises(DegenerateImage):
            crop_to_content(img)
        return
    once = crop_to_content(img)
    twice = crop_to_content(once)
    assert np.array_equal(once, twice)
    # edges of the crop must contain content
    assert (once[0] < 250).any() and (once[-1] < 250).any()
    assert (once[:, 0] < 250).any() and (once[:, -1] < 250).any()


def test_crop_all_white_raises():
    with pytest.raises(DegenerateImage):
        crop_to_content(np.full((8, 8), 255, dtype=np.uint8))


def test_letterbox_shape_and_black_fill():
    img = np.full((10, 30), 200, dtype=np.uint8)
    out = letterbox_resize(img, 64)
    assert out.shape == (64, 64)
    # single scale factor: 30 -> 64, 10 -> round(10*64/30) = 21 rows
    new_h = round(10 * 64 / 30)
    oy = (64 - new_h) // 2
    assert np.all(out[:oy] == 0) and np.all(out[oy + new_h:] == 0)
    assert np.all(out[oy:oy + new_h] == 200)


def test_letterbox_square_input_fills_canvas():
    img = np.arange(64, dtype=np.uint8).reshape(8, 8)
    out = letterbox_resize(img, 32)
    assert out.shape == (32, 32)
    assert (out == 0).sum() <= (img == 0).sum() * 16  # no border padding added


@given(u8_images)
@settings(max_examples=60, deadline=None)
def test_minmax_bounds(img):
    out = minmax_normalize(img)
    if img.max() == img.min():
        assert np.all(out == 0.0)
    else:
        assert out.min() == 0.0 and out.max() == 1.0
    assert out.dtype == np.float64


@given(u8_images)
@settings(max_examples=60, deadline=None)
def test_mirror_involution(img):
    assert np.array_equal(mirror(mirror(img)), img)


@given(hnp.arrays(np.uint8, st.tuples(st.integers(2, 24), st.integers(2, 24)).map(lambda t: (t[0], t[0])), elements=st.integers(0, 255)))
@settings(max_examples=40, deadline=None)
def test_quarter_turns_lossless(img):
    once = rotate(img, math.pi / 2)
    # a quarter turn is a pure index permutation: same multiset of pixels
    assert np.array_equal(np.sort(once, axis=None), np.sort(img, axis=None))
    out = img
    for _ in range(4):
        out = rotate(out, math.pi / 2)
    assert np.array_equal(out, img)
    assert np.array_equal(rotate(img, math.pi), img[::-1, ::-1])
    assert np.array_equal(rotate(img, -math.pi / 2), rotate(rotate(rotate(img, math.pi / 2), math.pi / 2), math.pi / 2))


def test_half_turn_lossless_non_square():
    img = np.arange(15, dtype=np.uint8).reshape(3, 5)
    assert np.array_equal(rotate(img, math.pi), img[::-1, ::-1])
    assert np.array_equal(rotate(img, 0.0), img)


def test_rotate_arbitrary_angle_keeps_shape_and_range():
    rng = np.random.default_rng(5)
    img = rng.integers(0, 256, size=(17, 23)).astype(np.uint8)
    out = rotate(img, 0.3)
    assert out.shape == img.shape
    assert out.dtype == np.uint8
    assert out.min() >= 0 and out.max() <= 255


def test_augment_mirror_only_is_exact(rng):
    img = np.arange(36, dtype=np.uint8).reshape(6, 6)
    out = augment(img, np.random.default_rng(0), p_mirror=1.0, max_angle=0.0)
    assert np.array_equal(out, mirror(img))
    out = augment(img, np.random.default_rng(0), p_mirror=0.0, max_angle=0.0)
    assert np.array_equal(out, img)


def test_augment_deterministic_under_seed():
    img = np.random.default_rng(1).integers(0, 256, size=(20, 20)).astype(np.uint8)
    a = augment(img, np.random.default_rng(7))
    b = augment(img, np.random.default_rng(7))
    assert np.array_equal(a, b)


def test_pgm_roundtrip(tmp_path):
    img = np.random.default_rng(2).integers(0, 256, size=(13, 9)).astype(np.uint8)
    p = tmp_path / "x.pgm"
    write_pgm(p, img)
    back = read_pgm(p)
    assert np.array_equal(back, img)


def test_pgm_comments_in_header(tmp_path):
    img = np.arange(6, dtype=np.uint8).reshape(2, 3)
    p = tmp_path / "c.pgm"
    with open(p, "wb") as fh:
        fh.write(b"P5\n# a comment\n3 2\n# another\n255\n")
        fh.write(img.tobytes())
    assert np.array_equal(read_pgm(p), img)


def test_pgm_bad_magic_offset(tmp_path):
    p = tmp_path / "bad.pgm"
    p.write_bytes(b"P6\n2 2\n255\n\x00\x00\x00\x00")
    with pytest.raises(PgmFormatError) as exc:
        read_pgm(p)
    assert exc.value.offset == 0


def test_pgm_truncated_payload_offset(tmp_path):
    p = tmp_path / "trunc.pgm"
    header = b"P5\n4 4\n255\n"
    p.write_bytes(header + b"\x01\x02\x03")  # 3 of 16 payload bytes
    with pytest.raises(PgmFormatError) as exc:
        read_pgm(p)
    assert exc.value.offset == len(header) + 3


def test_pgm_unsupported_maxval(tmp_path):
    p = tmp_path / "deep.pgm"
    p.write_bytes(b"P5\n2 2\n65535\n" + b"\x00" * 8)
    with pytest.raises(PgmFormatError):
        read_pgm(p)
