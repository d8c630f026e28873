import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hbvc.yuv import (Frame420, bilinear_up2, box_down2, depth_to_space,
                      plane_to_uint8, psnr_plane, psnr_yuv, rgb_to_yuv420,
                      space_to_depth, to_444, yuv420_to_rgb)
from hbvc.y4m import (UnsupportedFormatError, Y4MError, Y4MMetadata, read_y4m,
                      read_yuv_raw, write_y4m, write_yuv_raw)


def rand_frame(rng, w, h):
    return Frame420(rng.random((h, w)).astype(np.float32),
                    rng.random((h // 2, w // 2)).astype(np.float32),
                    rng.random((h // 2, w // 2)).astype(np.float32))


# ---- frame invariants ---------------------------------------------------------

def test_frame_shape_validation():
    y = np.zeros((4, 4), np.float32)
    with pytest.raises(ValueError):
        Frame420(np.zeros((3, 4), np.float32), y[:2, :2], y[:2, :2])
    with pytest.raises(ValueError):
        Frame420(y, np.zeros((2, 3), np.float32), np.zeros((2, 2), np.float32))


# ---- y4m -----------------------------------------------------------------------

def hand_assembled_y4m():
    """Fixture assembled byte-by-byte, independent of the writer."""
    header = b"YUV4MPEG2 W4 H4 F25:1 Ip A1:1 C420\n"
    f0 = bytes(range(16)) + bytes([100, 101, 102, 103]) + bytes([200, 201, 202, 203])
    f1 = bytes(range(50, 66)) + bytes([1, 2, 3, 4]) + bytes([5, 6, 7, 8])
    return header + b"FRAME\n" + f0 + b"FRAME\n" + f1


def test_read_y4m_hand_assembled():
    frames, meta = read_y4m(hand_assembled_y4m())
    assert len(frames) == 2
    assert (meta.width, meta.height, meta.fps_num, meta.fps_den) == (4, 4, 25, 1)
    assert np.array_equal(plane_to_uint8(frames[0].y),
                          np.arange(16, dtype=np.uint8).reshape(4, 4))
    assert np.array_equal(plane_to_uint8(frames[0].u),
                          np.array([[100, 101], [102, 103]], np.uint8))
    assert np.array_equal(plane_to_uint8(frames[1].v),
                          np.array([[5, 6], [7, 8]], np.uint8))


def test_y4m_roundtrip_byte_identical():
    stream = hand_assembled_y4m()
    frames, meta = read_y4m(stream)
    assert write_y4m(frames, meta) == stream


def test_y4m_rejects_non_420():
    with pytest.raises(UnsupportedFormatError):
        read_y4m(b"YUV4MPEG2 W4 H4 F25:1 C444\n")


def test_y4m_malformed_header_names_token():
    with pytest.raises(Y4MError, match="Wx"):
        read_y4m(b"YUV4MPEG2 Wx H4 F25:1\n")


def test_y4m_black_frame_payload():
    f = Frame420(np.zeros((4, 4), np.float32), np.full((2, 2), 0.5, np.float32),
                 np.full((2, 2), 0.5, np.float32))
    data = write_y4m([f], Y4MMetadata(width=4, height=4))
    body = data.split(b"FRAME\n", 1)[1]
    assert body[:16] == bytes(16)


def test_y4m_empty_frame_list_is_header_only():
    data = write_y4m([], Y4MMetadata(width=4, height=4))
    assert data.endswith(b"\n") and b"FRAME" not in data
    frames, meta = read_y4m(data)
    assert frames == [] and meta.width == 4


def test_y4m_dimension_mismatch():
    f = rand_frame(np.random.default_rng(0), 4, 4)
    with pytest.raises(ValueError, match="metadata"):
        write_y4m([f], Y4MMetadata(width=8, height=8))


@settings(max_examples=25, deadline=None)
@given(w=st.sampled_from([2, 4, 6, 8]), h=st.sampled_from([2, 4, 6]),
       n=st.integers(0, 3), seed=st.integers(0, 2 ** 31))
def test_y4m_roundtrip_property(w, h, n, seed):
    rng = np.random.default_rng(seed)
    frames = [rand_frame(rng, w, h) for _ in range(n)]
    meta = Y4MMetadata(width=w, height=h)
    data = write_y4m(frames, meta)
    again, meta2 = read_y4m(data)
    assert write_y4m(again, meta2) == data
    for a, b in zip(frames, again):
        assert np.array_equal(plane_to_uint8(a.y), plane_to_uint8(b.y))


def test_raw_yuv_roundtrip():
    rng = np.random.default_rng(1)
    frames = [rand_frame(rng, 8, 6) for _ in range(3)]
    data = write_yuv_raw(frames)
    again = read_yuv_raw(data, 8, 6)
    assert len(again) == 3
    for a, b in zip(frames, again):
        assert np.array_equal(plane_to_uint8(a.u), plane_to_uint8(b.u))
    with pytest.raises(ValueError):
        read_yuv_raw(data, 8, 6, num_frames=4)


# ---- colorspace -----------------------------------------------------------------

def test_gray_maps_to_neutral_chroma():
    for c in (0.0, 0.25, 0.5, 1.0):
        rgb = np.full((4, 4, 3), c, np.float64)
        f = rgb_to_yuv420(rgb)
        assert np.allclose(f.y, c, atol=1e-7)
        assert np.allclose(f.u, 0.5, atol=1 / 255)
        assert np.allclose(f.v, 0.5, atol=1 / 255)


def test_constant_color_roundtrip():
    rng = np.random.default_rng(2)
    for _ in range(10):
        color = rng.random(3)
        rgb = np.broadcast_to(color, (6, 8, 3)).copy()
        back = yuv420_to_rgb(rgb_to_yuv420(rgb))
        assert np.max(np.abs(back - rgb)) <= 2 / 255


def test_chroma_box_average():
    rgb = np.zeros((2, 2, 3), np.float64)
    rgb[0, 0] = [1, 0, 0]
    rgb[0, 1] = [0, 1, 0]
    rgb[1, 0] = [0, 0, 1]
    rgb[1, 1] = [1, 1, 1]
    f = rgb_to_yuv420(rgb)
    # chroma downsampling must equal the 4-sample mean of per-pixel chroma
    us, vs = [], []
    for px in (rgb[0, 0], rgb[0, 1], rgb[1, 0], rgb[1, 1]):
        y = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]
        us.append((px[2] - y) / 1.772 + 0.5)
        vs.append((px[0] - y) / 1.402 + 0.5)
    assert math.isclose(float(f.u[0, 0]), float(np.mean(us)), abs_tol=1e-9)
    assert math.isclose(float(f.v[0, 0]), float(np.mean(vs)), abs_tol=1e-9)


def test_odd_dimensions_rejected():
    with pytest.raises(ValueError):
        rgb_to_yuv420(np.zeros((3, 4, 3)))
    with pytest.raises(ValueError):
        box_down2(np.zeros((3, 4)))


# ---- resampling ----------------------------------------------------------------

def bilinear_up2_oracle(x):
    """Direct per-output-pixel evaluation of half-pixel bilinear upsampling."""
    h, w = x.shape
    out = np.zeros((2 * h, 2 * w))
    for j in range(2 * h):
        for i in range(2 * w):
            sy = (j + 0.5) / 2 - 0.5
            sx = (i + 0.5) / 2 - 0.5
            y0, x0 = int(np.floor(sy)), int(np.floor(sx))
            fy, fx = sy - y0, sx - x0
            y0c, y1c = np.clip([y0, y0 + 1], 0, h - 1)
            x0c, x1c = np.clip([x0, x0 + 1], 0, w - 1)
            out[j, i] = ((1 - fy) * ((1 - fx) * x[y0c, x0c] + fx * x[y0c, x1c])
                         + fy * ((1 - fx) * x[y1c, x0c] + fx * x[y1c, x1c]))
    return out


def test_to_444_constant_and_identity():
    f = Frame420(np.random.default_rng(0).random((4, 4)).astype(np.float32),
                 np.full((2, 2), 0.3, np.float32), np.full((2, 2), 0.7, np.float32))
    f444 = to_444(f)
    assert np.allclose(f444.u, 0.3) and np.allclose(f444.v, 0.7)
    assert np.array_equal(f444.y, f.y)


def test_bilinear_up2_matches_oracle():
    rng = np.random.default_rng(3)
    for shape in ((2, 2), (3, 5), (4, 4)):
        x = rng.random(shape)
        assert np.allclose(bilinear_up2(x), bilinear_up2_oracle(x), atol=1e-12)


def test_bilinear_up2_linear_ramp():
    ramp = np.tile(np.arange(4, dtype=np.float64), (2, 1))
    up = bilinear_up2(ramp)
    assert np.allclose(up, bilinear_up2_oracle(ramp))
    # interior of the upsampled ramp keeps the halved slope
    assert np.allclose(np.diff(up[0, 1:-1]), 0.5)


# ---- space_to_depth -------------------------------------------------------------

def test_space_to_depth_2x2_definition():
    p = np.array([[1.0, 2.0], [3.0, 4.0]])
    ch = space_to_depth(p)
    assert ch.shape == (4, 1, 1)
    assert [float(c) for c in ch[:, 0, 0]] == [1.0, 2.0, 3.0, 4.0]


def test_space_to_depth_roundtrip_and_oracle():
    rng = np.random.default_rng(4)
    x = rng.random((8, 8))
    ch = space_to_depth(x)
    assert np.array_equal(depth_to_space(ch), x)
    oracle = np.zeros_like(ch)
    for dy in range(2):
        for dx in range(2):
            for r in range(4):
                for c in range(4):
                    oracle[dy * 2 + dx, r, c] = x[2 * r + dy, 2 * c + dx]
    assert np.array_equal(ch, oracle)


def test_space_to_depth_odd_rejected():
    with pytest.raises(ValueError):
        space_to_depth(np.zeros((3, 4)))


@settings(max_examples=20, deadline=None)
@given(h=st.sampled_from([2, 4, 6, 8]), w=st.sampled_from([2, 4, 6, 8]),
       seed=st.integers(0, 2 ** 31))
def test_space_to_depth_identity_property(h, w, seed):
    x = np.random.default_rng(seed).random((h, w))
    assert np.array_equal(depth_to_space(space_to_depth(x)), x)


# ---- psnr -----------------------------------------------------------------------

def test_psnr_identical_capped_and_flagged():
    f = rand_frame(np.random.default_rng(5), 8, 8)
    res = psnr_yuv(f, f)
    assert res.psnr_y == res.psnr_u == res.psnr_v == res.psnr_yuv == 100.0
    assert res.lossless == {"y": True, "u": True, "v": True}


def test_psnr_weighting_formula():
    # construct planes with exactly the wanted per-plane PSNRs
    assert (6 * 40 + 42 + 44) / 8 == 40.75
    f = rand_frame(np.random.default_rng(6), 8, 8)
    g = Frame420(f.y + 1e-3, f.u.copy(), f.v.copy())
    res = psnr_yuv(f, g)
    expect = (6 * res.psnr_y + res.psnr_u + res.psnr_v) / 8
    assert math.isclose(res.psnr_yuv, expect, rel_tol=1e-12)


def test_psnr_uniform_offset_closed_form():
    base = np.full((8, 8), 0.4, np.float64)
    ref = Frame420(base, np.full((4, 4), 0.5), np.full((4, 4), 0.5))
    test = Frame420(base + 1 / 255, ref.u.copy(), ref.v.copy())
    res = psnr_yuv(ref, test)
    assert math.isclose(res.psnr_y, 20 * math.log10(255), rel_tol=1e-9)
    assert res.lossless["u"] and res.lossless["v"]


def test_psnr_uv_swap_invariance():
    rng = np.random.default_rng(7)
    a, b = rand_frame(rng, 8, 8), rand_frame(rng, 8, 8)
    r1 = psnr_yuv(a, b)
    a2 = Frame420(a.y, a.v, a.u)
    b2 = Frame420(b.y, b.v, b.u)
    r2 = psnr_yuv(a2, b2)
    assert math.isclose(r1.psnr_yuv, r2.psnr_yuv, rel_tol=1e-12)


def test_psnr_shape_mismatch():
    with pytest.raises(ValueError):
        psnr_plane(np.zeros((4, 4)), np.zeros((4, 8)))
