"""Core imaging primitives: decode, luma, stats, Laplacian, resize, histogram."""

import io
import math

import numpy as np
import pytest
from PIL import Image

from imgaudit import imaging
from imgaudit.errors import DecodeError, EmptyPlane, TooSmall
from imgaudit.imaging import ImageRecord


def encode(pixels, fmt="PNG", mode=None):
    arr = np.asarray(pixels, dtype=np.uint8)
    mode = mode or ("RGB" if arr.ndim == 3 else "L")
    buf = io.BytesIO()
    Image.fromarray(arr, mode=mode).save(buf, format=fmt)
    return buf.getvalue()


def rgb(*shape_and_value):
    h, w, value = shape_and_value
    return np.full((h, w, 3), value, dtype=np.uint8)


class TestDecode:
    def test_identity_decode_rgb(self):
        pixels = np.zeros((2, 2, 3), np.uint8)
        pixels[:, :, 0] = 255
        rec = imaging.decode_image(encode(pixels), "red")
        assert rec.width == 2 and rec.height == 2
        assert rec.mode == imaging.RGB
        assert np.array_equal(rec.pixels, pixels)

    def test_single_channel_luma(self):
        rec = imaging.decode_image(encode(np.array([[128]], np.uint8)), "gray")
        assert rec.mode == imaging.LUMA
        assert rec.pixels[0, 0] == 128

    def test_zero_bytes_raises(self):
        with pytest.raises(DecodeError):
            imaging.decode_image(b"", "empty")

    def test_truncated_raises(self):
        data = encode(rgb(8, 8, 50))
        with pytest.raises(DecodeError):
            imaging.decode_image(data[: len(data) // 2], "trunc")

    def test_alpha_dropped_not_composited(self):
        arr = np.zeros((2, 2, 4), np.uint8)
        arr[:, :, 1] = 200
        arr[:, :, 3] = 0  # fully transparent; RGB must survive untouched
        rec = imaging.decode_image(encode(arr, mode="RGBA"), "a")
        assert rec.mode == imaging.RGB
        assert rec.pixels[0, 0, 1] == 200

    def test_bmp_and_jpeg_supported(self):
        pixels = rgb(4, 4, 77)
        for fmt in ("BMP", "JPEG"):
            rec = imaging.decode_image(encode(pixels, fmt=fmt), fmt)
            assert rec.mode == imaging.RGB
            assert rec.width == 4


class TestToLuma:
    def test_white_hsp_weights_sum_to_one(self):
        rec = ImageRecord(id="w", pixels=rgb(1, 1, 255))
        assert imaging.to_luma(rec, imaging.HSP)[0, 0] == pytest.approx(255.0)

    def test_black_all_variants(self):
        rec = ImageRecord(id="b", pixels=rgb(1, 1, 0))
        for formula in imaging.LUMA_FORMULAS:
            assert imaging.to_luma(rec, formula)[0, 0] == 0.0

    def test_pure_red_hsp(self):
        pixels = np.zeros((1, 1, 3), np.uint8)
        pixels[0, 0, 0] = 255
        rec = ImageRecord(id="r", pixels=pixels)
        expected = 255.0 * math.sqrt(0.241)
        assert imaging.to_luma(rec, imaging.HSP)[0, 0] == pytest.approx(expected)
        assert expected == pytest.approx(125.19, abs=0.01)

    def test_channel_mean(self):
        pixels = np.array([[[30, 60, 90]]], np.uint8)
        rec = ImageRecord(id="m", pixels=pixels)
        assert imaging.to_luma(rec, imaging.CHANNEL_MEAN)[0, 0] == pytest.approx(60.0)

    def test_luma_passthrough(self):
        rec = ImageRecord(id="l", pixels=np.array([[7, 9]], np.uint8))
        out = imaging.to_luma(rec)
        assert out.dtype == np.float64
        assert np.array_equal(out, [[7.0, 9.0]])

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(3)
        pixels = rng.integers(0, 256, size=(6, 6, 3), dtype=np.uint8)
        rec = ImageRecord(id="p", pixels=pixels)
        luma = imaging.to_luma(rec)
        perm = rng.permutation(36)
        shuffled = pixels.reshape(36, 3)[perm].reshape(6, 6, 3)
        luma_shuffled = imaging.to_luma(ImageRecord(id="q", pixels=shuffled))
        assert np.allclose(luma.ravel()[perm], luma_shuffled.ravel())


class TestBrightnessStats:
    def test_constant_white(self):
        stats = imaging.brightness_stats(np.full((4, 4), 255.0), [5, 99])
        assert stats.percentiles == {5: 1.0, 99: 1.0}
        assert stats.mean == 1.0

    def test_constant_black(self):
        stats = imaging.brightness_stats(np.zeros((4, 4)), [1, 50, 99])
        assert all(v == 0.0 for v in stats.percentiles.values())

    def test_linear_interpolation_oracle(self):
        # 101 values 0, 2.5, ..., 250: the 50th percentile interpolates to 125.
        plane = (np.arange(101) * 2.5).reshape(1, -1)
        stats = imaging.brightness_stats(plane, [50])
        assert stats.percentiles[50] == pytest.approx(125.0 / 255.0, abs=1e-12)
        assert stats.percentiles[50] == pytest.approx(0.4902, abs=1e-4)

    def test_monotone_in_rank(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            plane = rng.uniform(0, 255, size=(9, 7))
            ranks = sorted(rng.choice(np.arange(1, 100), size=6, replace=False))
            stats = imaging.brightness_stats(plane, ranks)
            values = [stats.percentiles[r] for r in ranks]
            assert all(a <= b + 1e-15 for a, b in zip(values, values[1:]))
            assert all(0.0 <= v <= 1.0 for v in values)

    def test_empty_plane(self):
        with pytest.raises(EmptyPlane):
            imaging.brightness_stats(np.zeros((0,)), [5])

    def test_bad_rank(self):
        with pytest.raises(ValueError):
            imaging.brightness_stats(np.zeros((2, 2)), [0])


class TestLaplacianVariance:
    def test_constant_zero(self):
        assert imaging.laplacian_variance(np.full((5, 5), 9.0)) == 0.0

    def test_center_impulse_hand_oracle(self):
        # Mirror borders: corner responses 0, edge-centers 510, center -1020.
        plane = np.zeros((3, 3))
        plane[1, 1] = 255.0
        responses = np.array([0, 510, 0, 510, -1020, 510, 0, 510, 0], dtype=float)
        assert imaging.laplacian_variance(plane) == pytest.approx(responses.var())

    def test_step_edge_positive(self):
        plane = np.zeros((8, 8))
        plane[:, 4:] = 255.0
        assert imaging.laplacian_variance(plane) > 0.0

    def test_constant_shift_invariance(self):
        rng = np.random.default_rng(4)
        plane = rng.uniform(20, 200, size=(10, 10))
        base = imaging.laplacian_variance(plane)
        assert imaging.laplacian_variance(plane + 30.0) == pytest.approx(base)

    def test_too_small(self):
        with pytest.raises(TooSmall):
            imaging.laplacian_variance(np.zeros((2, 5)))


class TestResize:
    def test_identity_same_size(self):
        rng = np.random.default_rng(0)
        pixels = rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
        rec = ImageRecord(id="i", pixels=pixels)
        for method in (imaging.NEAREST, imaging.BILINEAR):
            out = imaging.resize(rec, 32, 32, method)
            assert np.array_equal(out.pixels, pixels)

    def test_checkerboard_average(self):
        pixels = np.array([[0, 255], [255, 0]], np.uint8)
        rec = ImageRecord(id="c", pixels=pixels)
        out = imaging.resize(rec, 1, 1, imaging.BILINEAR)
        assert out.pixels[0, 0] == 128

    def test_nearest_constant(self):
        rec = ImageRecord(id="n", pixels=np.full((4, 4, 3), 77, np.uint8))
        out = imaging.resize(rec, 2, 2, imaging.NEAREST)
        assert np.all(out.pixels == 77)

    def test_idempotent_at_same_dims(self):
        rng = np.random.default_rng(5)
        rec = ImageRecord(
            id="r", pixels=rng.integers(0, 256, size=(7, 9), dtype=np.uint8)
        )
        once = imaging.resize(rec, 9, 7, imaging.BILINEAR)
        assert np.array_equal(once.pixels, rec.pixels)

    def test_downscale_preserves_mean(self):
        rng = np.random.default_rng(6)
        pixels = rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
        rec = ImageRecord(id="m", pixels=pixels)
        out = imaging.resize(rec, 4, 4, imaging.BILINEAR)
        for c in range(3):
            assert abs(out.pixels[:, :, c].mean() - pixels[:, :, c].mean()) <= 2.0

    def test_bad_dims(self):
        rec = ImageRecord(id="b", pixels=np.zeros((2, 2), np.uint8))
        with pytest.raises(ValueError):
            imaging.resize(rec, 0, 2)


class TestLumaHistogram:
    def test_constant_plane(self):
        counts = imaging.luma_histogram(np.full((3, 4), 10.0))
        assert counts[10] == 12
        assert counts.sum() == 12

    def test_extremes(self):
        counts = imaging.luma_histogram(np.array([[0.0, 255.0]]))
        assert counts[0] == 1 and counts[255] == 1

    def test_floor_rule(self):
        counts = imaging.luma_histogram(np.array([[254.6]]))
        assert counts[254] == 1

    def test_counts_sum_to_pixels(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            plane = rng.uniform(0, 255, size=rng.integers(1, 20, size=2))
            assert imaging.luma_histogram(plane).sum() == plane.size
