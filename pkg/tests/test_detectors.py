"""Issue detectors and the dataset audit pass."""

import math

import numpy as np
import pytest

from imgaudit import detectors, imaging, perturb, synth
from imgaudit.config import AuditConfig
from imgaudit.errors import EmptyDataset, MissingPercentile
from imgaudit.imaging import BrightnessStats, ImageRecord


def luma_of(value, shape=(8, 8)):
    return np.full(shape, float(value))


def record(image_id, pixels):
    return ImageRecord(id=image_id, pixels=np.asarray(pixels, dtype=np.uint8))


class TestDarkLight:
    def test_black_and_white_extremes(self):
        black = imaging.brightness_stats(luma_of(0), detectors.AUDIT_RANKS)
        white = imaging.brightness_stats(luma_of(255), detectors.AUDIT_RANKS)
        assert detectors.score_dark(black) == 0.0
        assert detectors.score_dark(white) == 1.0
        assert detectors.score_light(white) == 0.0
        assert detectors.score_light(black) == 1.0

    def test_dark_sparse_highlights(self):
        # 95% zeros, 5% full white: the 99th percentile sits in the white tail
        values = np.zeros(2000)
        values[:100] = 255.0
        stats = imaging.brightness_stats(values.reshape(40, 50), [99])
        expected = np.percentile(np.sort(values) / 255.0, 99)
        assert detectors.score_dark(stats) == pytest.approx(expected)
        assert detectors.score_dark(stats) == pytest.approx(1.0, abs=1e-9)

    def test_light_rank_75_vs_5_on_composite(self):
        # 70% white / 30% black: rank 75 flags it, rank 5 misses it
        values = np.full(1000, 255.0)
        values[:300] = 0.0
        stats = imaging.brightness_stats(values.reshape(25, 40), [5, 75])
        assert detectors.score_light(stats, 75) == 0.0
        assert detectors.score_light(stats, 5) == 1.0

    def test_missing_percentile(self):
        with pytest.raises(MissingPercentile):
            detectors.score_dark(BrightnessStats(percentiles={5: 0.1}, mean=0.1))

    def test_monotone_under_gain(self):
        rng = np.random.default_rng(1)
        plane = rng.uniform(10, 100, size=(12, 12))  # no clamping at 2x
        lo = imaging.brightness_stats(plane, detectors.AUDIT_RANKS)
        hi = imaging.brightness_stats(plane * 2.0, detectors.AUDIT_RANKS)
        assert detectors.score_dark(hi) >= detectors.score_dark(lo)
        assert detectors.score_light(hi) <= detectors.score_light(lo)


class TestBlurry:
    def test_constant_scores_zero(self):
        assert detectors.score_blurry(luma_of(128)) == 0.0

    def test_checkerboard_near_one(self):
        yy, xx = np.mgrid[0:16, 0:16]
        board = ((yy + xx) % 2) * 255.0
        # histogram std of two equal spikes 255 apart is 127.5
        assert detectors.histogram_std(board) == pytest.approx(127.5)
        score = detectors.score_blurry(board)
        assert score >= 1.0 - math.exp(-127.5 / 100.0) - 1e-12
        assert score >= 0.72

    def test_blurred_scores_below_sharp(self):
        for rec in synth.generate_images(8, seed=2):
            sharp = detectors.score_blurry(imaging.to_luma(rec))
            soft = detectors.score_blurry(
                imaging.to_luma(perturb.blur(rec, perturb.GAUSSIAN, 7))
            )
            assert soft < sharp

    def test_tiny_image_uses_histogram_std_only(self):
        plane = np.array([[0.0, 255.0]])
        assert detectors.score_blurry(plane) == pytest.approx(
            1.0 - math.exp(-127.5 / 100.0)
        )


class TestLowInformation:
    def test_constant_zero(self):
        assert detectors.score_low_information(luma_of(42)) == 0.0

    def test_uniform_levels_max_entropy(self):
        plane = np.arange(256, dtype=float).reshape(16, 16)
        assert detectors.score_low_information(plane) == 1.0

    def test_scores_in_unit_interval(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            plane = rng.uniform(0, 255, size=(9, 9))
            assert 0.0 <= detectors.score_low_information(plane) <= 1.0


class TestOddSize:
    def test_all_equal_sizes_score_one(self):
        scores, stats = detectors.score_odd_size([(f"i{k}", 32, 32) for k in range(10)])
        assert all(v == 1.0 for v in scores.values())
        assert stats.midpoint == 32.0

    def test_two_size_degenerate_gives_two_scores(self):
        triples = [(f"a{k}", 32, 32) for k in range(88)] + [
            (f"b{k}", 7, 7) for k in range(12)
        ]
        scores, _ = detectors.score_odd_size(triples)
        assert set(scores.values()) == {0.0, 1.0}
        assert all(scores[f"b{k}"] == 0.0 for k in range(12))

    def test_iqr_oracle(self):
        sides = [30, 31, 32, 33, 34, 100]
        triples = [(f"i{k}", s, s) for k, s in enumerate(sides)]
        scores, stats = detectors.score_odd_size(triples, iqr_factor=3.0)
        # direct IQR arithmetic: Q1=31.25, Q3=33.75, fences at 23.75/41.25
        assert stats.q1 == pytest.approx(31.25)
        assert stats.q3 == pytest.approx(33.75)
        assert stats.min_threshold == pytest.approx(23.75)
        assert stats.max_threshold == pytest.approx(41.25)
        assert scores["i5"] == 0.0  # 100 beyond the fence
        for k in range(5):
            assert scores[f"i{k}"] > 0.5

    def test_invariants_of_stats(self):
        rng = np.random.default_rng(4)
        sizes = rng.uniform(4, 64, size=30)
        stats = detectors.SizeStats.from_sizes(sizes)
        assert stats.q1 <= stats.q3
        iqr = stats.q3 - stats.q1
        assert stats.min_threshold == pytest.approx(stats.q1 - 3.0 * iqr)
        assert stats.max_threshold == pytest.approx(stats.q3 + 3.0 * iqr)
        assert stats.midpoint == pytest.approx(
            (stats.min_threshold + stats.max_threshold) / 2
        )

    def test_empty_dataset(self):
        with pytest.raises(EmptyDataset):
            detectors.score_odd_size([])


class TestAspectAndGrayscale:
    def test_square(self):
        assert detectors.score_odd_aspect_ratio(32, 32) == 1.0

    def test_wide_and_tall_symmetric(self):
        assert detectors.score_odd_aspect_ratio(64, 16) == 0.25
        assert detectors.score_odd_aspect_ratio(16, 64) == 0.25

    def test_symmetry_property(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            w, h = rng.integers(1, 500, size=2)
            assert detectors.score_odd_aspect_ratio(
                int(w), int(h)
            ) == detectors.score_odd_aspect_ratio(int(h), int(w))

    def test_luma_mode_scores_zero(self):
        assert detectors.score_grayscale(record("l", np.zeros((4, 4)))) == 0.0

    def test_identical_channels_rgb_scores_zero(self):
        rng = np.random.default_rng(6)
        gray = rng.integers(0, 256, size=(8, 8), dtype=np.uint8)
        rec = record("g", np.repeat(gray[:, :, None], 3, axis=2))
        assert detectors.score_grayscale(rec) == 0.0

    def test_single_differing_sample_scores_one(self):
        px = np.full((4, 4, 3), 10, dtype=np.uint8)
        px[2, 3, 2] = 11
        assert detectors.score_grayscale(record("c", px)) == 1.0

    def test_grayscale_iff_luma_preserves_triples(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            px = rng.integers(0, 256, size=(6, 6, 3), dtype=np.uint8)
            rec = record("x", px)
            equal = bool(
                np.array_equal(px[:, :, 0], px[:, :, 1])
                and np.array_equal(px[:, :, 1], px[:, :, 2])
            )
            assert (detectors.score_grayscale(rec) == 0.0) == equal


class TestBrightnessMean:
    def test_white(self):
        assert detectors.brightness_mean(record("w", np.full((3, 3, 3), 255))) == 1.0

    def test_pure_red_third(self):
        px = np.zeros((4, 4, 3), np.uint8)
        px[:, :, 0] = 255
        assert detectors.brightness_mean(record("r", px)) == pytest.approx(1 / 3)

    def test_two_pixel_average(self):
        px = np.array([[[0, 0, 0], [255, 255, 255]]], np.uint8)
        assert detectors.brightness_mean(record("p", px)) == pytest.approx(0.5)


class TestAuditDataset:
    def test_empty_selection(self):
        records = synth.generate_images(3, seed=8)
        config = AuditConfig(issues=())
        table = detectors.audit_dataset(records, config)
        assert all(row == {} for row in table.rows.values())

    def test_single_black_image_dark(self):
        rec = record("black", np.zeros((8, 8, 3), np.uint8))
        table = detectors.audit_dataset([rec], AuditConfig(issues=("DARK",)))
        assert table.rows["black"]["DARK"] == 0.0

    def test_scores_all_in_unit_interval(self):
        records = synth.generate_images(12, seed=9)
        table = detectors.audit_dataset(records, AuditConfig())
        for row in table.rows.values():
            for kind, value in row.items():
                assert 0.0 <= value <= 1.0, kind

    def test_independent_of_order_and_workers(self):
        records = synth.generate_images(16, seed=10)
        base = detectors.audit_dataset(records, AuditConfig())
        shuffled = detectors.audit_dataset(records[::-1], AuditConfig())
        threaded = detectors.audit_dataset(records, AuditConfig(workers=4))
        assert base.rows == shuffled.rows == threaded.rows
        assert base.flags == shuffled.flags == threaded.flags

    def test_duplicate_kinds_flagged_without_threshold(self):
        records = synth.generate_images(6, seed=11)
        twin = ImageRecord(id="twin", pixels=records[0].pixels.copy())
        table = detectors.audit_dataset(records + [twin], AuditConfig())
        assert "EXACT_DUPLICATE" in table.flags[records[0].id]
        assert "EXACT_DUPLICATE" in table.flags["twin"]
        assert "NEAR_DUPLICATE" in table.flags["twin"]
        assert not table.flags[records[3].id] & {"EXACT_DUPLICATE"}

    def test_dark_contamination_separates(self):
        records = synth.generate_images(100, seed=12)
        spec = perturb.PerturbationSpec(
            "BRIGHTNESS", 0.12, seed=13, params={"scalar": 0.05}
        )
        labeled = perturb.apply_contamination(records, [spec])
        table = detectors.audit_dataset(labeled.images, AuditConfig(issues=("DARK",)))
        positives = labeled.positive_ids()
        dark_scores = {i: row["DARK"] for i, row in table.rows.items()}
        worst_clean = min(v for i, v in dark_scores.items() if i not in positives)
        best_bad = max(v for i, v in dark_scores.items() if i in positives)
        assert best_bad < worst_clean

    def test_mean_luma_precondition_for_separation(self):
        # the separation property presumes reasonably exposed sources
        records = synth.generate_images(30, seed=14)
        for rec in records:
            assert imaging.to_luma(rec).mean() >= 64
