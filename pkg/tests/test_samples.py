"""Pre-edit sampling, dual masks, training-sample assembly, archives."""

import json
import math
import zipfile

import io
import numpy as np
import pytest

from blobforge.augment import AugmentConfig
from blobforge.blob import (
    BlobEllipse,
    BlobGaussian,
    DegenerateCovarianceError,
    DomainError,
    ellipse_to_gaussian,
    gaussian_to_ellipse,
    validate_gaussian,
)
from blobforge.curation import CurationRules
from blobforge.fields import FieldMap, blob_mask, make_grid
from blobforge.samples import (
    PerturbConfig,
    TrainingSample,
    archive_sample,
    build_training_sample,
    dual_mask,
    sample_pre_edit_blob,
    write_sample_dir,
)

TARGET = ellipse_to_gaussian(BlobEllipse(0.5, 0.5, 0.2, 0.1, 0.4), 0.95)

ZERO_CFG = PerturbConfig(max_center_shift=0.0, scale_range=(1.0, 1.0), max_rotation=0.0, seed=42)


def synthetic_pair(size=500, ellipse=None):
    """White filled ellipse on black, plus its exact mask."""
    ellipse = ellipse or BlobEllipse(0.5, 0.5, 0.25, 0.15, 0.5)
    mask = blob_mask(ellipse_to_gaussian(ellipse, 0.95), make_grid(size, size), 0.95).values.astype(bool)
    image = np.zeros((size, size, 3), dtype=np.uint8)
    image[mask] = 255
    return image, mask


class TestSamplePreEdit:
    def test_zero_config_is_identity(self):
        assert sample_pre_edit_blob(TARGET, ZERO_CFG) == TARGET

    def test_fixed_seed_reproducible(self):
        cfg = PerturbConfig(seed=42)
        g1 = sample_pre_edit_blob(TARGET, cfg)
        g2 = sample_pre_edit_blob(TARGET, cfg)
        assert g1 == g2

    def test_output_passes_validation(self):
        for seed in range(50):
            g = sample_pre_edit_blob(TARGET, PerturbConfig(seed=seed))
            assert validate_gaussian(g).accepted

    def test_perturbation_within_bounds(self):
        cfg = PerturbConfig(max_center_shift=0.1, scale_range=(0.7, 1.3), max_rotation=0.5, seed=7)
        e0 = gaussian_to_ellipse(TARGET, 0.95)
        for seed in range(200):
            g = sample_pre_edit_blob(TARGET, PerturbConfig(0.1, (0.7, 1.3), 0.5, seed))
            e = gaussian_to_ellipse(g, 0.95)
            shift = math.hypot(e.cx - e0.cx, e.cy - e0.cy)
            assert shift <= 0.1 + 1e-12
            assert 0.7 * e0.a - 1e-12 <= e.a <= 1.3 * e0.a + 1e-12
        del cfg

    def test_disc_radius_statistics(self):
        # uniform-in-disc radius has mean 2R/3
        shifts = []
        e0 = gaussian_to_ellipse(TARGET, 0.95)
        for seed in range(10_000):
            g = sample_pre_edit_blob(TARGET, PerturbConfig(0.1, (1.0, 1.0), 0.0, seed))
            e = gaussian_to_ellipse(g, 0.95)
            shifts.append(math.hypot(e.cx - e0.cx, e.cy - e0.cy))
        shifts = np.asarray(shifts)
        assert shifts.max() <= 0.1
        assert shifts.mean() == pytest.approx(2 / 3 * 0.1, abs=1e-3)

    def test_degenerate_after_retries(self):
        # a blob already at the conditioning floor shrinks below it under
        # any downscale draw
        tiny = ellipse_to_gaussian(BlobEllipse(0.5, 0.5, 0.009, 0.008, 0.0), 0.95)
        cfg = PerturbConfig(max_center_shift=0.0, scale_range=(0.1, 0.2), max_rotation=0.0, seed=3)
        with pytest.raises(DegenerateCovarianceError):
            sample_pre_edit_blob(tiny, cfg)

    @pytest.mark.parametrize("kwargs", [
        dict(scale_range=(0.0, 1.0)),
        dict(scale_range=(1.3, 0.7)),
        dict(max_center_shift=-0.1),
        dict(max_rotation=-1.0),
    ])
    def test_bad_config(self, kwargs):
        with pytest.raises(DomainError):
            PerturbConfig(**kwargs)


class TestDualMask:
    def test_source_equals_target(self):
        grid = make_grid(64, 64)
        dm = dual_mask(TARGET, TARGET, grid, 0.95)
        np.testing.assert_array_equal(dm.values, blob_mask(TARGET, grid, 0.95).values)

    def test_disjoint_areas_add(self):
        grid = make_grid(128, 128)
        g1 = ellipse_to_gaussian(BlobEllipse(0.2, 0.2, 0.05, 0.05, 0.0), 0.95)
        g2 = ellipse_to_gaussian(BlobEllipse(0.8, 0.8, 0.05, 0.05, 0.0), 0.95)
        dm = dual_mask(g1, g2, grid, 0.95)
        s = blob_mask(g1, grid, 0.95).values.sum() + blob_mask(g2, grid, 0.95).values.sum()
        assert dm.values.sum() == s

    def test_overlap_bounds(self):
        grid = make_grid(128, 128)
        g1 = ellipse_to_gaussian(BlobEllipse(0.45, 0.5, 0.1, 0.08, 0.0), 0.95)
        g2 = ellipse_to_gaussian(BlobEllipse(0.55, 0.5, 0.1, 0.08, 0.0), 0.95)
        a1 = blob_mask(g1, grid, 0.95).values.sum()
        a2 = blob_mask(g2, grid, 0.95).values.sum()
        u = dual_mask(g1, g2, grid, 0.95).values.sum()
        assert max(a1, a2) <= u < a1 + a2


class TestBuildTrainingSample:
    def test_zero_perturbation(self):
        image, mask = synthetic_pair()
        s = build_training_sample(image, mask, ZERO_CFG, AugmentConfig.identity())
        assert isinstance(s, TrainingSample)
        assert s.source_blob == s.target_blob
        grid = make_grid(500, 500)
        np.testing.assert_array_equal(s.dual_mask.values, blob_mask(s.target_blob, grid, 0.95).values)

    def test_target_matches_drawn_ellipse(self):
        drawn = BlobEllipse(0.5, 0.5, 0.25, 0.15, 0.5)
        image, mask = synthetic_pair(ellipse=drawn)
        s = build_training_sample(image, mask, ZERO_CFG, AugmentConfig.identity())
        fitted = gaussian_to_ellipse(s.target_blob, 0.95)
        assert fitted.a == pytest.approx(drawn.a, rel=0.02)
        assert fitted.b == pytest.approx(drawn.b, rel=0.02)
        assert fitted.cx == pytest.approx(drawn.cx, abs=0.01)

    def test_background_zero_exactly_on_dual_support(self):
        image, mask = synthetic_pair()
        s = build_training_sample(image, mask, PerturbConfig(seed=5), AugmentConfig.identity())
        on = s.dual_mask.values == 1.0
        assert np.all(s.background_raster[on] == 0)
        np.testing.assert_array_equal(s.background_raster[~on], image[~on])

    def test_fg_mask_contained_in_dual(self):
        image, mask = synthetic_pair()
        for seed in range(10):
            s = build_training_sample(image, mask, PerturbConfig(seed=seed), AugmentConfig.identity())
            assert np.all(s.dual_mask.values >= s.fg_mask.values)

    def test_rejection_reasons_flow_through(self):
        image, mask = synthetic_pair(size=400)
        v = build_training_sample(image, mask, rules=CurationRules())
        assert not v and v.reason == "short_side"

    def test_fit_failure_reason(self):
        image = np.zeros((500, 500, 3), dtype=np.uint8)
        mask = np.zeros((500, 500), dtype=bool)
        mask[250, 100:400] = True  # collinear
        v = build_training_sample(image, mask)
        assert not v and v.reason == "fit"

    def test_determinism_byte_for_byte(self):
        image, mask = synthetic_pair()
        cfg = PerturbConfig(seed=11)
        aug = AugmentConfig()
        s1 = build_training_sample(image, mask, cfg, aug, caption="same")
        s2 = build_training_sample(image, mask, cfg, aug, caption="same")
        assert archive_sample(s1) == archive_sample(s2)

    def test_foreground_is_masked_crop(self):
        # identity augmentation: crop bbox bounds the mask; outside-mask
        # pixels within the bbox are zeroed
        image, mask = synthetic_pair()
        s = build_training_sample(image, mask, ZERO_CFG, AugmentConfig.identity())
        ys, xs = np.nonzero(mask)
        assert s.foreground_raster.shape[:2] == (ys.max() - ys.min() + 1, xs.max() - xs.min() + 1)
        sub = mask[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]
        assert np.all(s.foreground_raster[~sub] == 0)
        np.testing.assert_array_equal(
            s.foreground_raster[sub], image[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1][sub]
        )

    def test_invariant_enforced_at_construction(self):
        grid = make_grid(8, 8)
        m1 = blob_mask(TARGET, grid, 0.95)
        not_superset = FieldMap(8, 8, np.zeros((8, 8)), "mask")
        with pytest.raises(DomainError):
            TrainingSample(
                np.zeros((2, 2), dtype=np.uint8),
                np.zeros((8, 8), dtype=np.uint8),
                TARGET,
                TARGET,
                not_superset,
                m1,
                [],
            )


class TestArchive:
    def expected_names(self):
        return [
            "augmentation_log.json",
            "bg.png",
            "blobs.json",
            "caption.txt",
            "dual_mask.field",
            "fg.png",
            "fg_mask.field",
        ]

    def test_layout_on_disk(self, tmp_path):
        image, mask = synthetic_pair()
        s = build_training_sample(image, mask, PerturbConfig(seed=2), caption="hello")
        out = write_sample_dir(s, tmp_path / "sample")
        assert sorted(p.name for p in out.iterdir()) == self.expected_names()
        blobs = json.loads((out / "blobs.json").read_text())
        assert BlobGaussian.from_json_dict(blobs["target"]) == s.target_blob
        assert BlobGaussian.from_json_dict(blobs["source"]) == s.source_blob
        assert blobs["meta"]["seed"] == 2
        assert (out / "caption.txt").read_text() == "hello\n"

    def test_archive_matches_directory(self, tmp_path):
        image, mask = synthetic_pair()
        s = build_training_sample(image, mask, PerturbConfig(seed=2))
        out = write_sample_dir(s, tmp_path / "sample")
        with zipfile.ZipFile(io.BytesIO(archive_sample(s))) as zf:
            assert sorted(zf.namelist()) == self.expected_names()
            for name in zf.namelist():
                assert zf.read(name) == (out / name).read_bytes()

    def test_archive_timestamps_frozen(self):
        image, mask = synthetic_pair()
        s = build_training_sample(image, mask, PerturbConfig(seed=2))
        with zipfile.ZipFile(io.BytesIO(archive_sample(s))) as zf:
            for info in zf.infolist():
                assert info.date_time == (1980, 1, 1, 0, 0, 0)

    def test_field_files_parse(self, tmp_path):
        from blobforge.fieldio import load_field

        image, mask = synthetic_pair()
        s = build_training_sample(image, mask, PerturbConfig(seed=2))
        out = write_sample_dir(s, tmp_path / "sample")
        dm = load_field(out / "dual_mask.field")
        assert dm.kind == "mask"
        np.testing.assert_array_equal(dm.values, s.dual_mask.values)
