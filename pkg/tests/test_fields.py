"""Field engine: grids, distance/opacity maps, composition, splatting, masks."""

import math

import numpy as np
import pytest
from scipy.special import expit

from blobforge.blob import (
    BlobEllipse,
    BlobGaussian,
    DegenerateCovarianceError,
    DomainError,
    chi2_quantile_2dof,
    ellipse_to_gaussian,
)
from blobforge.fields import (
    BlobEntry,
    BlobScene,
    FeatureMap,
    FieldMap,
    background_transmittance,
    blob_mask,
    composed_opacities,
    coverage_map,
    make_grid,
    mahalanobis_at,
    mahalanobis_map,
    opacity_map,
    scene_feature_map,
    splat,
)

P_UNIT = 1.0 - math.exp(-0.5)  # chi-square quantile exactly 1


def gauss(cx, cy, sxx, syy, sxy=0.0):
    return BlobGaussian((cx, cy), ((sxx, sxy), (sxy, syy)))


def entry(id, cx, cy, a, b, theta=0.0, feature=(1.0,), p=0.95):
    return BlobEntry.create(id, BlobEllipse(cx, cy, a, b, theta), feature, p=p)


class TestMakeGrid:
    def test_single_cell(self):
        g = make_grid(1, 1)
        assert g.coords.shape == (1, 1, 2)
        assert tuple(g.coords[0, 0]) == (1.0, 1.0)

    def test_two_by_two_enumeration(self):
        g = make_grid(2, 2)
        got = {tuple(g.coords[h, w]) for h in range(2) for w in range(2)}
        assert got == {(0.5, 0.5), (1.0, 0.5), (0.5, 1.0), (1.0, 1.0)}

    def test_first_cell_fine_grid(self):
        g = make_grid(512, 512)
        assert tuple(g.coords[0, 0]) == (1 / 512, 1 / 512)
        assert tuple(g.coords[511, 511]) == (1.0, 1.0)

    def test_x_runs_along_columns(self):
        g = make_grid(4, 2)
        assert g.coords[0, 2, 0] == 3 / 4  # x varies with w
        assert g.coords[1, 2, 1] == 1.0    # y varies with h

    @pytest.mark.parametrize("w,h", [(0, 4), (4, 0), (-1, 4)])
    def test_bad_dims(self, w, h):
        with pytest.raises(DomainError):
            make_grid(w, h)

    def test_coords_read_only(self):
        g = make_grid(4, 4)
        with pytest.raises(ValueError):
            g.coords[0, 0, 0] = 99.0


class TestMahalanobis:
    def test_zero_at_center_on_grid_point(self):
        # (0.5, 0.5) is a grid point of an even grid
        d = mahalanobis_map(make_grid(4, 4), gauss(0.5, 0.5, 0.01, 0.01))
        assert d.values[1, 1] == 0.0
        assert d.kind == "distance"

    def test_isotropic_closed_form(self):
        # sigma = 0.1, offset r = 0.1 -> d = r^2/sigma^2 = 1
        d = mahalanobis_at(np.array([0.6, 0.5]), gauss(0.5, 0.5, 0.01, 0.01))
        assert d == pytest.approx(1.0, rel=1e-12)

    def test_diagonal_closed_form(self):
        d = mahalanobis_at(np.array([0.7, 0.6]), gauss(0.5, 0.5, 0.04, 0.01))
        assert d == pytest.approx(2.0, rel=1e-12)

    def test_nonnegative_everywhere(self):
        d = mahalanobis_map(make_grid(32, 32), gauss(0.3, 0.7, 0.002, 0.009, 0.001))
        assert np.all(d.values >= 0.0)

    def test_singular_covariance_raises(self):
        with pytest.raises(DegenerateCovarianceError):
            mahalanobis_map(make_grid(4, 4), gauss(0.5, 0.5, 0.04, 0.0))

    def test_rotation_equivariance_off_grid(self):
        # d of the rotated blob at rotated points == d of the original
        # at the original points
        rng = np.random.default_rng(5)
        e0 = BlobEllipse(0.43, 0.57, 0.3, 0.1, 0.25)
        g0 = ellipse_to_gaussian(e0, 0.95)
        offsets = rng.uniform(-0.3, 0.3, size=(50, 2))
        base = mahalanobis_at(np.array([0.43, 0.57]) + offsets, g0)
        for phi in (0.3, 1.1, 2.0, math.pi / 2):
            g1 = ellipse_to_gaussian(BlobEllipse(0.43, 0.57, 0.3, 0.1, 0.25 + phi), 0.95)
            rot = np.array([[math.cos(phi), -math.sin(phi)], [math.sin(phi), math.cos(phi)]])
            rotated = mahalanobis_at(np.array([0.43, 0.57]) + offsets @ rot.T, g1)
            np.testing.assert_allclose(rotated, base, rtol=0, atol=1e-9)


class TestOpacity:
    def test_half_at_center(self):
        d = mahalanobis_map(make_grid(4, 4), gauss(0.5, 0.5, 0.01, 0.01))
        o = opacity_map(d)
        assert o.values[1, 1] == 0.5
        assert o.kind == "opacity"

    def test_logistic_of_minus_one(self):
        d = FieldMap(1, 1, np.array([[1.0]]), "distance")
        assert opacity_map(d).values[0, 0] == pytest.approx(0.26894142136999512, rel=1e-14)

    def test_monotone_decreasing_and_bounded(self):
        d = mahalanobis_map(make_grid(16, 16), gauss(0.5, 0.5, 0.01, 0.01))
        o = opacity_map(d)
        assert np.all(o.values > 0.0)
        assert np.all(o.values <= 0.5)
        order = np.argsort(d.values.ravel())
        assert np.all(np.diff(o.values.ravel()[order]) <= 1e-15)

    def test_max_attained_exactly_at_center_cell(self):
        d = mahalanobis_map(make_grid(16, 16), gauss(0.5, 0.5, 0.01, 0.01))
        o = opacity_map(d).values
        assert o[7, 7] == 0.5
        mask = np.ones_like(o, dtype=bool)
        mask[7, 7] = False
        assert np.all(o[mask] < 0.5)

    def test_far_tail_vanishes(self):
        d = FieldMap(1, 1, np.array([[800.0]]), "distance")
        assert opacity_map(d).values[0, 0] == 0.0  # underflow is fine

    def test_sharpness_variant(self):
        d = FieldMap(3, 1, np.array([[0.0, 2.0, 4.0]]), "distance")
        o = opacity_map(d, sharpness=3.0, threshold=2.0)
        np.testing.assert_allclose(o.values[0], expit(3.0 * (2.0 - d.values[0])))
        assert o.values[0, 0] > 0.5  # steeper footprint exceeds the literal cap
        assert o.values[0, 1] == 0.5

    def test_requires_distance_kind(self):
        m = FieldMap(2, 2, np.zeros((2, 2)), "mask")
        with pytest.raises(DomainError):
            opacity_map(m)


class TestComposition:
    def test_single_blob_composed_equals_raw(self):
        scene = BlobScene((entry("a", 0.5, 0.5, 0.2, 0.1),), 8, 8)
        grid = scene.grid()
        oc = composed_opacities(scene, grid)
        raw = opacity_map(mahalanobis_map(grid, scene.blobs[0].gaussian))
        np.testing.assert_array_equal(oc[0].values, raw.values)

    def test_two_identical_blobs_halve_at_center(self):
        # both opacities are exactly 0.5 at the shared center cell:
        # front keeps 0.5, back is attenuated to 0.25
        e = entry("a", 0.5, 0.5, 0.2, 0.2)
        scene = BlobScene((e, entry("b", 0.5, 0.5, 0.2, 0.2)), 4, 4)
        oc = composed_opacities(scene, scene.grid())
        assert oc[1].values[1, 1] == 0.5
        assert oc[0].values[1, 1] == 0.25

    def test_frontmost_unattenuated(self):
        scene = BlobScene(
            (entry("a", 0.3, 0.3, 0.2, 0.1), entry("b", 0.5, 0.5, 0.25, 0.2), entry("c", 0.6, 0.6, 0.1, 0.1)),
            16, 16,
        )
        grid = scene.grid()
        oc = composed_opacities(scene, grid)
        raw_front = opacity_map(mahalanobis_map(grid, scene.blobs[-1].gaussian))
        np.testing.assert_array_equal(oc[-1].values, raw_front.values)

    def test_sum_identity(self):
        scene = BlobScene(
            tuple(
                entry(f"b{i}", 0.2 + 0.15 * i, 0.3 + 0.1 * i, 0.2, 0.08, theta=0.4 * i)
                for i in range(5)
            ),
            24, 24,
        )
        grid = scene.grid()
        total = sum(o.values for o in composed_opacities(scene, grid))
        leftover = background_transmittance(scene, grid)
        np.testing.assert_allclose(total + leftover, 1.0, rtol=0, atol=1e-9)
        np.testing.assert_allclose(coverage_map(scene, grid), total, rtol=0, atol=1e-9)

    def test_occlusion_monotonic(self):
        base = (entry("a", 0.4, 0.4, 0.2, 0.15), entry("b", 0.6, 0.5, 0.15, 0.1))
        scene0 = BlobScene(base, 16, 16)
        scene1 = BlobScene(base + (entry("c", 0.5, 0.45, 0.3, 0.2),), 16, 16)
        grid = scene0.grid()
        oc0 = composed_opacities(scene0, grid)
        oc1 = composed_opacities(scene1, grid)
        for i in range(2):
            assert np.all(oc1[i].values <= oc0[i].values + 1e-15)

    def test_brute_force_oracle_8x8(self):
        # independent per-cell reimplementation with plain loops
        scene = BlobScene(
            (
                entry("a", 0.4, 0.35, 0.25, 0.12, 0.3, feature=(1.0, -2.0)),
                entry("b", 0.7, 0.6, 0.18, 0.1, 1.2, feature=(0.5, 0.5)),
                entry("c", 0.5, 0.5, 0.1, 0.08, 2.2, feature=(-1.0, 3.0)),
            ),
            8, 8,
        )
        grid = scene.grid()
        oc = composed_opacities(scene, grid)
        fm = scene_feature_map(scene, grid)
        invs = [np.linalg.inv(np.array(b.gaussian.sigma)) for b in scene.blobs]
        for h in range(8):
            for w in range(8):
                x = np.array([(w + 1) / 8, (h + 1) / 8])
                raws = []
                for b, inv in zip(scene.blobs, invs):
                    diff = x - np.array(b.mu if hasattr(b, "mu") else b.gaussian.mu)
                    raws.append(1.0 / (1.0 + math.exp(min(diff @ inv @ diff, 700.0))))
                feat = np.zeros(2)
                for i in range(3):
                    occl = 1.0
                    for j in range(i + 1, 3):
                        occl *= 1.0 - raws[j]
                    expected = raws[i] * occl
                    assert oc[i].values[h, w] == pytest.approx(expected, abs=1e-12)
                    feat += expected * np.array(scene.blobs[i].feature)
                np.testing.assert_allclose(fm.values[h, w], feat, atol=1e-12)


class TestSplat:
    def test_scalar_multiply(self):
        oc = FieldMap(2, 2, np.full((2, 2), 0.5), "composed-opacity")
        f = splat((1.0, 2.0), oc)
        assert tuple(f.values[0, 0]) == (0.5, 1.0)
        assert f.depth == 2

    def test_zero_feature(self):
        oc = FieldMap(2, 2, np.full((2, 2), 0.3), "composed-opacity")
        assert np.all(splat((0.0, 0.0, 0.0), oc).values == 0.0)

    def test_homogeneity(self):
        oc = FieldMap(4, 4, np.random.default_rng(3).uniform(0, 0.5, (4, 4)), "opacity")
        f1 = splat(np.array([1.0, -2.0, 3.0]) * 2.5, oc)
        f2 = splat(np.array([1.0, -2.0, 3.0]), oc)
        np.testing.assert_allclose(f1.values, 2.5 * f2.values, rtol=1e-15)

    def test_rejects_matrix_feature(self):
        oc = FieldMap(2, 2, np.zeros((2, 2)), "distance")
        with pytest.raises(DomainError):
            splat(np.zeros((2, 2)), oc)


class TestSceneFeatureMap:
    def test_single_blob_equals_own_splat(self):
        scene = BlobScene((entry("a", 0.5, 0.5, 0.2, 0.1, feature=(2.0, -1.0)),), 8, 8)
        grid = scene.grid()
        fm = scene_feature_map(scene, grid)
        raw = opacity_map(mahalanobis_map(grid, scene.blobs[0].gaussian))
        np.testing.assert_array_equal(fm.values, splat((2.0, -1.0), raw).values)

    def test_zero_depth_features(self):
        scene = BlobScene((entry("a", 0.5, 0.5, 0.2, 0.1, feature=()),), 4, 4)
        fm = scene_feature_map(scene, scene.grid())
        assert fm.values.shape == (4, 4, 0)

    def test_disjoint_blobs_superpose(self):
        a = entry("a", 0.15, 0.15, 0.02, 0.02, feature=(1.0, 0.0))
        b = entry("b", 0.85, 0.85, 0.02, 0.02, feature=(0.0, 1.0))
        scene = BlobScene((a, b), 32, 32)
        grid = scene.grid()
        fm = scene_feature_map(scene, grid)
        alone = np.zeros_like(fm.values)
        for e, f in ((a, (1.0, 0.0)), (b, (0.0, 1.0))):
            raw = opacity_map(mahalanobis_map(grid, e.gaussian))
            alone += splat(f, raw).values
        np.testing.assert_allclose(fm.values, alone, atol=1e-6)

    def test_empty_scene_rejected(self):
        scene = BlobScene((), 4, 4)
        with pytest.raises(DomainError):
            scene_feature_map(scene, scene.grid())


class TestBlobMask:
    def test_center_cell_inside(self):
        m = blob_mask(gauss(0.5, 0.5, 0.01, 0.01), make_grid(4, 4), 0.95)
        assert m.values[1, 1] == 1.0
        assert m.kind == "mask"

    def test_threshold_is_inclusive_and_strict(self):
        # single-cell grid at (1,1); place the center so d lands just
        # below / just above the quantile
        q = chi2_quantile_2dof(0.95)
        inside = gauss(1.0 - math.sqrt(q * (1 - 1e-9)), 1.0, 1.0, 1.0)
        outside = gauss(1.0 - math.sqrt(q * (1 + 1e-9)), 1.0, 1.0, 1.0)
        grid = make_grid(1, 1)
        assert blob_mask(inside, grid, 0.95).values[0, 0] == 1.0
        assert blob_mask(outside, grid, 0.95).values[0, 0] == 0.0

    def test_matches_distance_threshold_everywhere(self):
        g = gauss(0.45, 0.55, 0.004, 0.002, 0.001)
        grid = make_grid(64, 64)
        m = blob_mask(g, grid, 0.9)
        d = mahalanobis_map(grid, g)
        np.testing.assert_array_equal(m.values, (d.values <= chi2_quantile_2dof(0.9)).astype(float))

    def test_area_matches_ellipse_area(self):
        # p-ellipse of the blob has semi-axes (a, b); mask area fraction
        # should approach pi*a*b
        e = BlobEllipse(0.5, 0.5, 0.25, 0.15, 0.6)
        g = ellipse_to_gaussian(e, 0.95)
        m = blob_mask(g, make_grid(512, 512), 0.95)
        frac = float(m.values.mean())
        assert frac == pytest.approx(math.pi * 0.25 * 0.15, rel=0.02)


class TestFieldMapValidation:
    def test_shape_mismatch(self):
        with pytest.raises(DomainError):
            FieldMap(3, 2, np.zeros((3, 3)), "distance")

    def test_unknown_kind(self):
        with pytest.raises(DomainError):
            FieldMap(2, 2, np.zeros((2, 2)), "heat")

    def test_mask_must_be_binary(self):
        with pytest.raises(DomainError):
            FieldMap(2, 2, np.full((2, 2), 0.5), "mask")

    def test_negative_distance_rejected(self):
        with pytest.raises(DomainError):
            FieldMap(2, 2, np.full((2, 2), -0.1), "distance")

    def test_composed_opacity_capped(self):
        with pytest.raises(DomainError):
            FieldMap(2, 2, np.full((2, 2), 0.7), "composed-opacity")


class TestSceneType:
    def test_duplicate_ids_rejected(self):
        with pytest.raises(DomainError):
            BlobScene((entry("x", 0.4, 0.4, 0.1, 0.1), entry("x", 0.6, 0.6, 0.1, 0.1)), 8, 8)

    def test_mixed_feature_dims_rejected(self):
        with pytest.raises(DomainError):
            BlobScene(
                (entry("a", 0.4, 0.4, 0.1, 0.1, feature=(1.0,)), entry("b", 0.6, 0.6, 0.1, 0.1, feature=(1.0, 2.0))),
                8, 8,
            )

    def test_index_of(self):
        scene = BlobScene((entry("a", 0.4, 0.4, 0.1, 0.1), entry("b", 0.6, 0.6, 0.1, 0.1)), 8, 8)
        assert scene.index_of("b") == 1
        with pytest.raises(KeyError):
            scene.index_of("zzz")

    def test_entry_gaussian_matches_ellipse(self):
        e = BlobEllipse(0.3, 0.6, 0.2, 0.1, 0.9)
        be = BlobEntry.create("a", e, (1.0,), p=0.9)
        g = ellipse_to_gaussian(e, 0.9)
        assert be.gaussian == g

    def test_feature_map_requires_finite(self):
        with pytest.raises(DomainError):
            FeatureMap(2, 2, 1, np.full((2, 2, 1), np.nan))
