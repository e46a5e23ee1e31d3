import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.spatial import ConvexHull

from oodgate.errors import DegenerateFitError, TooNarrowError, TooSmallError
from oodgate.features import (
    FEATURE_NAMES,
    FLAG_FEATURES,
    N_FEATURES,
    RATIO_FEATURES,
    BinaryMask,
    FeatureVector,
    color_features,
    compute_glcm,
    compute_lbp,
    convex_hull,
    extract_feature_vector,
    extract_mask,
    fit_circle,
    glcm_features,
    global_features,
    intensity_background_features,
    lbp_features,
    read_feature_csv,
    shape_features,
    spatial_features,
    write_feature_csv,
)
from oodgate.features.shape import polygon_area
from oodgate.features.texture import LBP_OFFSETS, Glcm, quantize
from oodgate.imaging import HsvImage, to_grayscale
from tests.conftest import disc_bits, gray_of, rgb_of


def test_schema_has_39_unique_names():
    assert N_FEATURES == 39 == len(set(FEATURE_NAMES))
    assert FLAG_FEATURES <= set(FEATURE_NAMES) and RATIO_FEATURES <= set(FEATURE_NAMES)


# --- mask -----------------------------------------------------------------


def test_mask_disc_area_within_3_percent():
    bits = disc_bits(256, 80)
    mask = extract_mask(gray_of(bits * 220.0))
    assert abs(mask.area - math.pi * 80**2) / (math.pi * 80**2) < 0.03
    assert mask.area == np.count_nonzero(bits)


def test_mask_all_black_is_empty():
    assert extract_mask(gray_of(np.zeros((64, 64)))).area == 0


def test_mask_keeps_largest_component():
    big = disc_bits(256, 60, center=(128, 80))
    small = disc_bits(256, 20, center=(128, 210))
    mask = extract_mask(gray_of((big | small) * 200.0))
    assert mask.area == np.count_nonzero(big)
    assert not np.any(mask.bits & small)


def test_mask_fills_holes():
    bits = disc_bits(128, 40)
    img = bits * 200.0
    img[60:68, 60:68] = 0
    assert extract_mask(gray_of(img)).area == np.count_nonzero(bits)


# --- shape ----------------------------------------------------------------


def test_disc_shape():
    f = shape_features(BinaryMask(disc_bits(256, 80)))
    assert 0.9 <= f["circularity"] <= 1.1
    assert f["eccentricity"] <= 0.05
    assert f["solidity"] >= 0.98
    assert f["circle_residual_mean"] < 0.01
    assert f["boundary_smoothness"] > 0.95


def test_square_shape():
    bits = np.zeros((200, 200), dtype=bool)
    bits[50:150, 50:150] = True
    f = shape_features(BinaryMask(bits))
    assert f["circularity"] == pytest.approx(math.pi / 4, abs=0.02)
    assert f["eccentricity"] <= 0.05
    assert f["solidity"] == pytest.approx(1.0)
    assert f["extent"] == pytest.approx(1.0)


def test_ellipse_eccentricity():
    yy, xx = np.mgrid[:300, :300]
    bits = ((xx - 149.5) / 120) ** 2 + ((yy - 149.5) / 60) ** 2 <= 1
    assert shape_features(BinaryMask(bits))["eccentricity"] == pytest.approx(0.866, abs=0.02)


def test_empty_mask_gives_zeros():
    f = shape_features(BinaryMask(np.zeros((32, 32), dtype=bool)))
    assert set(f.values()) == {0.0}


def test_shape_invariant_under_translation_and_quarter_turns(rng):
    base = np.zeros((90, 90), dtype=bool)
    base[20:70, 25:60] = disc_bits(50, 22)[:, 7:42]
    base[30:40, 10:30] = True
    ref = shape_features(BinaryMask(base))
    shifted = np.roll(np.roll(base, 7, axis=0), -5, axis=1)
    for bits in (shifted, np.rot90(base), np.rot90(base, 2), np.rot90(base, 3)):
        f = shape_features(BinaryMask(np.ascontiguousarray(bits)))
        for k in ("circularity", "eccentricity", "solidity", "mask_area_ratio"):
            assert f[k] == ref[k], k
        assert f["boundary_smoothness"] == pytest.approx(ref["boundary_smoothness"], abs=1e-12)
        assert f["circle_residual_mean"] == pytest.approx(ref["circle_residual_mean"], abs=1e-9)


def test_convex_hull_matches_scipy(rng):
    for _ in range(20):
        pts = rng.integers(0, 50, (200, 2)).astype(float)
        ours = polygon_area(convex_hull(pts))
        assert ours == pytest.approx(ConvexHull(pts).volume, abs=1e-9)


def test_convex_hull_is_counter_clockwise():
    hull = convex_hull([(0, 0), (2, 0), (2, 2), (0, 2), (1, 1), (1, 0)])
    assert len(hull) == 4
    x = np.array([p[0] for p in hull])
    y = np.array([p[1] for p in hull])
    assert np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)) > 0


# --- circle fit -----------------------------------------------------------


def test_fit_circle_exact_points():
    t = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    fit = fit_circle(np.column_stack([10 + 5 * np.cos(t), 10 + 5 * np.sin(t)]))
    assert abs(fit.center_x - 10) < 1e-9 and abs(fit.center_y - 10) < 1e-9
    assert abs(fit.radius - 5) < 1e-9
    assert fit.residual_mean < 1e-9


def test_fit_circle_three_points():
    fit = fit_circle([(0, 0), (2, 0), (1, 1)])
    assert fit.center_x == pytest.approx(1, abs=1e-12)
    assert fit.center_y == pytest.approx(0, abs=1e-12)
    assert fit.radius == pytest.approx(1, abs=1e-12)


def _geometric_fit_grid(pts, cx, cy):
    """Minimize mean |dist - mean dist| over a shrinking centre grid."""
    best = (np.inf, cx, cy)
    step = 1.0
    for _ in range(30):
        for dx in np.linspace(-step, step, 11):
            for dy in np.linspace(-step, step, 11):
                d = np.hypot(pts[:, 0] - (best[1] + dx), pts[:, 1] - (best[2] + dy))
                cost = np.mean(np.abs(d - d.mean()))
                if cost < best[0]:
                    best = (cost, best[1] + dx, best[2] + dy)
        step /= 2
    d = np.hypot(pts[:, 0] - best[1], pts[:, 1] - best[2])
    return best[1], best[2], d.mean()


def test_fit_circle_noisy_matches_geometric_grid_fit(rng):
    t = rng.uniform(0, 2 * np.pi, 100)
    pts = np.column_stack([3 + 50 * np.cos(t), -7 + 50 * np.sin(t)]) + rng.normal(0, 0.1, (100, 2))
    fit = fit_circle(pts)
    gx, gy, gr = _geometric_fit_grid(pts, 0.0, 0.0)
    assert abs(fit.center_x - gx) < 0.05
    assert abs(fit.center_y - gy) < 0.05
    assert abs(fit.radius - gr) < 0.05


@pytest.mark.parametrize("pts", [[(0, 0), (1, 1)], [(0, 0), (1, 1), (2, 2), (3, 3)], [(1, 1)] * 5])
def test_fit_circle_degenerate(pts):
    with pytest.raises(DegenerateFitError):
        fit_circle(pts)


# --- GLCM -----------------------------------------------------------------


def test_glcm_constant_image():
    g = compute_glcm(gray_of(np.full((8, 8), 100.0)))
    assert g.matrix[12, 12] == 1.0 and g.matrix.sum() == 1.0
    f = glcm_features(g)
    assert f == {"glcm_contrast": 0.0, "glcm_homogeneity": 1.0, "glcm_energy": 1.0, "glcm_correlation": 0.0}


def test_glcm_vertical_stripes():
    img = np.tile([0.0, 255.0], (6, 5))
    g = compute_glcm(gray_of(img))
    assert g.matrix[0, 31] == pytest.approx(0.5) and g.matrix[31, 0] == pytest.approx(0.5)
    f = glcm_features(g)
    assert f["glcm_contrast"] == pytest.approx(961)
    assert f["glcm_homogeneity"] == pytest.approx(1 / 962)
    assert f["glcm_energy"] == pytest.approx(0.5)
    assert f["glcm_correlation"] == pytest.approx(-1)


def naive_glcm(values, levels=32):
    h, w = values.shape
    counts = np.zeros((levels, levels))
    for r in range(h):
        for c in range(w - 1):
            a = min(int(values[r, c] // (256 / levels)), levels - 1)
            b = min(int(values[r, c + 1] // (256 / levels)), levels - 1)
            counts[a, b] += 1
            counts[b, a] += 1
    return counts / counts.sum()


def test_glcm_matches_naive_pair_counter(rng):
    for _ in range(5):
        img = rng.uniform(0, 255, (16, 16))
        assert np.allclose(compute_glcm(gray_of(img)).matrix, naive_glcm(img), atol=0, rtol=0)


def direct_glcm_features(p):
    n = p.shape[0]
    contrast = homogeneity = energy = mu = 0.0
    for i in range(n):
        for j in range(n):
            contrast += p[i, j] * (i - j) ** 2
            homogeneity += p[i, j] / (1 + (i - j) ** 2)
            energy += p[i, j] ** 2
            mu += i * p[i, j]
    var = sum(p[i, j] * (i - mu) ** 2 for i in range(n) for j in range(n))
    cov = sum(p[i, j] * (i - mu) * (j - mu) for i in range(n) for j in range(n))
    return contrast, homogeneity, energy, cov / var


def test_glcm_features_match_direct_summation(rng):
    for _ in range(5):
        m = rng.random((32, 32))
        m = m + m.T
        m /= m.sum()
        f = glcm_features(Glcm(m))
        c, h, e, r = direct_glcm_features(m)
        assert abs(f["glcm_contrast"] - c) < 1e-12
        assert abs(f["glcm_homogeneity"] - h) < 1e-12
        assert abs(f["glcm_energy"] - e) < 1e-12
        assert abs(f["glcm_correlation"] - r) < 1e-12


def test_glcm_too_narrow():
    with pytest.raises(TooNarrowError):
        compute_glcm(gray_of(np.zeros((5, 1))))


def test_quantize_bins():
    q = quantize(gray_of([[0, 7.99, 8, 255, 255.0]]))
    assert q.tolist() == [[0, 0, 1, 31, 31]]


# --- LBP ------------------------------------------------------------------


def _transitions(code):
    bits = [(code >> i) & 1 for i in range(8)]
    return sum(bits[i] != bits[(i + 1) % 8] for i in range(8))


def test_exactly_58_uniform_codes():
    assert sum(_transitions(c) <= 2 for c in range(256)) == 58


def test_lbp_constant_image():
    h = compute_lbp(gray_of(np.full((10, 10), 5.0)))
    assert np.all(h.code_image == 255)
    assert np.count_nonzero(h.bins) == 1 and h.bins.sum() == 64
    assert lbp_features(h) == {"lbp_mean": 255.0, "lbp_var": 0.0}


def test_lbp_bright_centre():
    img = np.zeros((3, 3))
    img[1, 1] = 200
    assert compute_lbp(gray_of(img)).code_image.tolist() == [[0]]


def naive_lbp(values):
    h, w = values.shape
    codes = np.zeros((h - 2, w - 2), dtype=int)
    for r in range(1, h - 1):
        for c in range(1, w - 1):
            code = 0
            for bit, (dr, dc) in enumerate(LBP_OFFSETS):
                if values[r + dr, c + dc] >= values[r, c]:
                    code |= 1 << bit
            codes[r - 1, c - 1] = code
    uniform = [c for c in range(256) if _transitions(c) <= 2]
    bins = np.zeros(59, dtype=int)
    for code in codes.ravel():
        bins[uniform.index(code) if code in uniform else 58] += 1
    return codes, bins


def test_lbp_neighbour_order_starts_east_and_turns_counter_clockwise():
    img = np.zeros((3, 3))
    img[1, 2] = 9  # east
    img[0, 1] = 9  # north
    img[1, 1] = 1
    assert compute_lbp(gray_of(img)).code_image[0, 0] == 0b101


def test_lbp_matches_naive(rng):
    img = rng.integers(0, 8, (32, 32)).astype(float)  # small range forces ties
    h = compute_lbp(gray_of(img))
    codes, bins = naive_lbp(img)
    assert np.array_equal(h.code_image, codes)
    assert np.array_equal(h.bins, bins)
    f = lbp_features(h)
    assert abs(f["lbp_mean"] - codes.mean()) < 1e-9
    assert abs(f["lbp_var"] - codes.var()) < 1e-9


def test_lbp_features_two_point_distribution():
    from oodgate.features import LbpHistogram

    codes = np.array([[0, 255], [255, 0]], dtype=np.uint8)
    f = lbp_features(LbpHistogram(np.zeros(59), codes))
    assert f["lbp_mean"] == 127.5 and f["lbp_var"] == 16256.25


def test_lbp_too_small():
    with pytest.raises(TooSmallError):
        compute_lbp(gray_of(np.zeros((2, 9))))


# --- intensity / colour / spatial / global --------------------------------


def test_intensity_constant():
    f = intensity_background_features(gray_of(np.full((20, 20), 128.0)))
    assert f["gray_min"] == f["gray_max"] == f["gray_mean"] == f["gray_p05"] == f["gray_p95"] == 128
    assert f["gray_var"] == 0 and f["background_dark_flag"] == 0


def test_intensity_percentiles_on_0_to_255():
    f = intensity_background_features(gray_of(np.arange(256.0).reshape(16, 16)))
    assert f["gray_mean"] == 127.5
    assert f["gray_p05"] == 12 and f["gray_p95"] == 242


def test_background_dark_flag_on_disc():
    f = intensity_background_features(gray_of(disc_bits(64, 25) * 200.0))
    assert f["background_dark_flag"] == 1


def _hsv(hue, sat, val):
    return HsvImage(np.asarray(hue, float), np.asarray(sat, float), np.asarray(val, float))


def test_hue_wraparound():
    hsv = _hsv([[350.0, 10.0]], [[1.0, 1.0]], [[1.0, 1.0]])
    f = color_features(hsv, rgb_of(np.zeros((1, 2, 3))))
    assert abs(f["hue_mean"]) < 1e-6


def test_achromatic_colour():
    img = rgb_of(np.full((4, 4, 3), 90))
    from oodgate.imaging import to_hsv

    f = color_features(to_hsv(img), img)
    assert f["sat_mean"] == 0 and f["hue_var"] == 0 and f["hue_mean"] == 0


def test_circular_mean_matches_atan2_oracle(rng):
    hue = rng.uniform(0, 360, (30, 30))
    sat = rng.uniform(0.1, 1, (30, 30))
    f = color_features(_hsv(hue, sat, sat), rgb_of(np.zeros((30, 30, 3))))
    s, c = np.sin(np.radians(hue)).sum(), np.cos(np.radians(hue)).sum()
    assert f["hue_mean"] == pytest.approx(math.degrees(math.atan2(s, c)), abs=1e-9)
    assert f["hue_var"] == pytest.approx(1 - math.hypot(s, c) / hue.size, abs=1e-12)


def test_single_channel_colour_uses_luminance():
    img = rgb_of(np.full((4, 4, 1), 51))
    f = color_features(None, img, to_grayscale(img))
    assert f["val_mean"] == pytest.approx(0.2) and f["sat_mean"] == 0 and f["hue_mean"] == 0


def test_spatial_uniform():
    f = spatial_features(gray_of(np.full((32, 32), 77.0)))
    assert f["radial_slope_mean"] == pytest.approx(0, abs=1e-12)
    assert f["center_minus_outer"] == pytest.approx(0, abs=1e-12)
    assert f["hemisphere_asymmetry_tb"] == 0 and f["hemisphere_asymmetry_lr"] == 0
    assert f["quadrant_mean_var"] == 0


def test_spatial_bright_disc():
    f = spatial_features(gray_of(disc_bits(128, 40) * 200.0))
    assert f["radial_slope_mean"] < 0 and f["center_minus_outer"] > 0


def test_spatial_top_bottom_asymmetry():
    img = np.full((32, 32), 100.0)
    img[:16] = 200.0
    assert spatial_features(gray_of(img))["hemisphere_asymmetry_tb"] == pytest.approx(100 / (300 + 1e-6), abs=1e-12)


def test_spatial_too_small():
    with pytest.raises(TooSmallError):
        spatial_features(gray_of(np.zeros((15, 40))))


def test_global_all_black():
    img = rgb_of(np.zeros((20, 20, 3)))
    f = global_features(img, to_grayscale(img))
    assert f["black_pixel_ratio"] == 1.0 and f["all_corners_dark_flag"] == 1 and f["is_rgb"] == 0


def test_global_replicated_gray_is_not_rgb(rng):
    g = rng.integers(0, 256, (20, 20), dtype=np.uint8)
    img = rgb_of(np.stack([g, g, g], axis=2))
    assert global_features(img, to_grayscale(img))["is_rgb"] == 0


def test_global_aspect_ratio():
    img = rgb_of(np.zeros((480, 640, 3)))
    assert global_features(img, to_grayscale(img))["aspect_ratio"] == pytest.approx(640 / 480)


# --- full vector ----------------------------------------------------------


def fundus_like(size=256):
    bits = disc_bits(size, 0.42 * size)
    img = np.zeros((size, size, 3))
    img[bits] = (210, 100, 40)
    return rgb_of(img)


def test_fundus_like_vector():
    fv = extract_feature_vector(fundus_like())
    assert fv["background_dark_flag"] == 1
    assert fv["circularity"] > 0.9
    assert fv["eccentricity"] < 0.1
    assert fv["all_corners_dark_flag"] == 1 and fv["is_rgb"] == 1


def test_factors_give_valid_vectors_and_are_deterministic():
    img = fundus_like(512)
    for factor in (1, 8):
        a = extract_feature_vector(img, factor)
        b = extract_feature_vector(img, factor)
        assert len(a.values) == 39 and np.all(np.isfinite(a.values))
        assert a.values.tobytes() == b.values.tobytes()


def test_tiny_downsample_rejected():
    with pytest.raises(TooSmallError):
        extract_feature_vector(rgb_of(np.zeros((100, 100, 3))), 8)


@settings(max_examples=25, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(16, 40), st.integers(16, 40), st.sampled_from([1, 3]))))
def test_vector_properties_on_random_images(arr):
    fv = extract_feature_vector(rgb_of(arr))
    assert np.all(np.isfinite(fv.values))
    d = fv.as_dict()
    for name in FLAG_FEATURES:
        assert d[name] in (0.0, 1.0)
    for name in RATIO_FEATURES:
        assert 0.0 <= d[name] <= 1.0, name


def test_feature_csv_roundtrip(tmp_path, rng):
    rows = [(f"img{i}.png", i % 2, FeatureVector(rng.normal(size=39))) for i in range(3)]
    write_feature_csv(tmp_path / "f.csv", rows)
    back = read_feature_csv(tmp_path / "f.csv")
    assert [(p, l) for p, l, _ in back] == [(p, l) for p, l, _ in rows]
    for (_, _, a), (_, _, b) in zip(rows, back):
        assert np.array_equal(a.values, b.values)
