"""Shape and morphology of the foreground mask."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from skimage import measure

from oodgate.errors import DegenerateFitError
from oodgate.features.mask import BinaryMask

SHAPE_NAMES = (
    "circularity",
    "eccentricity",
    "solidity",
    "extent",
    "circle_residual_mean",
    "circle_residual_max",
    "mask_area_ratio",
    "boundary_smoothness",
)

DEGENERATE_DET = 1e-9

# Perimeter is averaged over chords spanning this many contour vertices,
# which removes most of the digital staircase overestimate on curved edges
# while leaving straight axis-aligned edges at their exact length.
CHORD_STEPS = 3


@dataclass(frozen=True)
class CircleFit:
    center_x: float
    center_y: float
    radius: float
    residual_mean: float
    residual_max: float


def fit_circle(points) -> CircleFit:
    """Algebraic least-squares circle through ``(x, y)`` points.

    Minimizes ``sum((x^2 + y^2 + D x + E y + F)^2)``. Coordinates are centred
    and scaled before solving; the fit is rejected as degenerate when the
    determinant of the scaled normal matrix falls below 1e-9.

    Raises
    ------
    DegenerateFitError
        Fewer than three points, or the points are (nearly) collinear.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) < 3:
        raise DegenerateFitError(f"need at least 3 points, got {len(pts)}")
    mean = pts.mean(axis=0)
    centred = pts - mean
    scale = math.sqrt(float(np.mean(np.sum(centred**2, axis=1))))
    if scale == 0.0:
        raise DegenerateFitError("all points coincide")
    u = centred[:, 0] / scale
    v = centred[:, 1] / scale
    a = np.column_stack([u, v, np.ones_like(u)])
    normal = a.T @ a / len(pts)
    if abs(np.linalg.det(normal)) < DEGENERATE_DET:
        raise DegenerateFitError("points are collinear")
    rhs = -(u * u + v * v)
    d, e, f = np.linalg.solve(normal, a.T @ rhs / len(pts))
    r2 = (d * d + e * e) / 4.0 - f
    if r2 <= 0:
        raise DegenerateFitError("fit produced a non-positive squared radius")
    cx = mean[0] - d / 2.0 * scale
    cy = mean[1] - e / 2.0 * scale
    radius = math.sqrt(r2) * scale
    resid = np.abs(np.hypot(pts[:, 0] - cx, pts[:, 1] - cy) - radius)
    return CircleFit(float(cx), float(cy), float(radius), float(resid.mean()), float(resid.max()))


def _row_extremes(points: np.ndarray) -> np.ndarray:
    """Keep the leftmost and rightmost point for every distinct y.

    Any other point lies inside a horizontal segment and cannot be a hull vertex.
    """
    order = np.lexsort((points[:, 0], points[:, 1]))
    p = points[order]
    ys = p[:, 1]
    first = np.ones(len(p), dtype=bool)
    first[1:] = ys[1:] != ys[:-1]
    last = np.ones(len(p), dtype=bool)
    last[:-1] = ys[1:] != ys[:-1]
    return p[first | last]


def _half_hull(xs: list, ys: list, order) -> list[int]:
    chain: list[int] = []
    for k in order:
        x, y = xs[k], ys[k]
        while len(chain) >= 2:
            a, b = chain[-2], chain[-1]
            if (xs[b] - xs[a]) * (y - ys[a]) - (ys[b] - ys[a]) * (x - xs[a]) > 0:
                break
            chain.pop()
        chain.append(k)
    return chain


def convex_hull(points) -> list[tuple[float, float]]:
    """Andrew's monotone chain. Returns hull vertices counter-clockwise,
    without repeating the first vertex; collinear points are dropped."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) > 8:
        pts = _row_extremes(pts)
    if len(pts) == 0:
        return []
    pts = np.unique(pts, axis=0)  # sorted by x, then y
    if len(pts) <= 2:
        return [tuple(p) for p in pts.tolist()]
    xs = pts[:, 0].tolist()
    ys = pts[:, 1].tolist()
    n = len(xs)
    lower = _half_hull(xs, ys, range(n))
    upper = _half_hull(xs, ys, range(n - 1, -1, -1))
    return [(xs[k], ys[k]) for k in lower[:-1] + upper[:-1]]


def polygon_area(vertices) -> float:
    if len(vertices) < 3:
        return 0.0
    v = np.asarray(vertices, dtype=np.float64)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def polygon_perimeter(vertices) -> float:
    if len(vertices) < 2:
        return 0.0
    v = np.asarray(vertices, dtype=np.float64)
    return float(np.sum(np.hypot(*(np.roll(v, -1, axis=0) - v).T)))


def ordered_contours(bits: np.ndarray) -> list[np.ndarray]:
    """Closed iso-0.5 contours of a binary mask as integer ``2 * (x, y)`` arrays.

    Vertices are midpoints between 4-adjacent inside/outside pixels, so the
    doubled coordinates are exact integers.
    """
    rows = np.flatnonzero(bits.any(axis=1))
    cols = np.flatnonzero(bits.any(axis=0))
    if rows.size == 0:
        return []
    r0, c0 = rows[0], cols[0]
    crop = np.pad(bits[r0 : rows[-1] + 1, c0 : cols[-1] + 1], 1).astype(np.float64)
    out = []
    for c in measure.find_contours(crop, 0.5):
        v = np.rint(c[:-1] * 2).astype(np.int64)
        # (row, col) in padded crop coordinates -> doubled (x, y) in the image
        out.append(np.column_stack([v[:, 1] + 2 * (c0 - 1), v[:, 0] + 2 * (r0 - 1)]))
    return out


def contour_perimeter(bits: np.ndarray, steps: int = CHORD_STEPS, contours=None) -> float:
    """Smoothed contour length: mean chord over ``steps`` consecutive vertices.

    Equal to the perimeter of the contour after a ``steps``-point moving
    average. Computed from integer chords with an exactly rounded sum, so the
    value is invariant under translation and quarter-turn rotation.
    """
    total = 0.0
    for v in ordered_contours(bits) if contours is None else contours:
        k = min(steps, len(v))
        d = np.roll(v, -k, axis=0) - v
        total += math.fsum(np.hypot(d[:, 0], d[:, 1]).tolist()) / (2 * k)
    return total


def smoothed_contour_vertices(bits: np.ndarray, steps: int = CHORD_STEPS, contours=None) -> np.ndarray:
    parts = []
    for v in ordered_contours(bits) if contours is None else contours:
        k = min(steps, len(v))
        acc = sum(np.roll(v, -j, axis=0) for j in range(k))
        parts.append(acc / (2.0 * k))
    return np.concatenate(parts) if parts else np.zeros((0, 2))


def boundary_pixels(bits: np.ndarray) -> np.ndarray:
    """``(x, y)`` centres of mask pixels with a 4-neighbour outside the mask."""
    p = np.pad(bits, 1)
    interior = p[1:-1, 1:-1] & p[:-2, 1:-1] & p[2:, 1:-1] & p[1:-1, :-2] & p[1:-1, 2:]
    rows, cols = np.nonzero(bits & ~interior)
    return np.column_stack([cols, rows]).astype(np.float64)


def _pixel_corner_extremes(bits: np.ndarray) -> np.ndarray:
    rows = np.flatnonzero(bits.any(axis=1))
    sub = bits[rows]
    left = np.argmax(sub, axis=1)
    right = sub.shape[1] - 1 - np.argmax(sub[:, ::-1], axis=1)
    r = rows.astype(np.float64)
    xl = left - 0.5
    xr = right + 0.5
    return np.concatenate([
        np.column_stack([xl, r - 0.5]),
        np.column_stack([xl, r + 0.5]),
        np.column_stack([xr, r - 0.5]),
        np.column_stack([xr, r + 0.5]),
    ])


def eccentricity(bits: np.ndarray) -> float:
    """Eccentricity of the moment ellipse, ``sqrt(1 - lambda_min / lambda_max)``."""
    rows, cols = np.nonzero(bits)
    n = len(rows)
    if n < 2:
        return 0.0
    # integer sums keep the result exactly invariant under translation and
    # quarter-turn rotation
    sx, sy = int(cols.sum()), int(rows.sum())
    sxx = int(np.dot(cols, cols))
    syy = int(np.dot(rows, rows))
    sxy = int(np.dot(cols, rows))
    a = (n * sxx - sx * sx) / (n * n)
    c = (n * syy - sy * sy) / (n * n)
    b = (n * sxy - sx * sy) / (n * n)
    root = math.sqrt((a - c) ** 2 + 4 * b * b)
    lam1 = (a + c + root) / 2
    lam2 = (a + c - root) / 2
    if lam1 <= 0:
        return 0.0
    return math.sqrt(min(1.0, max(0.0, 1.0 - lam2 / lam1)))


def shape_features(mask: BinaryMask) -> dict[str, float]:
    area = mask.area
    if area == 0:
        return dict.fromkeys(SHAPE_NAMES, 0.0)
    rows = np.flatnonzero(mask.bits.any(axis=1))
    cols = np.flatnonzero(mask.bits.any(axis=0))
    bits = mask.bits[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]
    bbox_area = bits.size

    contours = ordered_contours(bits)
    perimeter = contour_perimeter(bits, contours=contours)
    circularity = 4 * math.pi * area / perimeter**2

    hull_area = polygon_area(convex_hull(_pixel_corner_extremes(bits)))
    solidity = area / hull_area if hull_area > 0 else 0.0
    hull_perimeter = polygon_perimeter(convex_hull(smoothed_contour_vertices(bits, contours=contours)))
    smoothness = hull_perimeter / perimeter

    try:
        fit = fit_circle(boundary_pixels(bits))
        resid_mean = fit.residual_mean / fit.radius
        resid_max = fit.residual_max / fit.radius
    except DegenerateFitError:
        resid_mean = resid_max = 0.0

    return {
        "circularity": circularity,
        "eccentricity": eccentricity(bits),
        "solidity": min(1.0, solidity),
        "extent": area / bbox_area,
        "circle_residual_mean": resid_mean,
        "circle_residual_max": resid_max,
        "mask_area_ratio": area / mask.bits.size,
        "boundary_smoothness": min(1.0, smoothness),
    }
