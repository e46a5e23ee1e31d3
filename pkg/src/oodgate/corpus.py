"""Seeded synthetic corpus: fundus-like discs versus three non-fundus families.

Fundus images are a reddish-orange disc with vignetting, an optic-disc
highlight and dark vessel curves on a black background. Non-fundus images are
X-ray-like grayscale noise, endoscopy-like bright colour texture, or grids of
high-contrast rectangles. Everything is written as 512x512 PNG.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from oodgate.errors import ValidationError
from oodgate.imaging import RasterImage, encode_pnm
from oodgate.manifest import DatasetManifest, ManifestEntry, write_manifest

SIZE = 512
NON_FUNDUS_KINDS = ("xray", "endoscopy", "grid")


def _rng(seed: int, label: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, label, index]))


def _smooth_noise(rng, size: int, cells: int, channels: int = 1) -> np.ndarray:
    """Bilinearly upsampled uniform noise in [0, 1], shape (size, size, channels)."""
    out = np.empty((size, size, channels))
    for c in range(channels):
        small = rng.random((cells, cells)).astype(np.float32)
        im = Image.fromarray(small, mode="F").resize((size, size), Image.BILINEAR)
        out[:, :, c] = np.asarray(im)
    return out


def _pixel_noise(rng, shape, amplitude: int) -> np.ndarray:
    """Integer noise uniform on [-amplitude, amplitude]."""
    return rng.integers(-amplitude, amplitude + 1, shape, dtype=np.int8)


def fundus_image(rng: np.random.Generator, size: int = SIZE) -> np.ndarray:
    yy = np.arange(size, dtype=np.float64)[:, None]
    xx = np.arange(size, dtype=np.float64)[None, :]
    radius = rng.uniform(0.35, 0.48) * size
    cx = size / 2 + rng.uniform(-0.05, 0.05) * size
    cy = size / 2 + rng.uniform(-0.05, 0.05) * size
    rho = np.hypot(xx - cx, yy - cy) / radius
    inside = rho <= 1.0

    base = np.array([rng.uniform(190, 235), rng.uniform(80, 120), rng.uniform(20, 50)])
    shade = 1.0 - rng.uniform(0.25, 0.4) * rho**2
    shade *= 0.9 + 0.2 * _smooth_noise(rng, size, 6)[:, :, 0]

    # optic disc highlight
    ang = rng.uniform(0, 2 * np.pi)
    ox, oy = cx + 0.3 * radius * np.cos(ang), cy + 0.3 * radius * np.sin(ang)
    od = np.exp(-(((xx - ox) ** 2 + (yy - oy) ** 2) / (2 * (0.07 * radius) ** 2)))

    # vessels: thin dark sinusoidal arcs radiating from the optic disc
    vessel = np.zeros((size, size))
    t = np.linspace(0, 1, 400)
    for _ in range(int(rng.integers(4, 8))):
        theta = rng.uniform(0, 2 * np.pi)
        length = rng.uniform(0.4, 0.8) * radius
        wiggle = rng.uniform(-0.25, 0.25)
        px = ox + t * length * np.cos(theta + wiggle * np.sin(3 * t))
        py = oy + t * length * np.sin(theta + wiggle * np.sin(3 * t))
        keep = np.hypot(px - cx, py - cy) < 0.93 * radius
        ix = np.clip(px[keep].astype(int), 0, size - 1)
        iy = np.clip(py[keep].astype(int), 0, size - 1)
        width = int(rng.integers(1, 3))
        for dx in range(-width, width + 1):
            for dy in range(-width, width + 1):
                vessel[np.clip(iy + dy, 0, size - 1), np.clip(ix + dx, 0, size - 1)] = 1.0

    img = base[None, None, :] * shade[:, :, None]
    img += od[:, :, None] * np.array([40.0, 90.0, 60.0])
    img *= 1.0 - 0.35 * vessel[:, :, None]
    img += _pixel_noise(rng, img.shape, 5)
    out = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    background = rng.integers(0, 5, out.shape, dtype=np.uint8)
    return np.where(inside[:, :, None], out, background)


def xray_image(rng: np.random.Generator, size: int = SIZE) -> np.ndarray:
    level = rng.uniform(60, 170)
    img = level + rng.uniform(40, 90) * (_smooth_noise(rng, size, int(rng.integers(3, 8)))[:, :, 0] - 0.5)
    img += _pixel_noise(rng, img.shape, int(rng.integers(7, 20)))
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def endoscopy_image(rng: np.random.Generator, size: int = SIZE) -> np.ndarray:
    base = np.array([rng.uniform(170, 230), rng.uniform(90, 150), rng.uniform(80, 140)])
    tex = _smooth_noise(rng, size, int(rng.integers(8, 24)), 3) - 0.5
    img = base[None, None, :] * (1.0 + 0.4 * tex) + _pixel_noise(rng, (size, size, 3), 8)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def grid_image(rng: np.random.Generator, size: int = SIZE) -> np.ndarray:
    nx, ny = int(rng.integers(3, 10)), int(rng.integers(3, 10))
    colours = rng.integers(0, 256, (ny, nx, 3))
    xs = np.minimum(np.arange(size) * nx // size, nx - 1)
    ys = np.minimum(np.arange(size) * ny // size, ny - 1)
    img = colours[ys[:, None], xs[None, :]].astype(np.float64)
    img += _pixel_noise(rng, img.shape, 7)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def non_fundus_image(rng: np.random.Generator, kind: str, size: int = SIZE) -> np.ndarray:
    return {"xray": xray_image, "endoscopy": endoscopy_image, "grid": grid_image}[kind](rng, size)


def generate_synthetic_corpus(
    out_dir,
    n_per_class: int,
    seed: int = 0,
    internal_fraction: float = 0.7,
    size: int = SIZE,
    image_format: str = "png",
) -> DatasetManifest:
    """Write ``n_per_class`` images of each class plus ``manifest.csv``.

    The manifest assigns ``round(internal_fraction * n_per_class)`` images of
    each class to the internal split and the rest to the external split.
    ``image_format`` is ``"png"`` or ``"pnm"`` (binary PPM/PGM, much faster to write).
    """
    if image_format not in ("png", "pnm"):
        raise ValidationError(f"image_format must be 'png' or 'pnm', got {image_format!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    split_rng = np.random.default_rng(np.random.SeedSequence([seed, 99]))
    n_internal = int(round(internal_fraction * n_per_class))
    entries = []
    for label, prefix in ((1, "fundus"), (0, "nonfundus")):
        internal = set(split_rng.permutation(n_per_class)[:n_internal].tolist())
        for i in range(n_per_class):
            rng = _rng(seed, label, i)
            if label == 1:
                arr = fundus_image(rng, size)
            else:
                arr = non_fundus_image(rng, NON_FUNDUS_KINDS[i % len(NON_FUNDUS_KINDS)], size)
            if image_format == "png":
                path = out_dir / f"{prefix}_{i:05d}.png"
                Image.fromarray(arr).save(path, compress_level=1)
            else:
                path = out_dir / f"{prefix}_{i:05d}.{'ppm' if arr.ndim == 3 else 'pgm'}"
                path.write_bytes(encode_pnm(RasterImage.from_array(arr)))
            entries.append(ManifestEntry(path, label, "internal" if i in internal else "external"))
    write_manifest(out_dir / "manifest.csv", entries)
    return DatasetManifest(tuple(entries))
