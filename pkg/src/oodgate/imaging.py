"""Image decoding, color conversion and relative-resolution downsampling.

Images travel through the pipeline as :class:`RasterImage`, a thin wrapper
around an ``(height, width, channels)`` uint8 array. Grayscale derivatives are
kept as float64 so that statistics are not computed on re-quantized values.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from oodgate.errors import (
    CorruptStreamError,
    NotColorError,
    TooSmallError,
    UnsupportedFormatError,
    ValidationError,
    ZeroDimensionError,
)

FACTORS = (1, 2, 4, 8)


@dataclass(frozen=True)
class RasterImage:
    """Decoded 8-bit image. ``pixels`` has shape ``(height, width, channels)``."""

    pixels: np.ndarray

    def __post_init__(self):
        px = self.pixels
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ValidationError(f"pixels must be (H, W, 1|3), got shape {px.shape}")
        if px.dtype != np.uint8:
            raise ValidationError(f"pixels must be uint8, got {px.dtype}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ZeroDimensionError("image has a zero dimension")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @classmethod
    def from_array(cls, arr) -> RasterImage:
        """Wrap a ``(H, W)``, ``(H, W, 1)`` or ``(H, W, 3)`` array of 8-bit values."""
        arr = np.asarray(arr)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        return cls(np.ascontiguousarray(arr, dtype=np.uint8))


@dataclass(frozen=True)
class GrayImage:
    """Luminance Y per pixel, float64 in [0, 255], shape ``(height, width)``."""

    values: np.ndarray

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class HsvImage:
    """Hue in degrees [0, 360), saturation and value as fractions in [0, 1]."""

    hue: np.ndarray
    saturation: np.ndarray
    value: np.ndarray

    @property
    def height(self) -> int:
        return self.hue.shape[0]

    @property
    def width(self) -> int:
        return self.hue.shape[1]


def _pnm_header(data: bytes) -> tuple[bytes, list[int], int]:
    """Return (magic, [width, height, maxval], offset of the pixel payload)."""
    fields: list[int] = []
    pos = 2
    n = len(data)
    while len(fields) < 3:
        while pos < n and (data[pos : pos + 1].isspace() or data[pos] == ord("#")):
            if data[pos] == ord("#"):
                end = data.find(b"\n", pos)
                pos = n if end < 0 else end + 1
            else:
                pos += 1
        start = pos
        while pos < n and data[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise CorruptStreamError("malformed PNM header")
        fields.append(int(data[start:pos]))
    if pos >= n or not data[pos : pos + 1].isspace():
        raise CorruptStreamError("malformed PNM header")
    return data[:2], fields, pos + 1


def _decode_pnm(data: bytes) -> RasterImage:
    magic, (w, h, maxval), offset = _pnm_header(data)
    if w == 0 or h == 0:
        raise ZeroDimensionError(f"PNM has zero dimension ({w}x{h})")
    if not 0 < maxval < 256:
        raise CorruptStreamError(f"unsupported PNM maxval {maxval} (8-bit only)")
    channels = 3 if magic == b"P6" else 1
    body = data[offset:]
    need = w * h * channels
    if len(body) < need:
        raise CorruptStreamError(f"PNM payload truncated: {len(body)} of {need} bytes")
    arr = np.frombuffer(body, dtype=np.uint8, count=need).reshape(h, w, channels)
    if maxval != 255:
        # rescale to the full 8-bit range, round half up
        arr = ((arr.astype(np.uint32) * 510 + maxval) // (2 * maxval)).astype(np.uint8)
    return RasterImage(arr.copy())


def _decode_pillow(data: bytes) -> RasterImage:
    try:
        with Image.open(io.BytesIO(data)) as im:
            im.load()
            mode = im.mode
            if mode in ("I", "I;16", "I;16B", "I;16L", "F"):
                raise UnsupportedFormatError(f"unsupported pixel mode {mode!r} (8-bit only)")
            if mode in ("1", "L", "LA", "La"):
                im = im.convert("L")
            elif mode == "P":
                im = im.convert("RGBA" if "transparency" in im.info else "RGB")
                if im.mode == "RGBA":
                    im = im.convert("RGB")
            elif mode != "RGB":
                im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise CorruptStreamError(f"cannot decode image: {exc}") from exc
    if arr.size == 0:
        raise ZeroDimensionError("image has a zero dimension")
    return RasterImage.from_array(arr)


def decode_image(data: bytes) -> RasterImage:
    """Decode PNG, JPEG or binary PPM/PGM bytes.

    Alpha is dropped; single-channel sources stay single-channel.

    Raises
    ------
    UnsupportedFormatError
        Magic bytes are not one of the supported formats.
    CorruptStreamError
        The payload is truncated or invalid.
    ZeroDimensionError
        Width or height is zero.
    """
    if data[:2] in (b"P5", b"P6"):
        return _decode_pnm(data)
    if data[:8] == b"\x89PNG\r\n\x1a\n" or data[:3] == b"\xff\xd8\xff":
        return _decode_pillow(data)
    raise UnsupportedFormatError("unrecognized image magic bytes")


def encode_pnm(img: RasterImage) -> bytes:
    """Encode as binary PGM (1 channel) or PPM (3 channels)."""
    magic = b"P6" if img.channels == 3 else b"P5"
    header = b"%s\n%d %d\n255\n" % (magic, img.width, img.height)
    return header + img.pixels.tobytes()


def to_grayscale(img: RasterImage) -> GrayImage:
    px = img.pixels
    if img.channels == 1:
        return GrayImage(px[:, :, 0].astype(np.float64))
    p = px.astype(np.float64)
    y = 0.299 * p[:, :, 0] + 0.587 * p[:, :, 1] + 0.114 * p[:, :, 2]
    # guard the upper bound against float accumulation (255*1.0000000000000002)
    np.minimum(y, 255.0, out=y)
    return GrayImage(y)


# hue offset in degrees, indexed by (signed channel difference + 255, max - min)
_HUE_RATIO = np.zeros((511, 256))
_HUE_RATIO[:, 1:] = 60.0 * np.arange(-255, 256)[:, None] / np.arange(1, 256)[None, :]
# saturation, indexed by (max - min, max)
_SATURATION = np.zeros((256, 256))
_SATURATION[:, 1:] = np.arange(256)[:, None] / np.arange(1, 256)[None, :]


def to_hsv(img: RasterImage) -> HsvImage:
    """Hexcone RGB to HSV conversion (table-driven on the 8-bit channels)."""
    if img.channels != 3:
        raise NotColorError("HSV conversion needs a 3-channel image")
    px = img.pixels
    r, g, b = px[:, :, 0], px[:, :, 1], px[:, :, 2]
    mx = np.maximum(np.maximum(r, g), b)
    delta = mx - np.minimum(np.minimum(r, g), b)
    r16, g16, b16 = r.astype(np.int16), g.astype(np.int16), b.astype(np.int16)
    is_r = mx == r
    is_g = ~is_r & (mx == g)
    diff = np.where(is_r, g16 - b16, np.where(is_g, b16 - r16, r16 - g16))
    diff += 255
    hue = _HUE_RATIO[diff, delta]
    hue += np.where(is_r, 0.0, np.where(is_g, 120.0, 240.0))
    hue[delta == 0] = 0.0
    hue[hue < 0] += 360.0
    saturation = _SATURATION[delta, mx]
    value = mx / 255.0
    return HsvImage(hue, saturation, value)


def hsv_to_rgb(hsv: HsvImage) -> np.ndarray:
    """Inverse hexcone conversion to an ``(H, W, 3)`` uint8 array (round half up)."""
    h = (hsv.hue % 360.0) / 60.0
    c = hsv.value * hsv.saturation
    x = c * (1 - np.abs(h % 2 - 1))
    m = hsv.value - c
    sector = np.floor(h).astype(int) % 6
    zero = np.zeros_like(c)
    table = [(c, x, zero), (x, c, zero), (zero, c, x), (zero, x, c), (x, zero, c), (c, zero, x)]
    out = np.zeros(h.shape + (3,))
    for k, (rr, gg, bb) in enumerate(table):
        sel = sector == k
        out[sel, 0] = rr[sel]
        out[sel, 1] = gg[sel]
        out[sel, 2] = bb[sel]
    out = (out + m[:, :, None]) * 255.0
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def downsample(img: RasterImage, factor: int) -> RasterImage:
    """Box-filter downsampling by an integer factor in {1, 2, 4, 8}.

    Output dimensions are ``floor(width / factor) x floor(height / factor)``;
    trailing rows/columns that do not fill a block are discarded. Each output
    pixel is the block mean, rounded half up.
    """
    if factor not in FACTORS:
        raise ValidationError(f"factor must be one of {FACTORS}, got {factor!r}")
    if factor == 1:
        return img
    if img.width < factor or img.height < factor:
        raise TooSmallError(f"{img.width}x{img.height} image is smaller than factor {factor}")
    h, w = img.height // factor, img.width // factor
    block = img.pixels[: h * factor, : w * factor].reshape(h, factor, w, factor, img.channels)
    total = block.sum(axis=(1, 3), dtype=np.uint32)
    n = factor * factor
    out = (2 * total + n) // (2 * n)
    return RasterImage(out.astype(np.uint8))
