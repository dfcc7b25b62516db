"""Raster image helpers: sRGB transfer, PNG IO, downsampling, RMSE."""
from __future__ import annotations

import numpy as np


def srgb_encode(linear):
    """Linear [0, 1] values to the sRGB transfer encoding."""
    c = np.asarray(linear, dtype=float)
    low = c <= 0.0031308
    out = np.where(low, 12.92 * c, 1.055 * np.power(np.maximum(c, 1e-12), 1.0 / 2.4) - 0.055)
    return out


def srgb_decode(encoded):
    """sRGB-encoded [0, 1] values back to linear."""
    c = np.asarray(encoded, dtype=float)
    low = c <= 0.04045
    return np.where(low, c / 12.92, np.power((c + 0.055) / 1.055, 2.4))


def tonemap_to_bytes(linear):
    """Clamp, sRGB-encode, and quantize a linear (H, W, 3) image to uint8."""
    enc = srgb_encode(np.clip(linear, 0.0, 1.0))
    return np.round(enc * 255.0).astype(np.uint8)


def write_png(path, linear):
    """Write a linear-space (H, W, 3) float image as an 8-bit sRGB PNG."""
    from PIL import Image

    data = tonemap_to_bytes(linear)
    Image.fromarray(data, mode="RGB").save(path, format="PNG", compress_level=6)


def read_png_bytes(path):
    """PNG file as a (H, W, 3) uint8 array of sRGB-encoded values."""
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def load_linear_image(path):
    """Load a raster reference as a linear (H, W, 3) float array.

    8-bit images are assumed sRGB-encoded and are decoded; .npy arrays are
    taken as already linear.
    """
    path = str(path)
    if path.endswith(".npy"):
        arr = np.asarray(np.load(path), dtype=float)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError("raster reference .npy must have shape (H, W, 3)")
        return arr
    return srgb_decode(read_png_bytes(path).astype(float) / 255.0)


def box_downsample(img, factor):
    """Average non-overlapping factor x factor blocks."""
    img = np.asarray(img, dtype=float)
    h, w = img.shape[0], img.shape[1]
    if h % factor or w % factor:
        raise ValueError("image size must be divisible by the downsampling factor")
    return img.reshape(h // factor, factor, w // factor, factor, -1).mean(axis=(1, 3))


def rmse(a, b):
    """Root-mean-square difference over all pixels and channels."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.mean((a - b) ** 2)))
