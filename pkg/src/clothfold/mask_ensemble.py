"""Combine candidate segmentation masks into Full, Bottom and Upper cloth masks.

Candidate masks come from files (one per prompt); nothing here runs a
segmentation model.  Images are portable pixmaps (P6) and masks portable
graymaps (P5) with 0 for unset and 255 for set pixels.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InvalidArgument


@dataclass(frozen=True, eq=False)
class RasterImage:
    pixels: np.ndarray  # (height, width, 3) uint8

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3 or self.pixels.dtype != np.uint8:
            raise InvalidArgument("RasterImage needs an (h, w, 3) uint8 array")

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]


@dataclass(frozen=True, eq=False)
class BinaryMask:
    bits: np.ndarray  # (height, width) bool

    def __post_init__(self):
        if self.bits.ndim != 2 or self.bits.dtype != np.bool_:
            raise InvalidArgument("BinaryMask needs an (h, w) bool array")

    @property
    def height(self):
        return self.bits.shape[0]

    @property
    def width(self):
        return self.bits.shape[1]

    @property
    def count(self):
        return int(np.count_nonzero(self.bits))

    def __eq__(self, other):
        return isinstance(other, BinaryMask) and np.array_equal(self.bits, other.bits)

    __hash__ = None


@dataclass(frozen=True)
class ColorSpec:
    """Target color, per-channel distance ``r`` and the vote fraction ``theta``."""

    color: tuple = (0, 0, 0)
    r: float = 40
    theta: float = 0.5

    def __post_init__(self):
        if len(self.color) != 3 or any(not 0 <= c <= 255 for c in self.color):
            raise InvalidArgument("color must be an RGB triple in [0, 255]")
        if self.r < 0:
            raise InvalidArgument("r must be >= 0")
        if not 0.0 < self.theta <= 1.0:
            raise InvalidArgument("theta must lie in (0, 1]")


def _check_shapes(masks, shape=None):
    if not masks:
        raise InvalidArgument("need at least one mask")
    shape = shape or masks[0].bits.shape
    for m in masks:
        if m.bits.shape != shape:
            raise InvalidArgument(f"mask shape {m.bits.shape} does not match {shape}")


def aggregate_full(masks):
    """Pixelwise OR of every candidate mask."""
    masks = list(masks)
    _check_shapes(masks)
    return BinaryMask(reduce(np.logical_or, (m.bits for m in masks)).copy())


def color_fraction(mask, rgb, spec):
    """Share of the mask's set pixels whose color is within ``spec.r`` of the target."""
    n = mask.count
    if n == 0:
        return 0.0
    diff = np.abs(rgb.pixels.astype(np.int16) - np.asarray(spec.color, dtype=np.int16))
    close = np.all(diff <= spec.r, axis=2)
    return np.count_nonzero(close & mask.bits) / n


def bottom_votes(masks, rgb, spec):
    """Indices of the masks whose color fraction reaches ``spec.theta``."""
    masks = list(masks)
    _check_shapes(masks, (rgb.height, rgb.width))
    return [i for i, m in enumerate(masks) if m.count and color_fraction(m, rgb, spec) >= spec.theta]


def select_bottom(masks, rgb, spec):
    """OR of the masks that vote for the target color; may be empty."""
    masks = list(masks)
    bits = np.zeros((rgb.height, rgb.width), dtype=bool)
    for i in bottom_votes(masks, rgb, spec):
        bits |= masks[i].bits
    return BinaryMask(bits)


def derive_upper(full, bottom):
    if full.bits.shape != bottom.bits.shape:
        raise InvalidArgument("full and bottom masks differ in shape")
    return BinaryMask(full.bits & ~bottom.bits)


def ensemble(masks, rgb, spec):
    """Return the ``(full, bottom, upper)`` masks."""
    full = aggregate_full(masks)
    _check_shapes(list(masks), (rgb.height, rgb.width))
    bottom = select_bottom(masks, rgb, spec)
    return full, bottom, derive_upper(full, bottom)


# -- portable anymap I/O ------------------------------------------------------

def read_image(path):
    with Image.open(path) as im:
        if im.format != "PPM" or im.mode != "RGB":
            raise InvalidArgument(f"{path}: expected a binary RGB pixmap (P6)")
        return RasterImage(np.array(im, dtype=np.uint8))


def read_mask(path):
    with Image.open(path) as im:
        if im.format != "PPM" or im.mode != "L":
            raise InvalidArgument(f"{path}: expected a binary graymap (P5)")
        data = np.array(im, dtype=np.uint8)
    if not np.all((data == 0) | (data == 255)):
        raise InvalidArgument(f"{path}: mask values must be 0 or 255")
    return BinaryMask(data == 255)


def write_image(img, path):
    Image.fromarray(img.pixels, mode="RGB").save(Path(path), format="PPM")


def write_mask(mask, path):
    Image.fromarray(np.where(mask.bits, 255, 0).astype(np.uint8), mode="L").save(
        Path(path), format="PPM")
