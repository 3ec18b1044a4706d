"""Landmark-centered binary masks over feature-map grids.

A mask is an HxW grid of ones with one rectangular hole of zeros.  The
radius form erases rows ``cx - r .. cx + r - 1`` and columns
``cy - r .. cy + r - 1`` (a 2r-sided hole, clipped at the borders); the
side form generalizes to odd hole widths via
``c - floor(s/2) .. c + ceil(s/2) - 1``.

Coordinates are 0-based with x indexing rows (height) and y indexing
columns (width).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import MaskCoversGridWarning

# fractional (row, col) positions of the five landmarks: left eye, right
# eye, nose tip, left mouth corner, right mouth corner
LANDMARK_FRACTIONS = (
    (0.30, 0.30),
    (0.30, 0.70),
    (0.55, 0.50),
    (0.75, 0.35),
    (0.75, 0.65),
)


@dataclass(frozen=True)
class Mask:
    grid: np.ndarray  # (H, W) float64 of 0.0 / 1.0
    center: tuple[int, int]
    side: int  # hole width before clipping

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape

    def mirrored(self) -> "Mask":
        """Mask for the width-mirrored input."""
        h, w = self.grid.shape
        cx, cy = self.center
        return Mask(np.ascontiguousarray(self.grid[:, ::-1]), (cx, w - 1 - cy), self.side)


def make_mask_side(center: tuple[int, int], side: int, height: int, width: int) -> Mask:
    """Mask with a hole of the given side length centered near ``center``."""
    cx, cy = int(center[0]), int(center[1])
    if side < 1:
        raise ValueError(f"hole side must be >= 1, got {side}")
    if not (0 <= cx < height and 0 <= cy < width):
        raise ValueError(f"center {center} outside {height}x{width} grid")
    grid = np.ones((height, width), dtype=np.float64)
    lo = side // 2
    hi = side - lo  # rows cx-lo .. cx+hi-1
    x0, x1 = max(cx - lo, 0), min(cx + hi, height)
    y0, y1 = max(cy - lo, 0), min(cy + hi, width)
    grid[x0:x1, y0:y1] = 0.0
    if not grid.any():
        warnings.warn(
            f"mask hole ({side}x{side} at {center}) covers the whole {height}x{width} grid",
            MaskCoversGridWarning,
            stacklevel=2,
        )
    return Mask(grid, (cx, cy), side)


def make_mask(center: tuple[int, int], r: int, height: int, width: int) -> Mask:
    """Mask with a (2r)x(2r) hole; ``r`` is the erase radius in cells."""
    if r < 1:
        raise ValueError(f"radius must be >= 1, got {r}")
    return make_mask_side(center, 2 * r, height, width)


def apply_mask(feature_map: np.ndarray, mask: Mask) -> np.ndarray:
    """Multiply every channel of a (..., C, H, W) map by the mask grid."""
    fm = np.asarray(feature_map, dtype=np.float64)
    if fm.ndim < 2 or fm.shape[-2:] != mask.grid.shape:
        raise ValueError(f"feature map spatial dims {fm.shape[-2:]} != mask dims {mask.grid.shape}")
    return fm * mask.grid


def global_average_pool(feature_map: np.ndarray) -> np.ndarray:
    """Per-channel mean over all H*W cells (masked zeros included)."""
    fm = np.asarray(feature_map, dtype=np.float64)
    if fm.ndim < 3:
        raise ValueError(f"expected a (..., C, H, W) map, got shape {fm.shape}")
    return fm.mean(axis=(-2, -1))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def landmark_centers(height: int, width: int) -> list[tuple[int, int]]:
    """The five fractional landmark positions scaled to a grid."""
    return [(_round_half_up(fx * height), _round_half_up(fy * width)) for fx, fy in LANDMARK_FRACTIONS]


def default_landmark_masks_side(height: int, width: int, side: int) -> list[Mask]:
    """Five masks with holes of the given side at the landmark positions."""
    if side < 1:
        raise ValueError(f"hole side must be >= 1, got {side}")
    if height < side or width < side:
        raise ValueError(f"grid {height}x{width} too small for a {side}-wide hole")
    return [make_mask_side(c, side, height, width) for c in landmark_centers(height, width)]


def default_landmark_masks(height: int, width: int, r: int) -> list[Mask]:
    """Five landmark masks with (2r)x(2r) holes."""
    if r < 1:
        raise ValueError(f"radius must be >= 1, got {r}")
    return default_landmark_masks_side(height, width, 2 * r)


def mask_to_text(mask: Mask) -> str:
    """Plain-text grid: one row of 0/1 characters per line."""
    return "\n".join("".join(str(int(v)) for v in row) for row in mask.grid) + "\n"


def mask_from_text(text: str, center: tuple[int, int] = (0, 0), side: int = 0) -> Mask:
    """Parse ``mask_to_text`` output; center/side metadata is optional."""
    rows = [line for line in text.splitlines() if line]
    if not rows or any(len(r) != len(rows[0]) for r in rows):
        raise ValueError("mask text rows must be non-empty and equal length")
    grid = np.array([[float(ch) for ch in row] for row in rows])
    if not np.all((grid == 0) | (grid == 1)):
        raise ValueError("mask text must contain only 0 and 1")
    return Mask(grid, center, side)
