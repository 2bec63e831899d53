"""Grayscale conversion, bounding-box crop and bilinear resize.

Images are numpy arrays: a plane is ``(height, width)``, an RGB image is
``(height, width, 3)``, values are reals on the 0..255 scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fusebench.errors import DomainError

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class BoundingBox:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self) -> None:
        if self.w <= 0 or self.h <= 0:
            raise DomainError(f"bounding box needs positive size, got {self.w}x{self.h}")


def as_rgb(image) -> np.ndarray:
    """Accept an ``(H, W, 3)`` array or a sequence of three equal-sized planes."""
    if isinstance(image, (list, tuple)):
        if len(image) != 3:
            raise DomainError(f"expected 3 planes, got {len(image)}")
        planes = [np.asarray(p, dtype=float) for p in image]
        if any(p.ndim != 2 for p in planes) or len({p.shape for p in planes}) != 1:
            raise DomainError(f"plane dimensions differ: {[p.shape for p in planes]}")
        return np.stack(planes, axis=-1)
    arr = np.asarray(image, dtype=float)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DomainError(f"expected an (H, W, 3) image, got shape {arr.shape}")
    return arr


def to_grayscale(rgb) -> np.ndarray:
    """ITU-R BT.601 luma."""
    img = as_rgb(rgb)
    r, g, b = LUMA_WEIGHTS
    return r * img[..., 0] + g * img[..., 1] + b * img[..., 2]


def crop_bounds(shape: tuple[int, ...], box: BoundingBox, margin: int = 0) -> tuple[int, int, int, int]:
    """``(x0, y0, x1, y1)`` of ``box`` grown by ``margin`` and clipped to an image of ``shape``."""
    if margin < 0:
        raise DomainError(f"margin must be >= 0, got {margin}")
    height, width = shape[:2]
    x0 = max(0, box.x - margin)
    y0 = max(0, box.y - margin)
    x1 = min(width, box.x + box.w + margin)
    y1 = min(height, box.y + box.h + margin)
    if x0 >= x1 or y0 >= y1:
        raise DomainError(f"box {box} with margin {margin} lies outside the {width}x{height} image")
    return x0, y0, x1, y1


def crop(image: np.ndarray, box: BoundingBox, margin: int = 0) -> np.ndarray:
    x0, y0, x1, y1 = crop_bounds(np.shape(image), box, margin)
    return np.asarray(image)[y0:y1, x0:x1].copy()


def _axis_weights(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # pixel-centre alignment, edge samples replicated
    pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, pos - lo


def resize_bilinear(plane: np.ndarray, out_h: int, out_w: int | None = None) -> np.ndarray:
    out_w = out_h if out_w is None else out_w
    plane = np.asarray(plane, dtype=float)
    if plane.ndim != 2:
        raise DomainError(f"expected a 2-D plane, got shape {plane.shape}")
    if out_h < 1 or out_w < 1:
        raise DomainError("output size must be positive")
    r0, r1, rf = _axis_weights(plane.shape[0], out_h)
    c0, c1, cf = _axis_weights(plane.shape[1], out_w)
    rows = plane[r0] * (1 - rf)[:, None] + plane[r1] * rf[:, None]
    return rows[:, c0] * (1 - cf)[None, :] + rows[:, c1] * cf[None, :]
