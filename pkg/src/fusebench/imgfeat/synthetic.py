"""Procedural face-like test images for desk-scale runs."""

from __future__ import annotations

import numpy as np

from fusebench.imgfeat.transforms import BoundingBox


def _smooth_noise(rng: np.random.Generator, size: int, cells: int) -> np.ndarray:
    coarse = rng.normal(size=(cells + 1, cells + 1))
    idx = np.linspace(0, cells, size)
    i0 = np.minimum(np.floor(idx).astype(int), cells - 1)
    f = idx - i0
    rows = coarse[i0] * (1 - f)[:, None] + coarse[i0 + 1] * f[:, None]
    return rows[:, i0] * (1 - f)[None, :] + rows[:, i0 + 1] * f[None, :]


def _ellipse(yy, xx, cy, cx, ry, rx) -> np.ndarray:
    return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0


def make_face(rng: np.random.Generator, size: int = 96) -> tuple[np.ndarray, BoundingBox]:
    """One synthetic subject: smooth background, skin-toned ellipse with eyes and mouth,
    and a per-subject amount of fine skin texture (what retouching removes).

    Returns the float RGB image (0..255) and the face bounding box.
    """
    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    bg_a, bg_b = rng.uniform(40, 200, 3), rng.uniform(40, 200, 3)
    ramp = (xx + yy)[..., None] / (2 * size)
    img = bg_a * (1 - ramp) + bg_b * ramp
    img += 12.0 * _smooth_noise(rng, size, 4)[..., None]

    cy = size / 2 + rng.uniform(-3, 3)
    cx = size / 2 + rng.uniform(-3, 3)
    ry, rx = size * rng.uniform(0.33, 0.38), size * rng.uniform(0.26, 0.30)
    face = _ellipse(yy, xx, cy, cx, ry, rx)
    skin = np.array([rng.uniform(150, 235), rng.uniform(110, 185), rng.uniform(80, 160)])
    shade = 1.0 - 0.25 * (((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2)
    img[face] = (skin * shade[..., None])[face]

    eye_dy, eye_dx = ry * 0.25, rx * 0.4
    for sx in (-1, 1):
        eye = _ellipse(yy, xx, cy - eye_dy, cx + sx * eye_dx, ry * 0.08, rx * 0.16)
        img[eye] = rng.uniform(20, 60, 3)
    mouth = _ellipse(yy, xx, cy + ry * 0.5, cx, ry * 0.07, rx * 0.35)
    img[mouth] = [rng.uniform(140, 200), rng.uniform(40, 80), rng.uniform(50, 90)]

    texture_sigma = rng.uniform(3.0, 9.0)
    grain = rng.normal(0.0, texture_sigma, size=(size, size))
    pores = (rng.random((size, size)) < 0.03) * -rng.uniform(10, 30)
    img[face] += (grain + pores)[face][:, None]
    img[~face] += rng.normal(0.0, 1.5, size=(int((~face).sum()), 3))

    y0, y1 = int(np.floor(cy - ry)), int(np.ceil(cy + ry))
    x0, x1 = int(np.floor(cx - rx)), int(np.ceil(cx + rx))
    box = BoundingBox(max(0, x0), max(0, y0), min(size, x1) - max(0, x0), min(size, y1) - max(0, y0))
    return np.clip(img, 0, 255), box
