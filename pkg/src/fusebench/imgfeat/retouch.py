"""Synthetic retouching: whole-image edge-preserving smoothing.

Stands in for commercial beauty filters, which mostly flatten skin texture.
"""

from __future__ import annotations

import math

import numpy as np

from fusebench.errors import DomainError
from fusebench.imgfeat.transforms import as_rgb


def bilateral(rgb: np.ndarray, sigma_spatial: float, sigma_range: float) -> np.ndarray:
    """Bilateral filter with a joint colour range kernel and reflect-padded borders."""
    img = as_rgb(rgb)
    radius = max(1, math.ceil(2.0 * sigma_spatial))
    h, w, _ = img.shape
    pad = min(radius, h - 1, w - 1)
    if pad < 1:
        return img.copy()
    padded = np.pad(img, ((pad, pad), (pad, pad), (0, 0)), mode="reflect")
    acc = np.zeros_like(img)
    norm = np.zeros((h, w))
    inv_s = 1.0 / (2.0 * sigma_spatial ** 2)
    inv_r = 1.0 / (2.0 * sigma_range ** 2)
    for dy in range(-pad, pad + 1):
        for dx in range(-pad, pad + 1):
            ws = math.exp(-(dx * dx + dy * dy) * inv_s)
            if ws < 1e-12:
                continue
            shifted = padded[pad + dy:pad + dy + h, pad + dx:pad + dx + w]
            diff = shifted - img
            wgt = ws * np.exp(-np.einsum("ijc,ijc->ij", diff, diff) * inv_r)
            acc += wgt[..., None] * shifted
            norm += wgt
    return acc / norm[..., None]


def synth_retouch(rgb, strength: float) -> np.ndarray:
    """Smooth the whole image; spatial sigma 6*strength px, range sigma 30*strength grey levels.

    Deterministic in ``(rgb, strength)``. Small strengths leave the image almost
    untouched; the output keeps the input's float dtype and 0..255 scale.
    """
    if not 0.0 < strength <= 1.0:
        raise DomainError(f"strength must be in (0, 1], got {strength}")
    return bilateral(rgb, sigma_spatial=3.0 * strength * 2.0, sigma_range=30.0 * strength)


def total_variation(image) -> float:
    """Anisotropic total variation summed over channels."""
    arr = np.asarray(image, dtype=float)
    return float(np.abs(np.diff(arr, axis=0)).sum() + np.abs(np.diff(arr, axis=1)).sum())
