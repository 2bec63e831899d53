"""Orthonormal 2-D DCT-II and high-frequency DCT feature planes."""

from __future__ import annotations

import numpy as np
from scipy import fft

from fusebench.errors import DomainError
from fusebench.imgfeat.transforms import resize_bilinear

DEFAULT_OUT_SIZE = 256
DEFAULT_LOW_FREQ_CUT = 8


def dct2(plane) -> np.ndarray:
    """Separable orthonormal DCT-II (rows, then columns); same shape as the input."""
    arr = np.asarray(plane, dtype=float)
    if arr.ndim != 2 or min(arr.shape) < 1:
        raise DomainError(f"expected a non-empty 2-D plane, got shape {arr.shape}")
    return fft.dct(fft.dct(arr, type=2, norm="ortho", axis=1), type=2, norm="ortho", axis=0)


def idct2(spectrum) -> np.ndarray:
    arr = np.asarray(spectrum, dtype=float)
    if arr.ndim != 2 or min(arr.shape) < 1:
        raise DomainError(f"expected a non-empty 2-D spectrum, got shape {arr.shape}")
    return fft.idct(fft.idct(arr, type=2, norm="ortho", axis=0), type=2, norm="ortho", axis=1)


def signed_log(values: np.ndarray) -> np.ndarray:
    return np.sign(values) * np.log1p(np.abs(values))


def dct_features(plane, low_freq_cut: int = DEFAULT_LOW_FREQ_CUT,
                 out_size: int = DEFAULT_OUT_SIZE) -> np.ndarray:
    """High-frequency DCT feature plane.

    The plane is resized to ``out_size`` squared, transformed, the top-left
    ``low_freq_cut`` squared block of low frequencies is zeroed and the rest is
    compressed with ``sign(c) * ln(1 + |c|)``.
    """
    if not 0 <= low_freq_cut < out_size:
        raise DomainError(f"low_freq_cut must be in [0, {out_size}), got {low_freq_cut}")
    spectrum = dct2(resize_bilinear(plane, out_size, out_size))
    spectrum[:low_freq_cut, :low_freq_cut] = 0.0
    return signed_log(spectrum)
