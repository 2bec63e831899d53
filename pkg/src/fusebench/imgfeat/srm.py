"""Steganalysis-rich-model residuals: the usual three fixed 5x5 high-pass kernels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from fusebench.errors import DomainError
from fusebench.imgfeat.transforms import to_grayscale

DEFAULT_CLAMP = 2.0

# integer taps and their normalisers
_SRM_TAPS = (
    (
        np.array([
            [0, 0, 0, 0, 0],
            [0, -1, 2, -1, 0],
            [0, 2, -4, 2, 0],
            [0, -1, 2, -1, 0],
            [0, 0, 0, 0, 0],
        ]),
        4,
    ),
    (
        np.array([
            [-1, 2, -2, 2, -1],
            [2, -6, 8, -6, 2],
            [-2, 8, -12, 8, -2],
            [2, -6, 8, -6, 2],
            [-1, 2, -2, 2, -1],
        ]),
        12,
    ),
    (
        np.array([
            [0, 0, 0, 0, 0],
            [0, 0, 0, 0, 0],
            [0, 1, -2, 1, 0],
            [0, 0, 0, 0, 0],
            [0, 0, 0, 0, 0],
        ]),
        2,
    ),
)

for _taps, _ in _SRM_TAPS:
    if _taps.sum() != 0:
        raise RuntimeError("SRM kernel taps must sum to zero")

SRM_KERNELS = tuple(taps / float(norm) for taps, norm in _SRM_TAPS)
KERNEL_SIZE = 5


@dataclass(frozen=True)
class ResidualStack:
    planes: tuple[np.ndarray, np.ndarray, np.ndarray]
    clamp_threshold: float

    def as_array(self) -> np.ndarray:
        """Residuals as one ``(H, W, 3)`` feature image."""
        return np.stack(self.planes, axis=-1)


def filter_plane(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Convolve with reflect padding (edge pixel not repeated); output has the input's shape."""
    pad = kernel.shape[0] // 2
    padded = np.pad(plane, pad, mode="reflect")
    windows = sliding_window_view(padded, kernel.shape)
    # For a zero-sum kernel, sum k_i x_i == sum k_i (x_i - x_centre); the differenced
    # form is exactly zero on flat regions instead of carrying rounding residue.
    if abs(kernel.sum()) <= 1e-12 * np.abs(kernel).sum():
        windows = windows - plane[:, :, None, None]
    # the kernels are point-symmetric, but flip anyway so this is a true convolution
    return np.einsum("ijkl,kl->ij", windows, kernel[::-1, ::-1])


def srm_residuals(rgb, clamp_threshold: float = DEFAULT_CLAMP) -> ResidualStack:
    """Filter the luma plane with the three SRM kernels and clamp to ``±clamp_threshold``."""
    if not clamp_threshold > 0:
        raise DomainError(f"clamp_threshold must be positive, got {clamp_threshold}")
    arr = np.asarray(rgb, dtype=float)
    luma = arr if arr.ndim == 2 else to_grayscale(arr)
    if luma.shape[0] < KERNEL_SIZE or luma.shape[1] < KERNEL_SIZE:
        raise DomainError(f"image {luma.shape[1]}x{luma.shape[0]} is smaller than the 5x5 SRM kernels")
    planes = tuple(np.clip(filter_plane(luma, k), -clamp_threshold, clamp_threshold) for k in SRM_KERNELS)
    return ResidualStack(planes, float(clamp_threshold))
