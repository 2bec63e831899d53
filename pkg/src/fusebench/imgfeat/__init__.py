"""Image preprocessing and forensic feature extraction."""

from fusebench.imgfeat.dct import dct2, dct_features, idct2
from fusebench.imgfeat.extract import ExtractOptions, extract_directory, extract_features
from fusebench.imgfeat.retouch import synth_retouch, total_variation
from fusebench.imgfeat.srm import SRM_KERNELS, ResidualStack, srm_residuals
from fusebench.imgfeat.transforms import BoundingBox, crop, resize_bilinear, to_grayscale

__all__ = [
    "BoundingBox",
    "ExtractOptions",
    "ResidualStack",
    "SRM_KERNELS",
    "crop",
    "dct2",
    "dct_features",
    "extract_directory",
    "extract_features",
    "idct2",
    "resize_bilinear",
    "srm_residuals",
    "synth_retouch",
    "to_grayscale",
    "total_variation",
]
