"""Per-image feature extraction (rgb / dct / srm) and directory batch runs."""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from fusebench.errors import ConsistencyError, DomainError
from fusebench.imgfeat.dct import DEFAULT_LOW_FREQ_CUT, DEFAULT_OUT_SIZE, dct_features
from fusebench.imgfeat.io import list_images, read_image, write_tensor
from fusebench.imgfeat.srm import DEFAULT_CLAMP, srm_residuals
from fusebench.imgfeat.transforms import BoundingBox, crop, to_grayscale

log = logging.getLogger(__name__)

METHODS = ("rgb", "dct", "srm")


@dataclass(frozen=True)
class ExtractOptions:
    method: str = "srm"
    margin: int = 0
    low_freq_cut: int = DEFAULT_LOW_FREQ_CUT
    out_size: int = DEFAULT_OUT_SIZE
    clamp_threshold: float = DEFAULT_CLAMP

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise DomainError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.margin < 0:
            raise DomainError("margin must be >= 0")


def extract_features(rgb: np.ndarray, options: ExtractOptions, box: BoundingBox | None = None) -> np.ndarray:
    """Crop (when a box is given) and compute the feature image for one RGB image."""
    img = crop(rgb, box, options.margin) if box is not None else np.asarray(rgb, dtype=float)
    if options.method == "rgb":
        return img
    if options.method == "dct":
        return dct_features(to_grayscale(img), options.low_freq_cut, options.out_size)
    return srm_residuals(img, options.clamp_threshold).as_array()


def extract_directory(images_dir: str | os.PathLike, out_dir: str | os.PathLike, options: ExtractOptions,
                      boxes: Mapping[str, BoundingBox] | None = None) -> Path:
    """Extract features for every PNG/PPM in ``images_dir``; returns the manifest path.

    With ``boxes`` every image must have a box keyed by its file stem.
    """
    images = list_images(images_dir)
    if not images:
        raise DomainError(f"no images (.png/.ppm) in {images_dir}")
    if boxes is not None:
        missing = [p.stem for p in images if p.stem not in boxes]
        if missing:
            raise ConsistencyError(f"no bounding box for {len(missing)} image(s), e.g. {missing[0]!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = out / "manifest.csv"
    with open(manifest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "path", "width", "height", "planes"])
        for path in images:
            feats = extract_features(read_image(path), options, boxes[path.stem] if boxes else None)
            feats = feats if feats.ndim == 3 else feats[..., None]
            target = out / f"{path.stem}.{options.method}.f32"
            write_tensor(target, feats)
            w.writerow([path.stem, target.name, feats.shape[1], feats.shape[0], feats.shape[2]])
            log.debug("extracted %s -> %s %s", path.name, target.name, feats.shape)
    return manifest
