"""Image, bounding-box sidecar and feature-tensor files.

Feature tensor layout: one ASCII header line ``width,height,planes`` followed
by ``planes * height * width`` little-endian float32 values, plane-major and
row-major within a plane.
"""

from __future__ import annotations

import csv
import os
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from fusebench.errors import ParseError
from fusebench.imgfeat.transforms import BoundingBox

IMAGE_SUFFIXES = (".png", ".ppm")
BOX_HEADER = ("sample_id", "x", "y", "w", "h")


def list_images(directory: str | os.PathLike) -> list[Path]:
    return sorted(p for p in Path(directory).iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


def read_image(path: str | os.PathLike) -> np.ndarray:
    """Decode an 8-bit PNG or binary PPM to an ``(H, W, 3)`` float array in 0..255."""
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=float)
    except UnidentifiedImageError:
        raise ParseError("not a decodable PNG/PPM image", path=os.fspath(path)) from None


def write_image(path: str | os.PathLike, rgb: np.ndarray) -> None:
    """Round, clip to 0..255 and save; format follows the suffix (.png or .ppm)."""
    arr = np.clip(np.rint(np.asarray(rgb, dtype=float)), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path)


def read_boxes(path: str | os.PathLike) -> dict[str, BoundingBox]:
    path = os.fspath(path)
    boxes: dict[str, BoundingBox] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != BOX_HEADER:
            raise ParseError(f"header must be {','.join(BOX_HEADER)}", line=1, path=path)
        for row in reader:
            if not row:
                continue
            if len(row) != 5:
                raise ParseError(f"expected 5 fields, got {len(row)}", line=reader.line_num, path=path)
            try:
                x, y, w, h = (int(v) for v in row[1:])
                boxes[row[0].strip()] = BoundingBox(x, y, w, h)
            except ValueError as exc:
                raise ParseError(str(exc), line=reader.line_num, path=path) from None
    return boxes


def write_boxes(boxes: dict[str, BoundingBox], path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BOX_HEADER)
        for sid in sorted(boxes):
            b = boxes[sid]
            w.writerow([sid, b.x, b.y, b.w, b.h])


def write_tensor(path: str | os.PathLike, features: np.ndarray) -> None:
    """Write a plane ``(H, W)`` or feature image ``(H, W, P)`` as a float32 tensor file."""
    arr = np.asarray(features, dtype="<f4")
    if arr.ndim == 2:
        arr = arr[..., None]
    height, width, planes = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"{width},{height},{planes}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(np.moveaxis(arr, -1, 0)).tobytes())


def read_tensor(path: str | os.PathLike) -> np.ndarray:
    """Inverse of ``write_tensor``; always returns ``(H, W, P)``."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").strip()
        try:
            width, height, planes = (int(v) for v in header.split(","))
        except ValueError:
            raise ParseError(f"bad tensor header {header!r}", line=1, path=os.fspath(path)) from None
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != width * height * planes:
        raise ParseError(f"tensor holds {data.size} values, header says {width * height * planes}",
                         path=os.fspath(path))
    return np.moveaxis(data.reshape(planes, height, width), 0, -1)
