"""Loading inference inputs from CSV files or images."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

from ..errors import ShapeMismatchError
from .tensor_csv import read_csv_values

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tif", ".tiff", ".webp"}


def load_image(path: Union[str, Path], channels: int, width: int) -> np.ndarray:
    """Decode an image into a (C, W, W) array scaled to [0, 1]."""
    mode = "L" if channels == 1 else "RGB"
    with Image.open(path) as im:
        im = im.convert(mode)
        if im.size != (width, width):
            logger.info(f"Resizing {path} from {im.size} to {width}x{width}")
            im = im.resize((width, width), Image.Resampling.BILINEAR)
        arr = np.asarray(im, dtype=np.float64) / 255.0
    if channels == 1:
        return arr[np.newaxis]
    if channels != 3:
        raise ShapeMismatchError(f"images provide 1 or 3 channels, model expects {channels}")
    return np.transpose(arr, (2, 0, 1))


def load_input(path: Union[str, Path], channels: int, width: int) -> np.ndarray:
    """Read one input tensor from a row-major CSV or an image file."""
    path = Path(path)
    if path.suffix.lower() in IMAGE_SUFFIXES:
        return load_image(path, channels, width)
    values = read_csv_values(path)
    expected = channels * width * width
    if values.size != expected:
        raise ShapeMismatchError(
            f"{path}: expected {expected} values for a {channels}x{width}x{width} input, found {values.size}"
        )
    return values.reshape(channels, width, width)
