"""Image and mask file I/O (PPM/PNG in, PNG out) and padding to the model stride."""

from pathlib import Path
from typing import Tuple, Union

import numpy as np
from matplotlib.colors import hsv_to_rgb
from PIL import Image, UnidentifiedImageError

from .errors import DataError, ValidationError

GOLDEN_RATIO_CONJUGATE = 0.618033988749895
PALETTE_SIZE = 256

PathLike = Union[str, Path]


def class_color(label: int) -> np.ndarray:
    """Fixed RGB colour in [0, 1] for a class label; label 1 is a muted background."""
    if label <= 1:
        return np.array([0.35, 0.35, 0.38]) if label == 1 else np.zeros(3)
    hue = (label * GOLDEN_RATIO_CONJUGATE) % 1.0
    return hsv_to_rgb([hue, 0.85, 0.95])


def mask_palette() -> bytes:
    colors = np.stack([class_color(i) for i in range(PALETTE_SIZE)])
    return (np.round(colors * 255)).astype(np.uint8).tobytes()


def read_image(path: PathLike) -> np.ndarray:
    """RGB image → float32 (3, H, W) in [0, 1]."""
    try:
        with Image.open(path) as img:
            rgb = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    except (OSError, UnidentifiedImageError) as e:
        raise DataError(f"cannot read image {path}: {e}") from e
    return np.ascontiguousarray(np.moveaxis(rgb, -1, 0))


def write_image(path: PathLike, image: np.ndarray) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    pixels = np.round(np.clip(np.moveaxis(image, 0, -1), 0.0, 1.0) * 255).astype(np.uint8)
    Image.fromarray(np.ascontiguousarray(pixels)).save(target)
    return target


def write_mask(path: PathLike, mask: np.ndarray) -> Path:
    """Label mask → indexed-palette PNG (pixel value = class label)."""
    mask = np.asarray(mask)
    if mask.ndim != 2 or (mask.size and (mask.min() < 0 or mask.max() >= PALETTE_SIZE)):
        raise ValidationError("mask must be 2-D with labels in [0, 255]")
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    height, width = mask.shape
    img = Image.frombytes("P", (width, height), mask.astype(np.uint8).tobytes())
    img.putpalette(mask_palette())
    img.save(target, format="PNG")
    return target


def read_mask(path: PathLike) -> np.ndarray:
    try:
        with Image.open(path) as img:
            if img.mode not in ("P", "L"):
                raise DataError(f"{path} is not an indexed or grayscale mask")
            return np.array(img, dtype=np.uint8)
    except (OSError, UnidentifiedImageError) as e:
        raise DataError(f"cannot read mask {path}: {e}") from e


def pad_to_multiple(image: np.ndarray, multiple: int) -> Tuple[np.ndarray, Tuple[int, int]]:
    """Edge-pad (3, H, W) up to multiples of `multiple`; returns the original (H, W)."""
    height, width = image.shape[1:]
    pad_h = -height % multiple
    pad_w = -width % multiple
    if pad_h or pad_w:
        image = np.pad(image, ((0, 0), (0, pad_h), (0, pad_w)), mode="edge")
    return image, (height, width)
