"""PNG input/output and dataset manifests."""

import logging
from pathlib import Path

import numpy as np
from PIL import Image

from apps.core.exceptions import DatasetError

from .ops import check_image, to_uint8

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png",)
MANIFEST_NAME = "manifest.txt"


def load_image(path):
    """Read an 8-bit RGB PNG into a float32 H×W×3 raster in [0, 1]."""
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"Image not found: {path}", path=str(path))
    with Image.open(path) as img:
        pixels = np.asarray(img.convert("RGB"), dtype=np.float32)
    return pixels / 255.0


def save_image(path, img):
    """Write a [0, 1] raster as an 8-bit RGB PNG."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(check_image(img)), mode="RGB").save(path, format="PNG")
    return path


def list_images(directory):
    directory = Path(directory)
    if not directory.is_dir():
        raise DatasetError(f"Directory not found: {directory}", path=str(directory))
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def write_manifest(root, entries):
    """
    Write ``manifest.txt``: one tab-separated line per LR image,
    ``split  lr_path  hr_path`` with paths relative to the dataset root.
    """
    root = Path(root)
    lines = [f"{split}\t{lr}\t{hr}" for split, lr, hr in entries]
    (root / MANIFEST_NAME).write_text("\n".join(lines) + "\n")
    return root / MANIFEST_NAME


def read_manifest(root):
    root = Path(root)
    path = root / MANIFEST_NAME
    if not path.is_file():
        raise DatasetError(f"Manifest not found: {path}", path=str(path))
    entries = []
    for number, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise DatasetError(f"Malformed manifest line {number} in {path}")
        entries.append(tuple(fields))
    return entries
