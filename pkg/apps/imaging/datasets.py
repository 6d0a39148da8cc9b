"""Building and loading unpaired datasets on disk.

Layout::

    <root>/hr/*.png           HR sources (cropped to a multiple of the scale)
    <root>/lr/*.png           degraded LR images, several per HR source
    <root>/val/hr, val/lr     held-out pairs for evaluation with ground truth
    <root>/manifest.txt       split, LR path, HR path per LR image
    <root>/degradations.json  DegradationSpec of every LR image
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from tqdm import tqdm

from apps.core.exceptions import DatasetError
from apps.core.utils import read_json, write_json

from .degrade import DegradationRanges, random_degradation, synth_degrade
from .files import (
    MANIFEST_NAME,
    list_images,
    load_image,
    read_manifest,
    save_image,
    write_manifest,
)
from .ops import bicubic_upscale, check_scale, predetermined_downscale
from .serializers import DegradationSpecSerializer

logger = logging.getLogger(__name__)

TRAIN = "train"
VAL = "val"
DEGRADATIONS_NAME = "degradations.json"


def _crop_to_multiple(img, scale):
    h = img.shape[0] - img.shape[0] % scale
    w = img.shape[1] - img.shape[1] % scale
    if h == 0 or w == 0:
        raise DatasetError(f"Image of size {img.shape[:2]} is smaller than scale {scale}")
    return img[:h, :w]


def build_unpaired_dataset(
    sources, root, scale, ranges=None, multiplicity=1, holdout=0, seed=0, progress=False
):
    """
    Write an unpaired dataset: each HR source yields ``multiplicity`` LR
    images, each with its own degradation drawn from ``ranges``.
    The last ``holdout`` sources (in sorted order) go to the validation split,
    one LR image each, named like their HR source.
    """
    check_scale(scale)
    ranges = ranges or DegradationRanges()
    sources = sorted(Path(s) for s in sources)
    if not sources:
        raise DatasetError("No HR source images given")
    if holdout >= len(sources) and holdout > 0:
        raise DatasetError(
            f"Holdout of {holdout} leaves no training images out of {len(sources)}"
        )

    root = Path(root)
    rng = np.random.default_rng(seed)
    entries = []
    records = {}
    split_at = len(sources) - holdout

    for number, source in enumerate(tqdm(sources, disable=not progress, desc="sources")):
        split = TRAIN if number < split_at else VAL
        prefix = "" if split == TRAIN else "val/"
        hr = _crop_to_multiple(load_image(source), scale)
        hr_name = f"{prefix}hr/{source.stem}.png"
        save_image(root / hr_name, hr)
        clean = predetermined_downscale(hr, scale)

        copies = multiplicity if split == TRAIN else 1
        for copy in range(copies):
            spec = random_degradation(rng, ranges)
            stem = f"{source.stem}_{copy}" if split == TRAIN else source.stem
            lr_name = f"{prefix}lr/{stem}.png"
            save_image(root / lr_name, synth_degrade(clean, spec))
            entries.append((split, lr_name, hr_name))
            records[lr_name] = spec.to_dict()

    write_manifest(root, entries)
    write_json(root / DEGRADATIONS_NAME, records)
    logger.info(
        f"Wrote {len(entries)} LR images from {len(sources)} HR sources to {root}"
    )
    return root


def read_degradations(root):
    """
    Validated DegradationSpec of every LR image, keyed by its path under
    ``root``. A dataset without ``degradations.json`` has none.
    """
    path = Path(root) / DEGRADATIONS_NAME
    if not path.is_file():
        return {}
    try:
        records = read_json(path)
    except ValueError as exc:
        raise DatasetError(f"{path} is not valid JSON: {exc}", path=str(path)) from exc

    specs = {}
    for name, data in sorted(records.items()):
        serializer = DegradationSpecSerializer(data=data)
        if not serializer.is_valid():
            raise DatasetError(
                f"Invalid degradation record for {name} in {path}", errors=serializer.errors
            )
        specs[name] = serializer.save()
    return specs


@dataclass
class UnpairedDataset:
    """Image pools of a dataset root, loaded into memory."""

    root: Path
    lr_pool: list = field(default_factory=list)
    hr_pool: list = field(default_factory=list)
    val_pairs: list = field(default_factory=list)
    degradations: dict = field(default_factory=dict)

    @classmethod
    def load(cls, root, lr_prescale=1):
        """
        Read the training pools and validation pairs. Without a manifest the
        ``lr/`` and ``hr/`` directories are used as plain unpaired pools.
        """
        root = Path(root)
        if not root.is_dir():
            raise DatasetError(f"Dataset not found: {root}", path=str(root))

        def lr_image(path):
            img = load_image(path)
            return bicubic_upscale(img, lr_prescale) if lr_prescale > 1 else img

        if not (root / MANIFEST_NAME).is_file():
            return cls(
                root=root,
                lr_pool=[lr_image(p) for p in list_images(root / "lr")],
                hr_pool=[load_image(p) for p in list_images(root / "hr")],
            )

        entries = read_manifest(root)
        train_lr = sorted({lr for split, lr, _ in entries if split == TRAIN})
        train_hr = sorted({hr for split, _, hr in entries if split == TRAIN})
        val = sorted((lr, hr) for split, lr, hr in entries if split == VAL)

        dataset = cls(
            root=root,
            lr_pool=[lr_image(root / name) for name in train_lr],
            hr_pool=[load_image(root / name) for name in train_hr],
            val_pairs=[(lr_image(root / lr), load_image(root / hr)) for lr, hr in val],
            degradations=read_degradations(root),
        )
        logger.info(
            f"Loaded {len(dataset.lr_pool)} LR / {len(dataset.hr_pool)} HR training "
            f"images and {len(dataset.val_pairs)} validation pairs from {root}"
        )
        return dataset
