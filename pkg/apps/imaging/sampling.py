"""Unaligned patch sampling for unpaired training."""

from typing import NamedTuple

import numpy as np
import torch
from torch.utils.data import IterableDataset, get_worker_info

from apps.core.exceptions import SamplingError

from .ops import DIHEDRAL_INDICES, check_scale, dihedral, predetermined_downscale


class UnalignedBatch(NamedTuple):
    """
    Stacked N×P×P×3 float32 patches: ``x`` from the LR pool, ``y`` from the HR
    pool and ``y_down`` the predetermined downscale of each ``y`` patch.
    """

    x: np.ndarray
    y: np.ndarray
    y_down: np.ndarray

    def to_tensors(self, device="cpu", dtype=torch.float32):
        """The same batch as N×C×H×W tensors."""
        return UnalignedBatch(*(to_tensor(a, device=device, dtype=dtype) for a in self))


def to_tensor(array, device="cpu", dtype=torch.float32):
    """N×H×W×C (or H×W×C) array → N×C×H×W tensor."""
    array = np.asarray(array)
    if array.ndim == 3:
        array = array[None]
    tensor = torch.from_numpy(np.ascontiguousarray(array.transpose(0, 3, 1, 2)))
    return tensor.to(device=device, dtype=dtype)


def to_array(tensor):
    """N×C×H×W tensor → N×H×W×C float64 array."""
    return tensor.detach().cpu().double().numpy().transpose(0, 2, 3, 1)


def _eligible(pool, size, name):
    eligible = [img for img in pool if img.shape[0] >= size and img.shape[1] >= size]
    if not pool:
        raise SamplingError(f"The {name} pool is empty")
    if not eligible:
        raise SamplingError(
            f"No {name} image is large enough for {size}×{size} patches",
            patch=size,
        )
    return eligible


def _random_patch(rng, pool, size, augment):
    img = pool[rng.integers(len(pool))]
    top = rng.integers(img.shape[0] - size + 1)
    left = rng.integers(img.shape[1] - size + 1)
    patch = img[top : top + size, left : left + size]
    if augment:
        patch = dihedral(patch, int(rng.choice(DIHEDRAL_INDICES)))
    return patch


def sample_unaligned_batch(lr_pool, hr_pool, lr_patch, scale, batch, rng, augment=True):
    """
    Draw ``batch`` LR patches and, independently, ``batch`` HR patches of
    size ``lr_patch * scale``, each with a random flip/rotation.

    The LR and HR crops come from two child streams seeded from ``rng``, so
    the x draws never depend on the HR pool and vice versa.
    """
    check_scale(scale)
    hr_patch = lr_patch * scale
    lr_pool = _eligible(lr_pool, lr_patch, "LR")
    hr_pool = _eligible(hr_pool, hr_patch, "HR")

    x_seed, y_seed = (int(s) for s in rng.integers(0, 2**63 - 1, size=2))
    x_rng = np.random.default_rng(x_seed)
    y_rng = np.random.default_rng(y_seed)

    x = [_random_patch(x_rng, lr_pool, lr_patch, augment) for _ in range(batch)]
    y = [_random_patch(y_rng, hr_pool, hr_patch, augment) for _ in range(batch)]
    y_down = [predetermined_downscale(patch, scale) for patch in y]

    return UnalignedBatch(
        x=np.stack(x).astype(np.float32),
        y=np.stack(y).astype(np.float32),
        y_down=np.stack(y_down).astype(np.float32),
    )


class PatchStream(IterableDataset):
    """
    Endless stream of unaligned batches for ``DataLoader`` prefetch workers.
    Each worker owns an independent child of ``SeedSequence(seed)``.
    """

    def __init__(self, lr_pool, hr_pool, lr_patch, scale, batch, seed):
        super().__init__()
        self.lr_pool = lr_pool
        self.hr_pool = hr_pool
        self.lr_patch = lr_patch
        self.scale = scale
        self.batch = batch
        self.seed = seed

    def __iter__(self):
        info = get_worker_info()
        workers = info.num_workers if info else 1
        worker_id = info.id if info else 0
        stream = np.random.SeedSequence(self.seed).spawn(workers)[worker_id]
        rng = np.random.default_rng(stream)
        while True:
            yield sample_unaligned_batch(
                self.lr_pool, self.hr_pool, self.lr_patch, self.scale, self.batch, rng
            )
