import hashlib
import json
import random
import subprocess
from pathlib import Path

import numpy as np
import torch
from django.conf import settings


def seed_everything(seed):
    """Seed python, numpy and torch global generators."""
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)


def resolve_device(name=None):
    """Return a torch device, falling back to the configured default."""
    return torch.device(name or settings.DEVICE)


def parameter_digest(module):
    """SHA-256 over the names and raw bytes of every parameter (buffers excluded)."""
    digest = hashlib.sha256()
    for name, tensor in sorted(module.named_parameters()):
        digest.update(name.encode())
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


def version_stamp():
    """Git revision of the working tree, or 'unknown' outside a checkout."""
    try:
        result = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            cwd=settings.BASE_DIR,
            capture_output=True,
            text=True,
            check=True,
        )
        return result.stdout.strip() or "unknown"
    except (OSError, subprocess.CalledProcessError):
        return "unknown"


def write_json(path, payload):
    """Write JSON with sorted keys so reruns produce identical bytes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())
