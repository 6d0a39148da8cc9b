"""Training state, optimizers and checkpoints."""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from apps.core.exceptions import CheckpointError, ConfigError
from apps.networks.bundle import build_bundle
from apps.networks.config import ModelConfig
from apps.networks.container import load_tensors, save_tensors

from .config import OptimSpec

logger = logging.getLogger(__name__)

FORMAT = "pseudosr-checkpoint"


@dataclass
class TrainState:
    """
    Everything besides network weights a run needs to continue exactly:
    the iteration counter, the data and noise random streams, the live
    optimizers and the best validation score seen so far.
    """

    iteration: int
    data_rng: np.random.Generator
    noise_rng: torch.Generator
    optimizers: dict = field(default_factory=dict)
    best_metric: float = None
    best_iter: int = None
    config: dict = field(default_factory=dict)

    @classmethod
    def fresh(cls, seed, optimizers=None, config=None):
        return cls(
            iteration=0,
            data_rng=np.random.default_rng(seed),
            noise_rng=torch.Generator().manual_seed(seed),
            optimizers=optimizers or {},
            config=config or {},
        )


def _adam(params, spec: OptimSpec):
    return torch.optim.Adam(
        params, lr=spec.lr, betas=(spec.beta1, spec.beta2), eps=spec.epsilon
    )


def build_optimizers(bundle, optim_gan=None, optim_sr=None):
    """One Adam per update group: both generators, all discriminators, U."""
    optim_gan = optim_gan or OptimSpec()
    optim_sr = optim_sr or OptimSpec(beta1=0.9)
    return {
        "generators": _adam(
            [p for net in bundle.generators() for p in net.parameters()], optim_gan
        ),
        "discriminators": _adam(
            [p for net in bundle.discriminators() for p in net.parameters()], optim_gan
        ),
        "sr": _adam(bundle.sr.parameters(), optim_sr),
    }


def _optimizer_sections(optimizers):
    tensors, meta = {}, {}
    for name, optimizer in sorted(optimizers.items()):
        state_dict = optimizer.state_dict()
        scalars = {}
        for index, values in state_dict["state"].items():
            for key, value in values.items():
                if isinstance(value, torch.Tensor):
                    tensors[f"optim/{name}/state/{index}/{key}"] = value
                else:
                    scalars.setdefault(str(index), {})[key] = value
        meta[name] = {"param_groups": state_dict["param_groups"], "scalar_state": scalars}
    return tensors, meta


def _optimizer_state_dict(name, tensors, meta):
    prefix = f"optim/{name}/state/"
    state = {}
    for key, array in tensors.items():
        if key.startswith(prefix):
            index, entry = key[len(prefix) :].split("/", 1)
            state.setdefault(int(index), {})[entry] = torch.from_numpy(array)
    for index, values in meta["scalar_state"].items():
        state.setdefault(int(index), {}).update(values)
    return {"state": state, "param_groups": meta["param_groups"]}


def checkpoint_save(bundle, state, path):
    """
    Write networks, optimizer moments, random streams, counters and the run
    config to ``path``.
    """
    tensors = {f"networks/{key}": value for key, value in bundle.state_dict().items()}
    optim_tensors, optim_meta = _optimizer_sections(state.optimizers)
    tensors.update(optim_tensors)
    tensors["rng/torch_noise"] = state.noise_rng.get_state()

    meta = {
        "format": FORMAT,
        "iteration": state.iteration,
        "best_metric": state.best_metric,
        "best_iter": state.best_iter,
        "data_rng": state.data_rng.bit_generator.state,
        "optim": optim_meta,
        "model": bundle.config.to_dict(),
        "config": state.config,
    }
    save_tensors(path, tensors, meta)
    logger.info(f"Saved checkpoint at iteration {state.iteration} to {path}")
    return path


def _read(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Checkpoint not found: {path}", path=str(path))
    tensors, meta = load_tensors(path)
    if meta.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not a training checkpoint")
    return tensors, meta


def _bundle_from(tensors, meta, device):
    bundle = build_bundle(ModelConfig.from_dict(meta["model"]))
    prefix = "networks/"
    bundle.load_state_dict(
        {k[len(prefix) :]: torch.from_numpy(v) for k, v in tensors.items() if k.startswith(prefix)}
    )
    if device is not None:
        bundle.to(device)
    return bundle


def load_bundle(path, device=None):
    """Networks of a checkpoint and its header metadata, without optimizer state."""
    tensors, meta = _read(path)
    return _bundle_from(tensors, meta, device), meta


def checkpoint_load(path, device=None):
    """
    Rebuild ``(bundle, state)`` from a checkpoint. The state's optimizers
    are bound to the returned bundle's parameters.
    """
    tensors, meta = _read(path)
    bundle = _bundle_from(tensors, meta, device)

    optimizers = build_optimizers(bundle)
    for name, optimizer in optimizers.items():
        if name in meta["optim"]:
            optimizer.load_state_dict(_optimizer_state_dict(name, tensors, meta["optim"][name]))

    data_rng = np.random.default_rng()
    data_rng.bit_generator.state = meta["data_rng"]
    noise_rng = torch.Generator()
    noise_rng.set_state(torch.from_numpy(tensors["rng/torch_noise"]))

    state = TrainState(
        iteration=meta["iteration"],
        data_rng=data_rng,
        noise_rng=noise_rng,
        optimizers=optimizers,
        best_metric=meta["best_metric"],
        best_iter=meta["best_iter"],
        config=meta["config"],
    )
    logger.info(f"Loaded checkpoint {path} at iteration {state.iteration}")
    return bundle, state


def checkpoint_meta(path):
    """Header metadata of a checkpoint without rebuilding the networks."""
    return _read(path)[1]
