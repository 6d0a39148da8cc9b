"""One iteration of the alternating optimization."""

import logging
import math
from typing import NamedTuple

import torch

from apps.core.exceptions import DivergenceError
from apps.losses.functional import (
    cycle_loss,
    discriminator_loss,
    generator_loss,
    geometric_ensemble_loss,
    hr_generator_loss,
    identity_loss,
    reconstruction_loss,
    total_translation_loss,
)
from apps.losses.report import LossReport
from apps.losses.weights import IdentityMode
from apps.networks.blocks import set_requires_grad
from apps.networks.generators import draw_noise

from .config import Variant

logger = logging.getLogger(__name__)


def _check_finite(iteration, **losses):
    values = {name: value.detach().item() for name, value in losses.items()}
    bad = {name: value for name, value in values.items() if not math.isfinite(value)}
    if bad:
        raise DivergenceError(f"Non-finite loss at iteration {iteration}", losses=bad)


class Translation(NamedTuple):
    """Generator outputs of one iteration, shared by the D and G updates."""

    fake_x: torch.Tensor  # G_Y↓X(y↓, z)
    pseudo: torch.Tensor  # G_XY↓(G_Y↓X(y↓, z))
    corrected_x: torch.Tensor  # G_XY↓(x)


def translate(bundle, batch, noise):
    """One forward pass of both generators, with graph."""
    fake_x = bundle.g_degrade(batch.y_down, noise)
    return Translation(
        fake_x=fake_x,
        pseudo=bundle.g_correct(fake_x),
        corrected_x=bundle.g_correct(batch.x),
    )


def discriminator_step(bundle, batch, fakes, cfg, state, use_hr):
    """Update D_X, D_Y↓ and, when the HR term is active, D_X↑ on detached fakes."""
    set_requires_grad(bundle.discriminators(), True)
    fake_x = fakes.fake_x.detach()
    fake_yd = fakes.corrected_x.detach()
    if use_hr:
        with torch.no_grad():
            real_hr = bundle.sr(fake_yd)
            fake_hr = bundle.sr(fakes.pseudo.detach())

    form = cfg.gan_form
    optimizer = state.optimizers["discriminators"]
    optimizer.zero_grad(set_to_none=True)
    losses = {
        "d_x": discriminator_loss(bundle.d_lr_x(batch.x), bundle.d_lr_x(fake_x), form),
        "d_yd": discriminator_loss(bundle.d_lr_yd(batch.y_down), bundle.d_lr_yd(fake_yd), form),
    }
    if use_hr:
        losses["d_hr"] = discriminator_loss(bundle.d_hr(real_hr), bundle.d_hr(fake_hr), form)
    _check_finite(state.iteration, **losses)
    sum(losses.values()).backward()
    optimizer.step()
    return {name: value.item() for name, value in losses.items()}


def generator_step(bundle, batch, fakes, weights, cfg, state):
    """
    Minimize the translation objective over G_XY↓ and G_Y↓X through the
    graph of ``fakes``. Returns the term values and the detached tensors the
    SR step trains on.
    """
    set_requires_grad(bundle.discriminators(), False)
    form = cfg.gan_form
    optimizer = state.optimizers["generators"]
    optimizer.zero_grad(set_to_none=True)

    fake_x, pseudo, corrected_x = fakes
    zero = batch.x.new_zeros(())
    source_lr = IdentityMode(weights.idt_mode) is IdentityMode.SOURCE_LR
    parts = {
        "adv_x": generator_loss(bundle.d_lr_x(fake_x), form),
        "adv_yd": generator_loss(bundle.d_lr_yd(corrected_x), form),
        "adv_hr": hr_generator_loss(bundle, pseudo, form) if weights.gamma > 0 else zero,
        "cyc": cycle_loss(batch.y_down, pseudo),
        "idt": identity_loss(
            bundle.g_correct,
            batch,
            weights.idt_mode,
            corrected=corrected_x if source_lr else None,
        ),
        "geo": geometric_ensemble_loss(bundle.g_correct, batch.x)
        if weights.lambda_geo > 0
        else zero,
    }
    total = total_translation_loss(parts, weights)
    _check_finite(state.iteration, total_trans=total, **parts)
    total.backward()
    optimizer.step()
    set_requires_grad(bundle.discriminators(), True)

    values = {name: value.item() for name, value in parts.items()}
    values["total_trans"] = total.item()
    return values, fake_x.detach(), pseudo.detach()


def sr_step(bundle, sr_input, batch, cfg, state):
    optimizer = state.optimizers["sr"]
    optimizer.zero_grad(set_to_none=True)
    rec = reconstruction_loss(bundle.sr(sr_input), batch.y, cfg.reconstruction)
    _check_finite(state.iteration, rec=rec)
    rec.backward()
    optimizer.step()
    return rec.item()


def sr_input_for(variant, batch, fake_x, pseudo):
    """LR input U is trained on for each variant."""
    if variant is Variant.TRAIN_ON_CLEAN:
        return batch.y_down
    if variant is Variant.TRAIN_ON_DEGRADED:
        return fake_x
    return pseudo


def train_step(bundle, batch, cfg, state):
    """
    Discriminators, then generators, then U. ``batch`` is an
    ``UnalignedBatch`` of N×C×H×W tensors on the bundle's device; the
    optimizers live in ``state.optimizers``. The noise raster drawn here is
    shared by the discriminator and generator updates, which also share one
    forward pass of the generators.
    """
    weights = cfg.weights_at(state.iteration)
    use_hr = weights.gamma > 0
    noise = draw_noise(batch.y_down, state.noise_rng)
    fakes = translate(bundle, batch, noise)

    d_values = discriminator_step(bundle, batch, fakes, cfg, state, use_hr)
    g_values, fake_x, pseudo = generator_step(bundle, batch, fakes, weights, cfg, state)
    rec = sr_step(bundle, sr_input_for(cfg.variant, batch, fake_x, pseudo), batch, cfg, state)

    report = LossReport(rec=rec, **g_values, **d_values)
    state.iteration += 1
    return state, report
