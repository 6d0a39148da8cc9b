"""
Objective terms of the translation and reconstruction stages.

Every loss is a mean over batch, channels and positions. Discriminators
output raw logits; the adversarial terms work on logits through
``softplus`` so they stay finite for saturated scores.
"""

import torch
import torch.nn.functional as F
from torch.func import functional_call

from apps.core.exceptions import ConfigError, LossError, ShapeError
from apps.imaging.ops import DIHEDRAL_INDICES, dihedral_tensor, inverse_dihedral
from apps.networks.blocks import frozen

from .report import TRANSLATION_TERMS
from .weights import GanForm, IdentityMode


def _check_same_shape(a, b, what):
    if a.shape != b.shape:
        raise ShapeError(
            f"{what}: shapes {tuple(a.shape)} and {tuple(b.shape)} differ"
        )


def _check_nonempty(*tensors):
    for tensor in tensors:
        if tensor.numel() == 0:
            raise LossError("Cannot compute an adversarial loss on an empty batch")


def adversarial_value(scores_real, scores_fake):
    """
    E[log D(real)] + E[log(1 − D(fake))] with D = sigmoid(scores).
    The discriminator maximizes this value; its optimum is 0.
    """
    _check_nonempty(scores_real, scores_fake)
    return -F.softplus(-scores_real).mean() - F.softplus(scores_fake).mean()


def discriminator_loss(scores_real, scores_fake, form=GanForm.NONSATURATING):
    _check_nonempty(scores_real, scores_fake)
    if GanForm(form) is GanForm.LSGAN:
        return ((scores_real - 1) ** 2).mean() + (scores_fake**2).mean()
    return -adversarial_value(scores_real, scores_fake)


def generator_loss(scores_fake, form=GanForm.NONSATURATING):
    """
    Loss of the generator that produced ``scores_fake``.

    ``minimax`` minimizes E[log(1 − D(fake))] directly, so its value is
    negative; the other two forms are non-negative.
    """
    _check_nonempty(scores_fake)
    form = GanForm(form)
    if form is GanForm.MINIMAX:
        return -F.softplus(scores_fake).mean()
    if form is GanForm.LSGAN:
        return ((scores_fake - 1) ** 2).mean()
    return F.softplus(-scores_fake).mean()


def adversarial_loss(scores_real, scores_fake, form=GanForm.NONSATURATING):
    """
    Returns ``(d_loss, g_loss)``. ``d_loss`` sees the fake scores detached so
    a discriminator update never reaches the generator.
    """
    d_loss = discriminator_loss(scores_real, scores_fake.detach(), form)
    g_loss = generator_loss(scores_fake, form)
    return d_loss, g_loss


def frozen_forward(module, *inputs):
    """
    Run ``module`` with detached copies of its parameters: gradients reach
    the inputs but never the module's own parameters.
    """
    return functional_call(module, {**frozen(module), **dict(module.named_buffers())}, inputs)


def hr_adversarial_loss(bundle, x_batch, y_down_batch, noise, form=GanForm.NONSATURATING):
    """
    Adversarial term judged at HR by ``bundle.d_hr``.

    Real branch: U(G_corr(x)). Fake branch: U(G_corr(G_deg(y↓, noise))).
    U runs through :func:`frozen_forward`, so the generator loss updates
    the two generators only.
    """
    if x_batch.shape[1:] != y_down_batch.shape[1:]:
        raise ShapeError(
            f"LR batches differ: {tuple(x_batch.shape)} vs {tuple(y_down_batch.shape)}"
        )
    real_hr = frozen_forward(bundle.sr, bundle.g_correct(x_batch))
    pseudo = bundle.g_correct(bundle.g_degrade(y_down_batch, noise))
    fake_hr = frozen_forward(bundle.sr, pseudo)
    d_loss = discriminator_loss(
        bundle.d_hr(real_hr.detach()), bundle.d_hr(fake_hr.detach()), form
    )
    return d_loss, generator_loss(bundle.d_hr(fake_hr), form)


def hr_generator_loss(bundle, pseudo_clean, form=GanForm.NONSATURATING):
    """Generator side of the HR adversarial term for an already computed ẙ↓."""
    return generator_loss(bundle.d_hr(frozen_forward(bundle.sr, pseudo_clean)), form)


def cycle_loss(y_down, y_down_reconstructed):
    _check_same_shape(y_down, y_down_reconstructed, "cycle loss")
    return (y_down_reconstructed - y_down).abs().mean()


def identity_loss(g_correct, batch, mode=IdentityMode.CLEAN_LR, corrected=None):
    """
    ``batch`` is the unaligned batch; ``mode`` selects which LR domain the
    correction network must leave unchanged. ``corrected`` is G_XY↓ of that
    source when the caller already has it.
    """
    source = batch.y_down if IdentityMode(mode) is IdentityMode.CLEAN_LR else batch.x
    if corrected is None:
        corrected = g_correct(source)
    _check_same_shape(source, corrected, "identity loss")
    return (corrected - source).abs().mean()


def geometric_ensemble_loss(g_correct, x_batch):
    """
    L1 distance between G(x) and the mean of T⁻¹(G(T(x))) over the eight
    flips and rotations. All eight branches run as one batch.
    """
    n, _, h, w = x_batch.shape
    if h != w:
        raise ShapeError(f"Geometric ensemble needs square patches, got {h}×{w}")
    stacked = torch.cat([dihedral_tensor(x_batch, i) for i in DIHEDRAL_INDICES])
    outputs = g_correct(stacked).split(n)
    restored = [
        dihedral_tensor(out, inverse_dihedral(i))
        for i, out in zip(DIHEDRAL_INDICES, outputs)
    ]
    ensemble = torch.stack(restored).mean(dim=0)
    # DIHEDRAL_INDICES starts with the identity
    return (restored[0] - ensemble).abs().mean()


def _l1(sr_out, y_batch):
    return (sr_out - y_batch).abs().mean()


RECONSTRUCTION_LOSSES = {"l1": _l1}


def register_reconstruction_loss(kind, fn):
    """Make a pixel-wise ``fn(sr_out, y)`` available as ``reconstruction = kind``."""
    RECONSTRUCTION_LOSSES[kind] = fn
    return fn


def reconstruction_loss(sr_out, y_batch, kind="l1"):
    try:
        fn = RECONSTRUCTION_LOSSES[kind]
    except KeyError:
        raise ConfigError(
            f"Unknown reconstruction loss '{kind}'",
            available=sorted(RECONSTRUCTION_LOSSES),
        ) from None
    _check_same_shape(sr_out, y_batch, "reconstruction loss")
    return fn(sr_out, y_batch)


def total_translation_loss(parts, weights):
    missing = [term for term in TRANSLATION_TERMS if term not in parts]
    if missing:
        raise LossError(f"Missing loss components: {', '.join(missing)}")
    return (
        parts["adv_x"]
        + parts["adv_yd"]
        + weights.gamma * parts["adv_hr"]
        + weights.lambda_cyc * parts["cyc"]
        + weights.lambda_idt * parts["idt"]
        + weights.lambda_geo * parts["geo"]
    )
