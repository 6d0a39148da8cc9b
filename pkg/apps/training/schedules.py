"""Learning-rate and loss-weight schedules."""

GAN_GROUPS = ("generators", "discriminators")


def lr_schedule(base_lr, iteration, milestones):
    """``base_lr`` halved once for every milestone already reached."""
    return base_lr * 0.5 ** sum(1 for m in milestones if m <= iteration)


def geo_weight(iteration, cfg):
    target = cfg.weights.lambda_geo
    if not cfg.geo_ramp.enabled:
        return target
    end = cfg.geo_ramp.end_iter(cfg.total_iters)
    if iteration >= end:
        return target
    return target * iteration / end


def apply_lr_schedule(optimizers, iteration, cfg):
    """
    Set this iteration's learning rates. The SR network keeps its base rate
    for the whole run. Returns ``(lr_gan, lr_sr)``.
    """
    lr_gan = lr_schedule(cfg.optim_gan.lr, iteration, cfg.lr_milestones)
    for name in GAN_GROUPS:
        for group in optimizers[name].param_groups:
            group["lr"] = lr_gan
    for group in optimizers["sr"].param_groups:
        group["lr"] = cfg.optim_sr.lr
    return lr_gan, cfg.optim_sr.lr
