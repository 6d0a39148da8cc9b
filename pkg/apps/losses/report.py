from dataclasses import asdict, dataclass

TRANSLATION_TERMS = ("adv_x", "adv_yd", "adv_hr", "cyc", "idt", "geo")


@dataclass
class LossReport:
    """Scalar values of one training iteration."""

    adv_x: float = 0.0
    adv_yd: float = 0.0
    adv_hr: float = 0.0
    cyc: float = 0.0
    idt: float = 0.0
    geo: float = 0.0
    rec: float = 0.0
    total_trans: float = 0.0
    d_x: float = 0.0
    d_yd: float = 0.0
    d_hr: float = 0.0

    def to_dict(self):
        return asdict(self)

    def values(self):
        return list(asdict(self).values())
