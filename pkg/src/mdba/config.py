"""Run configuration: every tunable key, its default, and validation."""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional

from .exceptions import ConfigError

MECHANISMS = ("onf", "pnd", "s2c", "c2s")


@dataclass(frozen=True)
class TrainConfig:
    """Defaults are the full-scale values; :meth:`desk` rescales for small fixtures."""

    # data
    dataset_root: Optional[str] = None
    val_split: Optional[str] = "val"
    num_classes: Optional[int] = None  # foreground classes C'; read from meta.json when None
    binarize_threshold: float = 0.5
    hflip: bool = True
    # schedule
    seed: int = 0
    t_max: int = 11000
    t_w: int = 1000
    t_s: int = 1000
    T_h: float = 1.2
    T_l: float = 0.8
    schedule_mode: str = "per_step"
    # batch
    batch_size: int = 10
    batch_simple: int = 5
    # segmentation network and its optimizer
    backbone: str = "small"
    backbone_width: int = 32
    lr_g: float = 2.5e-4
    momentum: float = 0.9
    weight_decay: float = 1e-4
    lr_power: float = 0.9
    # discriminator and its optimizer
    d_ndf: int = 64
    d_steps: int = 1
    lr_d: float = 1e-4
    adam_betas: tuple = (0.9, 0.99)
    # image-level filtering
    alpha: float = 0.1
    noise_iou_scope: str = "foreground"
    threshold_refresh_every: int = 0
    # mixing
    p_mix: float = 0.5
    mix_area_lo: float = 0.2
    mix_area_hi: float = 0.5
    # adversarial alignment
    lambda_adv: float = 0.001
    adv_include_dropped: bool = True
    adv_include_synthetic: bool = True
    gt_ignore_fill: str = "background"
    # mechanism switches
    onf: bool = True
    pnd: bool = True
    s2c: bool = True
    c2s: bool = True
    # bookkeeping
    eval_every: int = 0
    checkpoint_every: int = 0
    eval_batch_size: int = 50
    log_every: int = 0

    @property
    def batch_complex(self):
        return self.batch_size - self.batch_simple

    def validate(self):
        """Raise :class:`ConfigError` naming the first invalid key."""
        positive_ints = ("t_max", "t_s", "batch_size", "backbone_width", "d_ndf", "d_steps", "eval_batch_size")
        for key in positive_ints:
            if int(getattr(self, key)) <= 0:
                raise ConfigError(key, "must be a positive integer")
        for key in ("t_w", "eval_every", "checkpoint_every", "threshold_refresh_every", "log_every"):
            if int(getattr(self, key)) < 0:
                raise ConfigError(key, "must be nonnegative")
        if self.t_w >= self.t_max:
            raise ConfigError("t_w", f"warm-up ({self.t_w}) must end before t_max ({self.t_max})")
        if not self.T_h > self.T_l > 0:
            raise ConfigError("T_h", f"need T_h > T_l > 0, got {self.T_h}, {self.T_l}")
        if self.schedule_mode not in ("per_step", "literal"):
            raise ConfigError("schedule_mode", "must be 'per_step' or 'literal'")
        if not 0 <= self.batch_simple <= self.batch_size:
            raise ConfigError("batch_simple", "must lie in 0..batch_size")
        if self.batch_simple == 0:
            raise ConfigError("batch_simple", "at least one labelled slot per batch is required")
        if not 0.0 <= self.alpha < 1.0:
            raise ConfigError("alpha", "must lie in [0, 1)")
        if self.noise_iou_scope not in ("foreground", "all"):
            raise ConfigError("noise_iou_scope", "must be 'foreground' or 'all'")
        if not 0.0 <= self.p_mix <= 1.0:
            raise ConfigError("p_mix", "must be a probability")
        if not 0 < self.mix_area_lo <= self.mix_area_hi < 1:
            raise ConfigError("mix_area_lo", "need 0 < mix_area_lo <= mix_area_hi < 1")
        if self.lambda_adv < 0 or not math.isfinite(self.lambda_adv):
            raise ConfigError("lambda_adv", "must be finite and nonnegative")
        for key in ("lr_g", "lr_d"):
            if not getattr(self, key) > 0:
                raise ConfigError(key, "must be positive")
        if not 0 < self.binarize_threshold < 1:
            raise ConfigError("binarize_threshold", "must lie in (0, 1)")
        if self.gt_ignore_fill not in ("background", "zeros"):
            raise ConfigError("gt_ignore_fill", "must be 'background' or 'zeros'")
        if self.num_classes is not None and int(self.num_classes) < 1:
            raise ConfigError("num_classes", "must be positive")
        return self

    def with_overrides(self, **kw):
        return replace(self, **kw)

    def ablate(self, names):
        """Disable the named mechanisms (``onf``, ``pnd``, ``s2c``, ``c2s``)."""
        off = {}
        for name in names:
            name = name.strip().lower()
            if not name:
                continue
            if name not in MECHANISMS:
                raise ConfigError("ablate", f"unknown mechanism {name!r}; choose from {MECHANISMS}")
            off[name] = False
        return replace(self, **off)

    def second_step(self):
        """Plain retraining config: no denoising, no alignment."""
        return replace(self, onf=False, pnd=False, s2c=False, c2s=False, lambda_adv=0.0, p_mix=0.0)

    @classmethod
    def desk(cls, n_simple=400, **overrides):
        """Scaled-down schedule for fixture-sized datasets.

        ``t_max = max(2000, 20 * n_simple / batch_size)``. The segmentation
        network trains from scratch here, so its base rate is raised and the
        warm-up covers a quarter of training: a shorter one starts pixel
        filtering before every class is learned, and the unlearned classes
        are then masked out for good. The stride keeps ten decrements.
        """
        batch_size = overrides.get("batch_size", cls.batch_size)
        t_max = overrides.pop("t_max", max(2000, int(20 * n_simple / batch_size)))
        t_w = overrides.get("t_w", round(t_max / 4))
        base = dict(
            t_max=t_max,
            t_w=t_w,
            t_s=max(1, round((t_max - t_w) / 10)),
            lr_g=0.02,
            d_ndf=16,
        )
        base.update(overrides)
        return cls(**base)

    def to_dict(self):
        d = asdict(self)
        d["adam_betas"] = list(self.adam_betas)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name: f for f in fields(cls)}
        kw = {}
        for key, value in d.items():
            if key not in known:
                raise ConfigError(key, "unknown configuration key")
            kw[key] = _coerce(key, known[key], value)
        return cls(**kw)


def _coerce(key, f, value):
    default = f.default
    if value is None:
        return None
    try:
        if isinstance(default, bool):
            if isinstance(value, str):
                lowered = value.strip().lower()
                if lowered in ("1", "true", "yes", "on"):
                    return True
                if lowered in ("0", "false", "no", "off"):
                    return False
                raise ValueError(value)
            return bool(value)
        if isinstance(default, int) or key == "num_classes":
            return int(float(value)) if isinstance(value, str) else int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple):
            if isinstance(value, str):
                value = [float(v) for v in value.replace(",", " ").split()]
            return tuple(value)
        return value if not isinstance(value, str) else value.strip()
    except (TypeError, ValueError):
        raise ConfigError(key, f"cannot interpret {value!r}") from None


def parse_key_values(lines):
    out = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config(path=None, overrides=None, env=None):
    """Read a JSON or ``key=value`` config file, apply overrides and ``MDBA_SEED``.

    A file may set ``preset = desk`` (plus ``n_simple``) to start from the
    desk-scale defaults instead of the full-scale ones.
    """
    raw = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError("config", f"no such file {path}")
        text = path.read_text()
        raw = json.loads(text) if path.suffix == ".json" else parse_key_values(text.splitlines())
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    preset = raw.pop("preset", None)
    n_simple = raw.pop("n_simple", None)
    ablate = raw.pop("ablate", None)
    cfg = TrainConfig.from_dict(raw)
    if preset == "desk":
        base = TrainConfig.desk(int(n_simple or 400))
        explicit = {k: getattr(cfg, k) for k in raw}
        cfg = replace(base, **explicit)
    elif preset not in (None, "full"):
        raise ConfigError("preset", f"unknown preset {preset!r}")
    if ablate:
        cfg = cfg.ablate(ablate.split(",") if isinstance(ablate, str) else ablate)
    env = os.environ if env is None else env
    if env.get("MDBA_SEED"):
        try:
            cfg = replace(cfg, seed=int(env["MDBA_SEED"]))
        except ValueError:
            raise ConfigError("MDBA_SEED", f"not an integer: {env['MDBA_SEED']!r}") from None
    return cfg.validate()


def save_config(cfg, path):
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
