"""scikit-learn style wrapper around the trainer."""
from __future__ import annotations

from dataclasses import fields

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .config import TrainConfig
from .data import DatasetSplit, split_dataset
from .trainer import (
    MDBATrainer,
    backbone_from_checkpoint,
    evaluate_backbone,
    load_checkpoint,
    predict_labels,
    predict_proba,
)
from .validation import check_images, check_records, infer_num_classes


class MDBASegmenter(BaseEstimator):
    """Segmentation network trained from image tags and saliency maps.

    ``fit`` takes :class:`~mdba.data.ImageRecord` objects (or a ready
    :class:`~mdba.data.DatasetSplit`); single-tag records with saliency
    become labelled simple images, multi-tag records complex ones.
    ``predict`` returns ``(N, H, W)`` uint8 label maps and
    ``predict_proba`` ``(N, C, H, W)`` probabilities, background first.

    Parameters mirror :class:`~mdba.config.TrainConfig`; see that class
    for their meaning. ``preset="desk"`` starts from the fixture-scale
    schedule, with explicitly passed values taking precedence.

    Examples
    --------
    >>> seg = MDBASegmenter(preset="desk", t_max=200)          # doctest: +SKIP
    >>> seg.fit(records, eval_set=val_records).score(val_records)  # doctest: +SKIP
    """

    def __init__(
        self,
        preset=None,
        num_classes=None,
        binarize_threshold=0.5,
        hflip=True,
        seed=0,
        t_max=None,
        t_w=None,
        t_s=None,
        T_h=1.2,
        T_l=0.8,
        schedule_mode="per_step",
        batch_size=10,
        batch_simple=5,
        backbone="small",
        backbone_width=32,
        lr_g=None,
        momentum=0.9,
        weight_decay=1e-4,
        lr_power=0.9,
        d_ndf=None,
        d_steps=1,
        lr_d=1e-4,
        adam_betas=(0.9, 0.99),
        alpha=0.1,
        noise_iou_scope="foreground",
        threshold_refresh_every=0,
        p_mix=0.5,
        mix_area_lo=0.2,
        mix_area_hi=0.5,
        lambda_adv=0.001,
        adv_include_dropped=True,
        adv_include_synthetic=True,
        gt_ignore_fill="background",
        onf=True,
        pnd=True,
        s2c=True,
        c2s=True,
        eval_every=0,
        checkpoint_every=0,
        eval_batch_size=50,
        log_every=0,
    ):
        self.preset = preset
        self.num_classes = num_classes
        self.binarize_threshold = binarize_threshold
        self.hflip = hflip
        self.seed = seed
        self.t_max = t_max
        self.t_w = t_w
        self.t_s = t_s
        self.T_h = T_h
        self.T_l = T_l
        self.schedule_mode = schedule_mode
        self.batch_size = batch_size
        self.batch_simple = batch_simple
        self.backbone = backbone
        self.backbone_width = backbone_width
        self.lr_g = lr_g
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.lr_power = lr_power
        self.d_ndf = d_ndf
        self.d_steps = d_steps
        self.lr_d = lr_d
        self.adam_betas = adam_betas
        self.alpha = alpha
        self.noise_iou_scope = noise_iou_scope
        self.threshold_refresh_every = threshold_refresh_every
        self.p_mix = p_mix
        self.mix_area_lo = mix_area_lo
        self.mix_area_hi = mix_area_hi
        self.lambda_adv = lambda_adv
        self.adv_include_dropped = adv_include_dropped
        self.adv_include_synthetic = adv_include_synthetic
        self.gt_ignore_fill = gt_ignore_fill
        self.onf = onf
        self.pnd = pnd
        self.s2c = s2c
        self.c2s = c2s
        self.eval_every = eval_every
        self.checkpoint_every = checkpoint_every
        self.eval_batch_size = eval_batch_size
        self.log_every = log_every

    def make_config(self, n_simple=400):
        """The :class:`TrainConfig` these parameters describe."""
        params = self.get_params()
        preset = params.pop("preset")
        names = {f.name for f in fields(TrainConfig)}
        explicit = {k: v for k, v in params.items() if k in names and v is not None}
        if preset == "desk":
            cfg = TrainConfig.desk(n_simple, **explicit)
        elif preset in (None, "full"):
            cfg = TrainConfig(**explicit)
        else:
            raise ValueError(f"unknown preset {preset!r}")
        return cfg.validate()

    def fit(self, X, y=None, eval_set=None, run_dir=None, meta=None):
        """Train on records ``X``; ``y`` is unused (tags live on the records)."""
        if isinstance(X, DatasetSplit):
            split = X
        else:
            split = split_dataset(check_records(X), self.binarize_threshold)
        records = list(split.simple) + list(split.complex)
        num_fg = self.num_classes or (meta.num_classes if meta is not None else infer_num_classes(records))
        config = self.make_config(len(split.simple))
        trainer = MDBATrainer(config, split, num_fg, eval_set, run_dir, meta)
        trainer.fit()
        self.config_ = config
        self.trainer_ = trainer
        self.backbone_ = trainer.backbone
        self.discriminator_ = trainer.discriminator
        self.history_ = trainer.history
        self.threshold_table_ = trainer.state.threshold_table
        self.n_classes_ = num_fg + 1
        self.classes_ = np.arange(self.n_classes_)
        return self

    @classmethod
    def from_checkpoint(cls, path):
        ckpt = load_checkpoint(path)
        cfg = ckpt["config"]
        est = cls(**{k: v for k, v in cfg.items() if k in cls._get_param_names()})
        est.backbone_ = backbone_from_checkpoint(ckpt)
        est.n_classes_ = int(ckpt["num_classes"]) + 1
        est.classes_ = np.arange(est.n_classes_)
        est.history_ = ckpt.get("history", [])
        return est

    def predict_proba(self, X):
        check_is_fitted(self, "backbone_")
        return predict_proba(self.backbone_, check_images(X), self.eval_batch_size)

    def predict(self, X):
        check_is_fitted(self, "backbone_")
        return predict_labels(self.backbone_, check_images(X), self.eval_batch_size)

    def score(self, X, y=None):
        """Validation mIoU against each record's ground truth mask."""
        check_is_fitted(self, "backbone_")
        report = evaluate_backbone(self.backbone_, check_records(X), self.n_classes_, self.eval_batch_size)
        return report.miou
