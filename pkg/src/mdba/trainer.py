"""Alternating training of the segmentation network and the discriminator.

One iteration (``train_step``):

1. compose a batch of simple and complex images, replacing some simple
   slots by box-mixed pairs of two other simple images;
2. forward everything through the segmentation network, drop simple images
   whose noise ratio exceeds their class threshold, mask pixels whose loss
   exceeds the current pixel threshold;
3. update the segmentation network on seg + cls + lambda_adv * adv with the
   discriminator frozen;
4. update the discriminator on detached predictions against one-hot
   pseudo labels of kept simple images.

Every source of randomness is a function of ``(seed, t)`` so a run resumed
from a checkpoint replays the uninterrupted trace exactly.
"""
from __future__ import annotations

import copy
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import torch

from .adversarial import (
    Discriminator,
    adversarial_loss,
    discriminator_loss,
    one_hot,
    set_requires_grad,
)
from .config import TrainConfig, save_config
from .data import DatasetSplit, write_label
from .denoise_image import ClassThresholdTable, compute_class_thresholds, filter_image
from .denoise_pixel import (
    ThresholdSchedule,
    current_threshold,
    masked_seg_loss,
    noise_mask,
    pixel_losses_from_logits,
)
from .exceptions import NonFiniteLossError, NumericalError, RangeError, ScheduleExhaustedError
from .metrics import ConfusionMatrix, iou_report
from .mixing import cutmix, sample_mix_mask
from .model import build_backbone, classification_logits, classification_loss, upsample_logits

logger = logging.getLogger(__name__)

CKPT_HEADER = "mdba-ckpt-v1"
LOG_KEYS = ("t", "lr_G", "lr_D", "L_seg", "L_cls", "L_adv", "L_D", "T_pixel", "dropped_images", "masked_pixel_frac")


def poly_lr(base_lr, t, t_max, power=0.9):
    """``base_lr * (1 - t / t_max) ** power`` for ``0 <= t <= t_max``."""
    if not 0 <= t <= t_max:
        raise RangeError(f"t={t} outside 0..{t_max}")
    return base_lr * (1.0 - t / t_max) ** power


@dataclass
class TrainState:
    t: int = 0  # iterations completed
    rng_seed: int = 0
    schedule: Optional[ThresholdSchedule] = None
    threshold_table: Optional[ClassThresholdTable] = None
    kept: Dict[int, bool] = field(default_factory=dict)  # last ONF decision per simple index
    onf_audit: Optional[dict] = None
    best_miou: Optional[float] = None

    def to_dict(self):
        return {
            "t": self.t,
            "rng_seed": self.rng_seed,
            "schedule": None if self.schedule is None else vars(self.schedule).copy(),
            "threshold_table": None if self.threshold_table is None else self.threshold_table.to_dict(),
            "kept": {str(k): v for k, v in self.kept.items()},
            "onf_audit": self.onf_audit,
            "best_miou": self.best_miou,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            t=int(d["t"]),
            rng_seed=int(d["rng_seed"]),
            schedule=None if d.get("schedule") is None else ThresholdSchedule(**d["schedule"]),
            threshold_table=None if d.get("threshold_table") is None else ClassThresholdTable.from_dict(d["threshold_table"]),
            kept={int(k): bool(v) for k, v in d.get("kept", {}).items()},
            onf_audit=d.get("onf_audit"),
            best_miou=d.get("best_miou"),
        )


@dataclass
class Batch:
    images: torch.Tensor  # (N, 3, H, W)
    labels: torch.Tensor  # (N, H, W); meaningful for labelled slots only
    tags: List[frozenset]
    kind: List[str]  # "simple" | "synthetic" | "complex"
    index: List[int]  # pool index (simple / complex), -1 for synthetic

    def slots(self, *kinds):
        return [i for i, k in enumerate(self.kind) if k in kinds]


def _to_chw(images):
    return torch.from_numpy(np.ascontiguousarray(np.stack(images).transpose(0, 3, 1, 2))).float()


class Pool:
    """Tensors for one group of records (simple or complex)."""

    def __init__(self, records):
        self.records = list(records)
        self.ids = [r.id for r in self.records]
        self.tags = [r.tags for r in self.records]
        if self.records:
            self.images = _to_chw([r.image for r in self.records])
            if all(r.pseudo_label is not None for r in self.records):
                self.labels = torch.from_numpy(np.stack([r.pseudo_label for r in self.records]).astype(np.int64))
            else:
                self.labels = None
        else:
            self.images = None
            self.labels = None

    def __len__(self):
        return len(self.records)


def _epoch_indices(n, count, t, seed, stream):
    """Indices for iteration ``t`` walking seeded per-epoch permutations of ``range(n)``."""
    out = []
    pos = (t - 1) * count
    while len(out) < count:
        epoch, offset = divmod(pos, n)
        perm = np.random.default_rng([seed, stream, epoch]).permutation(n)
        take = min(count - len(out), n - offset)
        out.extend(int(i) for i in perm[offset:offset + take])
        pos += take
    return out


class MDBATrainer:
    """Owns both networks, their optimizers and the training state."""

    def __init__(self, config, split, num_classes, val_records=None, run_dir=None, meta=None):
        self.config = config.validate()
        self.num_fg = int(num_classes)
        self.C = self.num_fg + 1
        self.simple = Pool(split.simple)
        self.complex = Pool(split.complex)
        if len(self.simple) == 0:
            raise ValueError("training needs at least one labelled simple image")
        if self.simple.labels is None:
            raise ValueError("every simple record needs a pseudo label")
        self.val_records = list(val_records or [])
        self.run_dir = Path(run_dir) if run_dir is not None else None
        self.meta = meta
        if len(self.complex) == 0 and config.batch_complex > 0:
            logger.warning("no complex images: all %d batch slots drawn from labelled images", config.batch_size)
        self.schedule = ThresholdSchedule(config.t_w, config.t_max, config.t_s, config.T_h, config.T_l, config.schedule_mode)
        torch.manual_seed(config.seed)
        mean = tuple(meta.mean) if meta is not None else (0.0, 0.0, 0.0)
        std = tuple(meta.std) if meta is not None else (1.0, 1.0, 1.0)
        self.backbone = build_backbone(config.backbone, self.C, width=config.backbone_width, mean=mean, std=std)
        self.discriminator = Discriminator(self.C, ndf=config.d_ndf) if config.c2s else None
        self.opt_g = torch.optim.SGD(
            self.backbone.parameters(), lr=config.lr_g, momentum=config.momentum, weight_decay=config.weight_decay
        )
        self.opt_d = (
            torch.optim.Adam(self.discriminator.parameters(), lr=config.lr_d, betas=tuple(config.adam_betas))
            if self.discriminator is not None
            else None
        )
        self.state = TrainState(rng_seed=config.seed, schedule=self.schedule)
        self.history: List[dict] = []

    # batch composition

    @property
    def n_simple_slots(self):
        return self.config.batch_size if len(self.complex) == 0 else self.config.batch_simple

    def compose_batch(self, t):
        cfg = self.config
        rng = np.random.default_rng([cfg.seed, 3, t])
        s_idx = _epoch_indices(len(self.simple), self.n_simple_slots, t, cfg.seed, 1)
        c_idx = _epoch_indices(len(self.complex), cfg.batch_complex, t, cfg.seed, 2) if len(self.complex) else []
        images = [self.simple.images[i] for i in s_idx] + [self.complex.images[i] for i in c_idx]
        H, W = images[0].shape[-2:]
        labels = [self.simple.labels[i] for i in s_idx] + [torch.zeros(H, W, dtype=torch.long) for _ in c_idx]
        tags = [self.simple.tags[i] for i in s_idx] + [self.complex.tags[i] for i in c_idx]
        kind = ["simple"] * len(s_idx) + ["complex"] * len(c_idx)
        index = list(s_idx) + list(c_idx)
        flips = rng.uniform(size=len(images)) < 0.5
        if cfg.hflip:
            for i, flip in enumerate(flips):
                if flip:
                    images[i] = images[i].flip(-1)
                    labels[i] = labels[i].flip(-1)
        if cfg.s2c and cfg.p_mix > 0:
            n = len(s_idx)
            eligible = [i for i in range(n) if self.state.kept.get(s_idx[i], True)]
            sources = [(images[i], labels[i], tags[i], self.simple.ids[s_idx[i]]) for i in range(n)]
            draws = rng.uniform(size=n)
            for i in range(n):
                partners = [j for j in eligible if j != i and self.simple.tags[s_idx[j]] != self.simple.tags[s_idx[i]]]
                if i not in eligible or draws[i] >= cfg.p_mix or not partners:
                    continue
                j = partners[int(rng.integers(len(partners)))]
                mask = sample_mix_mask(H, W, (cfg.mix_area_lo, cfg.mix_area_hi), rng)
                pair = cutmix(sources[i], sources[j], mask, channel_axis=0)
                images[i], labels[i], tags[i] = pair.image, pair.label, pair.tags
                kind[i], index[i] = "synthetic", -1
        return Batch(torch.stack(images), torch.stack(labels), tags, kind, index)

    # one iteration

    def _maybe_refresh_thresholds(self, t):
        cfg = self.config
        if not cfg.onf or t <= cfg.t_w:
            return
        first = t == cfg.t_w + 1 or self.state.threshold_table is None
        refresh = cfg.threshold_refresh_every and (t - cfg.t_w - 1) % cfg.threshold_refresh_every == 0
        if first or refresh:
            self.state.threshold_table = self.compute_thresholds(t)

    def compute_thresholds(self, t):
        cfg = self.config
        pairs = [(r.image, r.pseudo_label) for r in self.simple.records]
        table, preds = compute_class_thresholds(
            self.backbone, pairs, cfg.alpha, self.C, step=t, batch_size=cfg.eval_batch_size, return_predictions=True
        )
        dropped = []
        for rec, pred in zip(self.simple.records, preds):
            if len(rec.tags) != 1:
                continue
            dec = filter_image(pred, rec.pseudo_label, rec.tag, table, rec.id, cfg.noise_iou_scope)
            if not dec.kept:
                dropped.append(rec.id)
        self.state.onf_audit = {"t": t, "dropped": dropped, "n_simple": len(self.simple)}
        logger.info("t=%d class thresholds %s; %d/%d simple images above threshold",
                    t, {c: round(v, 4) for c, v in table.thresholds.items()}, len(dropped), len(self.simple))
        return table

    def train_step(self, t=None):
        cfg = self.config
        t = self.state.t + 1 if t is None else t
        if t != self.state.t + 1:
            raise RangeError(f"expected step {self.state.t + 1}, got {t}")
        if t > cfg.t_max:
            raise ScheduleExhaustedError(f"t={t} exceeds t_max={cfg.t_max}")
        self._maybe_refresh_thresholds(t)
        batch = self.compose_batch(t)
        lr_g = poly_lr(cfg.lr_g, t - 1, cfg.t_max, cfg.lr_power)
        lr_d = poly_lr(cfg.lr_d, t - 1, cfg.t_max, cfg.lr_power)
        for group in self.opt_g.param_groups:
            group["lr"] = lr_g
        if self.opt_d is not None:
            for group in self.opt_d.param_groups:
                group["lr"] = lr_d

        # generator phase
        self.backbone.train()
        if self.discriminator is not None:
            set_requires_grad(self.discriminator, False)
        raw = self.backbone(batch.images)
        logits = upsample_logits(raw, batch.images.shape[-2:])

        simple_slots = batch.slots("simple")
        labelled = batch.slots("simple", "synthetic")
        keep = torch.ones(len(batch.kind), dtype=torch.bool)
        dropped = 0
        dropped_classes = []
        table = self.state.threshold_table if cfg.onf else None
        if table is not None:
            with torch.no_grad():
                pred = logits.argmax(dim=1).numpy()
            for i in simple_slots:
                tags = batch.tags[i]
                if len(tags) != 1:
                    continue
                (tag,) = tags
                dec = filter_image(pred[i], batch.labels[i].numpy(), tag, table, scope=cfg.noise_iou_scope)
                keep[i] = dec.kept
                self.state.kept[batch.index[i]] = dec.kept
                dropped += not dec.kept
                if not dec.kept:
                    dropped_classes.append(int(tag))

        T = current_threshold(self.schedule, t) if cfg.pnd else math.inf
        lab = torch.tensor(labelled, dtype=torch.long)
        losses = pixel_losses_from_logits(logits[lab], batch.labels[lab]).drop(keep[lab])
        mask = noise_mask(losses, T)
        seg_loss, _ = masked_seg_loss(losses, mask)
        n_valid = int(losses.valid.sum())
        masked_frac = 1.0 - float(mask.sum()) / n_valid if n_valid else 0.0

        cls_logits = classification_logits(raw)
        cls_loss = classification_loss(cls_logits, batch.tags)

        adv_slots = [
            i for i, k in enumerate(batch.kind)
            if k == "complex"
            or (k == "synthetic" and cfg.adv_include_synthetic)
            or (k == "simple" and (keep[i] or cfg.adv_include_dropped))
        ]
        probs = torch.softmax(logits, dim=1)
        adv_loss = torch.zeros(())
        use_adv = self.discriminator is not None and adv_slots
        if use_adv:
            adv_in = probs[torch.tensor(adv_slots, dtype=torch.long)]
            try:
                if cfg.lambda_adv > 0:
                    adv_loss = adversarial_loss(self.discriminator(adv_in), from_logits=True)
                else:
                    with torch.no_grad():
                        adv_loss = adversarial_loss(self.discriminator(adv_in), from_logits=True)
            except NumericalError:
                raise NonFiniteLossError(
                    t, {"L_seg": seg_loss.item(), "L_cls": cls_loss.item(), "L_adv": math.nan}
                ) from None

        total = seg_loss + cls_loss + cfg.lambda_adv * adv_loss
        components = {"L_seg": seg_loss.item(), "L_cls": cls_loss.item(), "L_adv": adv_loss.item()}
        if not math.isfinite(total.item()):
            raise NonFiniteLossError(t, components)
        self.opt_g.zero_grad(set_to_none=True)
        total.backward()
        self.opt_g.step()

        # discriminator phase
        d_loss_value = 0.0
        if use_adv:
            set_requires_grad(self.discriminator, True)
            fake = probs.detach()[torch.tensor(adv_slots, dtype=torch.long)]
            real_slots = [i for i in simple_slots if keep[i]]
            fill = 0 if cfg.gt_ignore_fill == "background" else None
            real = one_hot(batch.labels[real_slots], self.C, ignore_fill=fill) if real_slots else None
            for _ in range(cfg.d_steps):
                d_loss = discriminator_loss(
                    self.discriminator(fake),
                    None if real is None else self.discriminator(real),
                    from_logits=True,
                )
                self.opt_d.zero_grad(set_to_none=True)
                d_loss.backward()
                self.opt_d.step()
            d_loss_value = d_loss.item()
            if not math.isfinite(d_loss_value):
                raise NonFiniteLossError(t, {"L_D": d_loss_value})

        self.state.t = t
        record = {
            "t": t,
            "lr_G": lr_g,
            "lr_D": lr_d if self.opt_d is not None else 0.0,
            "L_seg": components["L_seg"],
            "L_cls": components["L_cls"],
            "L_adv": components["L_adv"],
            "L_D": d_loss_value,
            "T_pixel": None if math.isinf(T) else T,
            "dropped_images": dropped,
            "dropped_classes": dropped_classes,
            "masked_pixel_frac": masked_frac,
            "L_total": total.item(),
        }
        self.history.append(record)
        return record

    # evaluation, checkpoints, the loop

    def dropped_images(self):
        """Ids of simple images whose most recent filter decision was a drop."""
        return [self.simple.ids[i] for i, kept in sorted(self.state.kept.items()) if not kept]

    def evaluate(self, records=None):
        records = self.val_records if records is None else records
        return evaluate_backbone(self.backbone, records, self.C, self.config.eval_batch_size)

    def checkpoint(self):
        """Snapshot of everything needed to resume; detached from the live tensors."""
        return copy.deepcopy({
            "header": CKPT_HEADER,
            "config": self.config.to_dict(),
            "num_classes": self.num_fg,
            "meta": None if self.meta is None else self.meta.to_json(),
            "backbone": self.backbone.state_dict(),
            "discriminator": None if self.discriminator is None else self.discriminator.state_dict(),
            "opt_g": self.opt_g.state_dict(),
            "opt_d": None if self.opt_d is None else self.opt_d.state_dict(),
            "state": self.state.to_dict(),
            "history": list(self.history),
        })

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(self.checkpoint(), path)
        return path

    def restore(self, ckpt):
        ckpt = load_checkpoint(ckpt) if not isinstance(ckpt, dict) else ckpt
        self.backbone.load_state_dict(ckpt["backbone"])
        self.opt_g.load_state_dict(ckpt["opt_g"])
        if self.discriminator is not None and ckpt.get("discriminator") is not None:
            self.discriminator.load_state_dict(ckpt["discriminator"])
            self.opt_d.load_state_dict(ckpt["opt_d"])
        self.state = TrainState.from_dict(ckpt["state"])
        self.state.schedule = self.schedule
        self.history = list(ckpt.get("history", []))
        return self

    def _log(self, record, fh):
        if fh is not None:
            fh.write(json.dumps({k: record[k] for k in LOG_KEYS}) + "\n")
        if self.config.log_every and record["t"] % self.config.log_every == 0:
            logger.info("t=%d seg=%.4f cls=%.4f adv=%.4f D=%.4f dropped=%d masked=%.3f", record["t"],
                        record["L_seg"], record["L_cls"], record["L_adv"], record["L_D"],
                        record["dropped_images"], record["masked_pixel_frac"])

    def fit(self, stop_at=None):
        cfg = self.config
        stop_at = cfg.t_max if stop_at is None else min(stop_at, cfg.t_max)
        fh = None
        if self.run_dir is not None:
            self.run_dir.mkdir(parents=True, exist_ok=True)
            save_config(cfg, self.run_dir / "config.json")
            fh = open(self.run_dir / "train_log.jsonl", "a" if self.state.t else "w")
        epoch_len = -(-len(self.simple) // self.n_simple_slots)
        drops = {}
        try:
            while self.state.t < stop_at:
                record = self.train_step()
                self._log(record, fh)
                for c in record["dropped_classes"]:
                    drops[c] = drops.get(c, 0) + 1
                if record["t"] % epoch_len == 0 or record["t"] == cfg.t_max:
                    self._log_drops(record["t"], epoch_len, drops)
                    drops = {}
                t = record["t"]
                if self.state.onf_audit is not None and self.state.onf_audit["t"] == t and self.run_dir is not None:
                    (self.run_dir / "onf_audit.json").write_text(json.dumps(self.state.onf_audit, indent=1) + "\n")
                if cfg.eval_every and self.val_records and t % cfg.eval_every == 0 and t < cfg.t_max:
                    self._periodic_eval(t)
                if cfg.checkpoint_every and self.run_dir is not None and t % cfg.checkpoint_every == 0:
                    self.save(self.run_dir / f"ckpt_{t:06d}.pt")
        finally:
            if fh is not None:
                fh.close()
        if self.state.t == cfg.t_max:
            if self.val_records:
                self._periodic_eval(self.state.t)
            if self.run_dir is not None:
                self.save(self.run_dir / "final.pt")
        return self

    def _log_drops(self, t, epoch_len, drops):
        """Per-class ONF drop counts over the epoch ending at step ``t``."""
        if self.run_dir is None or not self.config.onf or t <= self.config.t_w:
            return
        entry = {"epoch": -(-t // epoch_len), "t": t, "dropped": {str(c): n for c, n in sorted(drops.items())}}
        with open(self.run_dir / "onf_drops.jsonl", "a") as fh:
            fh.write(json.dumps(entry) + "\n")
        if drops:
            logger.info("epoch ending t=%d: dropped per class %s", t, entry["dropped"])

    def _periodic_eval(self, t):
        report = self.evaluate()
        logger.info("t=%d val mIoU %.4f", t, report.miou or float("nan"))
        if self.run_dir is not None:
            with open(self.run_dir / "eval_log.jsonl", "a") as fh:
                fh.write(json.dumps({"t": t, "miou": report.miou}) + "\n")
        if report.miou is not None and (self.state.best_miou is None or report.miou > self.state.best_miou):
            self.state.best_miou = report.miou
            if self.run_dir is not None:
                self.save(self.run_dir / "best.pt")
        return report


@torch.no_grad()
def predict_proba(backbone, images, batch_size=50):
    """``(N, C, H, W)`` probabilities for an ``(N, H, W, 3)`` float array."""
    backbone.eval()
    out = []
    for start in range(0, len(images), batch_size):
        chunk = _to_chw(list(images[start:start + batch_size]))
        logits = upsample_logits(backbone(chunk), chunk.shape[-2:])
        out.append(torch.softmax(logits, dim=1).numpy())
    return np.concatenate(out)


@torch.no_grad()
def predict_labels(backbone, images, batch_size=50):
    backbone.eval()
    out = []
    for start in range(0, len(images), batch_size):
        chunk = _to_chw(list(images[start:start + batch_size]))
        logits = upsample_logits(backbone(chunk), chunk.shape[-2:])
        out.append(logits.argmax(dim=1).numpy().astype(np.uint8))
    return np.concatenate(out) if out else np.zeros((0, 0, 0), dtype=np.uint8)


def evaluate_backbone(backbone, records, num_classes, batch_size=50):
    """Dataset-level IoU report of ``backbone`` against each record's ``gt``."""
    records = [r for r in records if r.gt is not None]
    cm = ConfusionMatrix(num_classes)
    if records:
        preds = predict_labels(backbone, [r.image for r in records], batch_size)
        for rec, pred in zip(records, preds):
            cm.update(rec.gt, pred)
    return iou_report(cm)


def load_checkpoint(path):
    ckpt = torch.load(Path(path), map_location="cpu", weights_only=False)
    if not isinstance(ckpt, dict) or ckpt.get("header") != CKPT_HEADER:
        raise ValueError(f"{path} is not an {CKPT_HEADER} checkpoint")
    return ckpt


def backbone_from_checkpoint(ckpt):
    """Rebuild the segmentation network stored in a checkpoint (path or dict)."""
    ckpt = load_checkpoint(ckpt) if not isinstance(ckpt, dict) else ckpt
    cfg = TrainConfig.from_dict(ckpt["config"])
    meta = ckpt.get("meta") or {}
    net = build_backbone(
        cfg.backbone,
        int(ckpt["num_classes"]) + 1,
        width=cfg.backbone_width,
        mean=tuple(meta.get("mean", (0.0, 0.0, 0.0))),
        std=tuple(meta.get("std", (1.0, 1.0, 1.0))),
    )
    net.load_state_dict(ckpt["backbone"])
    net.eval()
    return net


def run_training(config, split, num_classes, val_records=None, run_dir=None, resume_from=None,
                 stop_at=None, meta=None):
    """Train from scratch (or resume) and return the :class:`MDBATrainer`."""
    trainer = MDBATrainer(config, split, num_classes, val_records, run_dir, meta)
    if resume_from is not None:
        trainer.restore(resume_from)
    return trainer.fit(stop_at=stop_at)


def export_pseudo_labels(backbone, records, out_dir, batch_size=50, restrict_to_tags=False):
    """Write argmax predictions as 8-bit class-id PNGs, one per record.

    With ``restrict_to_tags`` the argmax runs over background plus the
    record's own tags only.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for start in range(0, len(records), batch_size):
        chunk = records[start:start + batch_size]
        probs = predict_proba(backbone, [r.image for r in chunk], batch_size)
        for rec, p in zip(chunk, probs):
            if restrict_to_tags:
                allowed = np.zeros(p.shape[0], dtype=bool)
                allowed[[0, *sorted(rec.tags)]] = True
                p = np.where(allowed[:, None, None], p, -1.0)
            path = out_dir / f"{rec.id}.png"
            write_label(path, p.argmax(axis=0).astype(np.uint8))
            paths.append(path)
    return paths


def attach_exported_labels(records, label_dir):
    """Records carrying exported labels as their pseudo labels, ready for retraining."""
    from .data import read_label

    label_dir = Path(label_dir)
    out = []
    for rec in records:
        path = label_dir / f"{rec.id}.png"
        if not path.is_file():
            raise FileNotFoundError(f"no exported label for {rec.id!r} in {label_dir}")
        out.append(rec.with_pseudo_label(read_label(path)))
    return out


def retrain_second_step(config, records, num_classes, val_records=None, run_dir=None, meta=None):
    """Fresh network trained with plain cross-entropy + classification on exported labels."""
    cfg = config.second_step()
    split = DatasetSplit(simple=list(records), complex=[])
    return run_training(cfg, split, num_classes, val_records, run_dir, meta=meta)
