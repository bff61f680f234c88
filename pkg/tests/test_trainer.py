import json

import numpy as np
import pytest
import torch

from mdba.config import TrainConfig
from mdba.data import DatasetSplit, read_label
from mdba.exceptions import NonFiniteLossError, RangeError, ScheduleExhaustedError
from mdba.trainer import (
    LOG_KEYS,
    MDBATrainer,
    attach_exported_labels,
    backbone_from_checkpoint,
    export_pseudo_labels,
    poly_lr,
    retrain_second_step,
    run_training,
)


def small_config(**kw):
    base = dict(t_max=24, t_w=8, t_s=4, lr_g=0.02, d_ndf=8, backbone_width=8, eval_batch_size=16)
    base.update(kw)
    return TrainConfig(**base)


def checksum(module):
    return sum(p.detach().double().sum().item() for p in module.parameters())


def test_poly_lr():
    assert poly_lr(2.5e-4, 0, 100) == 2.5e-4
    assert poly_lr(2.5e-4, 100, 100) == 0
    assert poly_lr(2.5e-4, 50, 100, 0.9) == pytest.approx(2.5e-4 * 0.5 ** 0.9)
    assert poly_lr(2.5e-4, 50, 100) == pytest.approx(1.34e-4, rel=1e-2)
    with pytest.raises(RangeError):
        poly_lr(1.0, 101, 100)


def test_warmup_step_is_plain_cross_entropy(tiny_data):
    meta, split, _ = tiny_data
    tr = MDBATrainer(small_config(p_mix=0.0), split, meta.num_classes)
    rec = tr.train_step()
    assert rec["T_pixel"] is None and rec["dropped_images"] == 0 and rec["masked_pixel_frac"] == 0
    assert tr.state.threshold_table is None
    total = rec["L_seg"] + rec["L_cls"] + tr.config.lambda_adv * rec["L_adv"]
    assert rec["L_total"] == pytest.approx(total, abs=1e-6)


def test_thresholds_appear_after_warmup(tiny_data):
    meta, split, _ = tiny_data
    tr = MDBATrainer(small_config(), split, meta.num_classes)
    for _ in range(8):
        tr.train_step()
        assert tr.state.threshold_table is None
    rec = tr.train_step()
    assert tr.state.threshold_table.computed_at_step == 9
    assert rec["T_pixel"] == pytest.approx(1.2)
    assert tr.state.onf_audit["t"] == 9
    for _ in range(15):
        r = tr.train_step()
        assert r["L_total"] == pytest.approx(r["L_seg"] + r["L_cls"] + 0.001 * r["L_adv"], abs=1e-6)
    assert r["T_pixel"] == pytest.approx(0.8)
    dropped = tr.dropped_images()
    assert len(dropped) == sum(not k for k in tr.state.kept.values())
    assert set(dropped) <= {rec.id for rec in split.simple}
    with pytest.raises(ScheduleExhaustedError):
        tr.train_step()


def test_step_counter_and_order(tiny_data):
    meta, split, _ = tiny_data
    tr = MDBATrainer(small_config(), split, meta.num_classes)
    with pytest.raises(RangeError):
        tr.train_step(2)


def test_phase_isolation(tiny_data, monkeypatch):
    meta, split, _ = tiny_data
    tr = MDBATrainer(small_config(), split, meta.num_classes)
    seen = {}
    real_step_d = tr.opt_d.step
    real_step_g = tr.opt_g.step

    def step_g(*a, **k):
        before = checksum(tr.discriminator)
        out = real_step_g(*a, **k)
        seen["d_during_g"] = (before, checksum(tr.discriminator))
        seen["g_before_d"] = checksum(tr.backbone)
        return out

    def step_d(*a, **k):
        out = real_step_d(*a, **k)
        seen["g_after_d"] = checksum(tr.backbone)
        return out

    monkeypatch.setattr(tr.opt_g, "step", step_g)
    monkeypatch.setattr(tr.opt_d, "step", step_d)
    tr.train_step()
    assert seen["d_during_g"][0] == seen["d_during_g"][1]
    assert seen["g_before_d"] == seen["g_after_d"]


def test_zero_lambda_generator_matches_no_adversary(tiny_data):
    meta, split, _ = tiny_data
    a = MDBATrainer(small_config(lambda_adv=0.0), split, meta.num_classes)
    b = MDBATrainer(small_config(lambda_adv=0.0, c2s=False), split, meta.num_classes)
    for _ in range(3):
        ra, rb = a.train_step(), b.train_step()
        assert ra["L_seg"] == rb["L_seg"] and ra["L_cls"] == rb["L_cls"]
        assert ra["L_D"] > 0 and rb["L_D"] == 0
    for pa, pb in zip(a.backbone.state_dict().values(), b.backbone.state_dict().values()):
        assert torch.equal(pa, pb)


def test_batch_composition(tiny_data):
    meta, split, _ = tiny_data
    tr = MDBATrainer(small_config(p_mix=1.0), split, meta.num_classes)
    batch = tr.compose_batch(1)
    assert batch.images.shape == (10, 3, 64, 64)
    assert batch.kind[5:] == ["complex"] * 5
    synth = batch.slots("synthetic")
    assert synth
    for i in synth:
        assert len(batch.tags[i]) == 2
    again = tr.compose_batch(1)
    assert torch.equal(batch.images, again.images) and batch.kind == again.kind


def test_non_finite_loss_aborts(tiny_data):
    meta, split, _ = tiny_data
    tr = MDBATrainer(small_config(), split, meta.num_classes)
    with torch.no_grad():
        tr.backbone.classifier.weight.fill_(float("nan"))
    with pytest.raises(NonFiniteLossError) as err:
        tr.train_step()
    assert err.value.t == 1 and "L_seg" in err.value.components


def test_run_dir_outputs_and_resume(tiny_data, tmp_path):
    meta, split, val = tiny_data
    cfg = small_config(checkpoint_every=12, eval_every=12)
    full = run_training(cfg, split, meta.num_classes, val, tmp_path / "full", meta=meta)
    names = {p.name for p in (tmp_path / "full").iterdir()}
    assert {"config.json", "train_log.jsonl", "onf_audit.json", "onf_drops.jsonl", "final.pt", "best.pt",
            "ckpt_000012.pt"} <= names
    drops = [json.loads(x) for x in (tmp_path / "full" / "onf_drops.jsonl").read_text().splitlines()]
    assert drops[-1]["t"] == 24 and all(e["t"] > 8 for e in drops)
    lines = (tmp_path / "full" / "train_log.jsonl").read_text().splitlines()
    assert len(lines) == 24 and set(json.loads(lines[0])) == set(LOG_KEYS)

    again = run_training(cfg, split, meta.num_classes, val, tmp_path / "again", meta=meta)
    assert again.history == full.history

    part = run_training(cfg, split, meta.num_classes, val, tmp_path / "part", stop_at=12, meta=meta)
    assert part.state.t == 12
    resumed = run_training(cfg, split, meta.num_classes, val, tmp_path / "resumed",
                           resume_from=tmp_path / "part" / "ckpt_000012.pt", meta=meta)
    assert resumed.history == full.history
    for pa, pb in zip(resumed.backbone.state_dict().values(), full.backbone.state_dict().values()):
        assert torch.equal(pa, pb)


def test_in_memory_checkpoint_survives_further_training(tiny_data):
    meta, split, _ = tiny_data
    cfg = small_config()
    tr = MDBATrainer(cfg, split, meta.num_classes)
    tr.fit(stop_at=12)
    ckpt = tr.checkpoint()
    tr.fit()
    resumed = MDBATrainer(cfg, split, meta.num_classes).restore(ckpt)
    assert resumed.state.t == 12
    resumed.fit()
    assert resumed.history == tr.history


def test_export_and_retrain(tiny_data, tmp_path):
    meta, split, val = tiny_data
    tr = run_training(small_config(), split, meta.num_classes, meta=meta)
    records = split.simple + split.complex
    paths = export_pseudo_labels(tr.backbone, records, tmp_path / "labels")
    assert len(paths) == len(records)
    first = [read_label(p) for p in paths]
    assert all(lbl.max() < meta.num_labels for lbl in first)
    export_pseudo_labels(tr.backbone, records, tmp_path / "again")
    assert all(np.array_equal(a, read_label(tmp_path / "again" / p.name)) for a, p in zip(first, paths))
    restricted = export_pseudo_labels(tr.backbone, records, tmp_path / "restricted", restrict_to_tags=True)
    for r, p in zip(records, restricted):
        assert set(np.unique(read_label(p))) <= {0, *r.tags}

    relabelled = attach_exported_labels(records, tmp_path / "labels")
    second = retrain_second_step(small_config(), relabelled, meta.num_classes, val, tmp_path / "second", meta)
    snap = json.loads((tmp_path / "second" / "config.json").read_text())
    assert snap["lambda_adv"] == 0 and snap["p_mix"] == 0
    assert not any(snap[k] for k in ("onf", "pnd", "s2c", "c2s"))
    net = backbone_from_checkpoint(tmp_path / "second" / "final.pt")
    assert net.num_classes == meta.num_labels
    assert second.evaluate(val).miou is not None
    with pytest.raises(FileNotFoundError):
        attach_exported_labels(records, tmp_path / "nowhere")


def test_empty_complex_pool_warns(tiny_data, caplog):
    meta, split, _ = tiny_data
    with caplog.at_level("WARNING"):
        tr = MDBATrainer(small_config(), DatasetSplit(split.simple, []), meta.num_classes)
    assert "no complex images" in caplog.text
    assert tr.compose_batch(1).images.shape[0] == 10
    tr.train_step()
