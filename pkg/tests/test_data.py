import json

import numpy as np
import pytest
from PIL import Image
from scipy import ndimage

from mdba.data import (
    IGNORE,
    ImageRecord,
    generate_pseudo_label,
    load_dataset,
    load_meta,
    parse_index,
    split_dataset,
)
from mdba.exceptions import (
    EmptyTagsError,
    InvalidSpecError,
    MalformedIndexError,
    MissingFileError,
    MultiTagError,
    ShapeError,
    TagRangeError,
)
from mdba.metrics import image_iou
from mdba.synthetic import FixtureSpec, load_corruption, make_synthetic_dataset

SMALL = dict(n_simple=30, n_complex=10, n_val_simple=5, n_val_complex=5)


def rec(image_id, tags, sal=None, size=2):
    img = np.zeros((size, size, 3), dtype=np.float32)
    return ImageRecord(image_id, img, frozenset(tags), sal)


def write_dataset(root, lines, num_classes=13, with_saliency=True):
    (root / "images").mkdir(parents=True)
    (root / "saliency").mkdir()
    (root / "meta.json").write_text(json.dumps({"num_classes": num_classes}))
    (root / "tags.txt").write_text("\n".join(lines) + "\n")
    for line in lines:
        image_id = line.split()[0]
        Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8)).save(root / "images" / f"{image_id}.png")
        if with_saliency:
            Image.fromarray(np.full((4, 4), 200, dtype=np.uint8)).save(root / "saliency" / f"{image_id}.png")


def test_pseudo_label_examples():
    out = generate_pseudo_label([[0.9, 0.1], [0.2, 0.8]], {12}, 0.5)
    assert out.tolist() == [[12, 0], [0, 12]]
    assert generate_pseudo_label(np.zeros((3, 3)), {5}).max() == 0
    assert np.all(generate_pseudo_label(np.ones((3, 3)), {5}) == 5)
    assert generate_pseudo_label([[0.5]], {1}).tolist() == [[1]]  # >= threshold


def test_pseudo_label_errors():
    with pytest.raises(MultiTagError):
        generate_pseudo_label(np.ones((2, 2)), {1, 2})
    with pytest.raises(ShapeError):
        generate_pseudo_label(np.ones((2, 2)), {1}, image_shape=(3, 3, 3))
    with pytest.raises(ValueError):
        generate_pseudo_label(np.ones((2, 2)), {1}, binarize_threshold=1.0)


def test_pseudo_label_is_deterministic_and_binary():
    sal = np.random.default_rng(0).uniform(size=(9, 9))
    a = generate_pseudo_label(sal, {3})
    assert np.array_equal(a, generate_pseudo_label(sal, {3}))
    assert set(np.unique(a)) <= {0, 3}


def test_split_rules():
    s = np.ones((2, 2))
    records = [rec("a", {1}, s), rec("b", {1, 2}), rec("c", {3}, s)]
    split = split_dataset(records)
    assert [r.id for r in split.simple] == ["a", "c"]
    assert [r.id for r in split.complex] == ["b"]
    assert all(r.pseudo_label is not None for r in split.simple)
    assert len(split) == len(records)
    with pytest.raises(EmptyTagsError):
        split_dataset([rec("z", set())])
    with pytest.raises(MalformedIndexError):
        split_dataset([rec("a", {1}, s), rec("a", {2}, s)])


def test_record_is_immutable():
    r = rec("a", {1}, np.ones((2, 2)))
    with pytest.raises(ValueError):
        r.image[0, 0, 0] = 1.0
    with pytest.raises(ShapeError):
        ImageRecord("x", np.zeros((2, 2, 3)), frozenset({1}), np.ones((3, 3)))


def test_parse_index():
    assert parse_index(["0001 12"], 20) == [("0001", frozenset({12}))]
    assert parse_index(["0002 3 7", "", "# note"], 20) == [("0002", frozenset({3, 7}))]
    with pytest.raises(TagRangeError):
        parse_index(["0003 0"], 20)
    with pytest.raises(MalformedIndexError):
        parse_index(["0004"], 20)
    with pytest.raises(MalformedIndexError):
        parse_index(["0004 x"], 20)


def test_load_dataset(tmp_path):
    write_dataset(tmp_path, ["0002 3 7", "0001 12"])
    records = load_dataset(tmp_path)
    assert [r.id for r in records] == ["0001", "0002"]
    assert records[0].tags == {12} and records[1].tags == {3, 7}
    assert records[0].saliency.max() == pytest.approx(200 / 255)
    assert [r.id for r in load_dataset(tmp_path, n_jobs=3)] == ["0001", "0002"]
    assert load_meta(tmp_path).class_names[0] == "class0"


def test_load_dataset_errors(tmp_path):
    write_dataset(tmp_path / "a", ["0001 1"], with_saliency=False)
    with pytest.raises(MissingFileError):
        load_dataset(tmp_path / "a")
    assert load_dataset(tmp_path / "a", require_saliency=False)[0].saliency is None
    write_dataset(tmp_path / "b", ["0003 0"])
    with pytest.raises(TagRangeError):
        load_dataset(tmp_path / "b")
    write_dataset(tmp_path / "c", ["0001 1", "0001 2"])
    with pytest.raises(MalformedIndexError):
        load_dataset(tmp_path / "c")
    with pytest.raises(MissingFileError):
        load_dataset(tmp_path / "nowhere")


def _tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_fixture_is_reproducible(tmp_path):
    spec = FixtureSpec(**SMALL, dilation_prob=0.5, extra_blob_prob=0.3)
    make_synthetic_dataset(spec, 3, tmp_path / "a")
    make_synthetic_dataset(spec, 3, tmp_path / "b")
    make_synthetic_dataset(spec, 4, tmp_path / "c")
    a, b = _tree_bytes(tmp_path / "a"), _tree_bytes(tmp_path / "b")
    assert a == b
    assert a != _tree_bytes(tmp_path / "c")


def test_zero_corruption_is_ground_truth(tmp_path):
    make_synthetic_dataset(FixtureSpec(**SMALL), 0, tmp_path)
    split = split_dataset(load_dataset(tmp_path))
    assert len(split.simple) == 30 and len(split.complex) == 10
    for r in split.simple:
        assert np.array_equal(r.pseudo_label, r.gt)
        assert image_iou(r.gt, r.pseudo_label, r.tag) == 1.0
    val = load_dataset(tmp_path, "val")
    assert len(val) == 10 and all(r.gt is not None for r in val)


def test_extra_blob_certainty(tmp_path):
    make_synthetic_dataset(FixtureSpec(**SMALL, extra_blob_prob=1.0), 1, tmp_path)
    flags = load_corruption(tmp_path)
    split = split_dataset(load_dataset(tmp_path))
    for r in split.simple:
        assert flags[r.id]["extra_blob"]
        regions, n = ndimage.label(r.pseudo_label == r.tag)
        wrong = [k for k in range(1, n + 1) if np.all(r.gt[regions == k] != r.tag)]
        assert wrong, r.id


def test_corruption_flags_follow_rates(tmp_path):
    make_synthetic_dataset(FixtureSpec(n_simple=200, n_complex=0, n_val_simple=0, n_val_complex=0,
                                       dilation_prob=0.5, extra_blob_prob=0.25), 2, tmp_path)
    flags = load_corruption(tmp_path).values()
    assert 0.35 < np.mean([f["dilated"] for f in flags]) < 0.65
    assert 0.15 < np.mean([f["extra_blob"] for f in flags]) < 0.35


def test_invalid_spec(tmp_path):
    with pytest.raises(InvalidSpecError):
        make_synthetic_dataset(FixtureSpec(dilation_prob=1.5), 0, tmp_path)
    with pytest.raises(InvalidSpecError):
        FixtureSpec.from_dict({"bogus": 1})
    with pytest.raises(InvalidSpecError):
        make_synthetic_dataset(FixtureSpec(num_classes=9), 0, tmp_path)


def test_ignore_is_outside_class_range():
    assert IGNORE == 255
