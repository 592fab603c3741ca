import gzip
import json
import os
import struct
import warnings
from collections import Counter
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from hps import harness
from hps.case import CaseDescription, Const, fact
from hps.errors import DataFormatError, InvalidInput
from hps.glyph import Detection, DetectionRecord
from hps.raster import GrayImage
from hps.sage import GeneralizationPool, merge
from hps.vrd import train_predicates

from conftest import CONFIGS, DATA


def write_idx(dirpath, images, labels, gz=False, img_magic=0x803, lab_magic=0x801, lab_count=None):
    n, r, c = images.shape
    ib = struct.pack(">IIII", img_magic, n, r, c) + images.astype(np.uint8).tobytes()
    lb = struct.pack(">II", lab_magic, n if lab_count is None else lab_count) + \
        bytes(labels)
    ip, lp = Path(dirpath) / "img.idx", Path(dirpath) / "lab.idx"
    ip.write_bytes(gzip.compress(ib) if gz else ib)
    lp.write_bytes(gzip.compress(lb) if gz else lb)
    return ip, lp


@pytest.fixture
def tiny_idx():
    rng = np.random.default_rng(0)
    return rng.integers(0, 256, size=(2, 5, 4)).astype(np.uint8), [3, 7]


@pytest.mark.parametrize("gz", [False, True])
def test_idx_round_trip(tmp_path, tiny_idx, gz):
    imgs, labs = tiny_idx
    items = harness.load_idx(*write_idx(tmp_path, imgs, labs, gz=gz))
    assert [y for _, y in items] == ["3", "7"]
    for (img, _), ref in zip(items, imgs):
        assert img.pixels.shape == (5, 4)
        assert np.array_equal(img.pixels, ref)


def test_idx_bad_magic(tmp_path, tiny_idx):
    with pytest.raises(DataFormatError, match="byte 0"):
        harness.load_idx(*write_idx(tmp_path, *tiny_idx, img_magic=0x801))
    with pytest.raises(DataFormatError, match="byte 0"):
        harness.load_idx(*write_idx(tmp_path, *tiny_idx, lab_magic=0x803))


def test_idx_count_mismatch(tmp_path, tiny_idx):
    with pytest.raises(DataFormatError, match="byte 4"):
        harness.load_idx(*write_idx(tmp_path, *tiny_idx, lab_count=3))


def test_idx_truncated(tmp_path, tiny_idx):
    ip, lp = write_idx(tmp_path, *tiny_idx)
    ip.write_bytes(ip.read_bytes()[:-3])
    with pytest.raises(DataFormatError, match="truncated at byte 53"):
        harness.load_idx(ip, lp)
    ip.write_bytes(b"\x00\x00")
    with pytest.raises(DataFormatError, match="header"):
        harness.load_idx(ip, lp)


def test_bundled_subset_histogram(mnist_items):
    assert len(mnist_items) == 5000
    assert mnist_items[0][0].pixels.shape == (28, 28)
    hist = Counter(y for _, y in mnist_items)
    assert sorted(hist) == [str(d) for d in range(10)]
    assert set(hist.values()) == {500}


def _png(path, value=0):
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.full((6, 6), value, np.uint8)).save(path)


def test_png_dir_two_classes(tmp_path):
    for c in ("cat", "dog"):
        for i in range(3):
            _png(tmp_path / c / f"{i}.png", i)
    items = harness.load_png_dir(tmp_path)
    assert len(items) == 6 and sorted({y for _, y in items}) == ["cat", "dog"]
    assert [y for _, y in items] == ["cat"] * 3 + ["dog"] * 3


def test_png_dir_empty_root(tmp_path):
    with pytest.raises(DataFormatError):
        harness.load_png_dir(tmp_path)


def test_png_dir_nested_matches_walk(tmp_path):
    for rel in ("a/1.png", "a/sub/2.png", "a/sub/deeper/3.png", "b/x.png", "b/y/z.png"):
        _png(tmp_path / rel)
    (tmp_path / "b" / "notes.txt").write_text("ignore me")
    walked = sum(1 for _, _, files in os.walk(tmp_path) for f in files if f.endswith(".png"))
    assert len(harness.load_png_dir(tmp_path)) == walked == 5


def test_png_dir_skips_unreadable(tmp_path):
    _png(tmp_path / "a" / "good.png")
    (tmp_path / "a" / "bad.png").write_bytes(b"not a png")
    with pytest.warns(UserWarning, match="bad.png"):
        items = harness.load_png_dir(tmp_path)
    assert len(items) == 1


def test_png_dir_empty_class(tmp_path):
    _png(tmp_path / "a" / "good.png")
    (tmp_path / "b").mkdir()
    with pytest.raises(DataFormatError, match="b"):
        harness.load_png_dir(tmp_path)


# -- config ---------------------------------------------------------------------------

def test_config_round_trip(tmp_path):
    cfg = harness.load_config(CONFIGS / "phal_synthetic.ini")
    assert cfg.cascade.K == 5 and cfg.kind == "glyph-jsonl"
    p = tmp_path / "copy.ini"
    p.write_text(harness.dump_config(cfg))
    back = harness.load_config(p)
    assert back.to_dict() == cfg.to_dict()
    assert harness.config_from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()


@pytest.mark.parametrize("text,exc", [
    ("[data]\nbogus = 1\n", InvalidInput),
    ("[weird]\nx = 1\n", InvalidInput),
    ("[data]\ntrain_per_class = ten\n", InvalidInput),
    ("[phal]\nK = 1\nQ = 2\n", InvalidInput),
    ("no section header\n", DataFormatError),
])
def test_bad_configs(tmp_path, text, exc):
    p = tmp_path / "c.ini"
    p.write_text(text)
    with pytest.raises(exc):
        harness.load_config(p)


def test_config_paths_relative_to_file():
    cfg = harness.load_config(CONFIGS / "mnist10.ini")
    assert cfg.path(cfg.images).resolve() == (DATA / "mnist5k-images-idx3-ubyte.gz").resolve()


# -- splitting and reports ------------------------------------------------------------------

def test_stratified_split_disjoint_and_seeded():
    labels = [str(i % 4) for i in range(80)]
    tr, te = harness.stratified_split(labels, 3, 5, seed=1)
    assert not set(tr) & set(te)
    assert Counter(labels[i] for i in tr) == {str(c): 3 for c in range(4)}
    assert Counter(labels[i] for i in te) == {str(c): 5 for c in range(4)}
    assert harness.stratified_split(labels, 3, 5, seed=1) == (tr, te)
    assert harness.stratified_split(labels, 3, 5, seed=2) != (tr, te)


def test_larger_training_sets_nest_and_share_test_set():
    labels = [str(i % 3) for i in range(300)]
    small_tr, small_te = harness.stratified_split(labels, 10, 20, seed=4)
    big_tr, big_te = harness.stratified_split(labels, 60, 20, seed=4)
    assert small_te == big_te
    assert set(small_tr) < set(big_tr)
    assert not set(big_tr) & set(big_te)


def test_confusion_invariants():
    truth = ["a", "a", "b", "b", "b", "c"]
    pred = ["a", "b", "b", "b", "a", "c"]
    acc, m, per = harness.confusion_report(truth, pred, ["a", "b", "c"])
    assert [sum(r) for r in m] == [2, 3, 1]
    assert acc == 100.0 * sum(m[i][i] for i in range(3)) / len(truth)
    assert per == {"a": 50.0, "b": pytest.approx(200 / 3), "c": 100.0}


def _glyph_data():
    return harness.load_glyph_jsonl(DATA / "phal_synthetic.jsonl")


def test_one_class_train_equals_test():
    items = _glyph_data()[:1]
    cfg = harness.ExperimentConfig(kind="glyph-jsonl", train_per_class=1, test_per_class=1)
    rep = harness.run_experiment(cfg, data=(items, items))
    assert rep.accuracy == 100.0 and rep.n_train == rep.n_test == 1


def test_small_mnist_run_deterministic(tmp_path, mnist_items):
    cfg = harness.load_config(CONFIGS / "mnist10.ini")
    cfg.train_per_class, cfg.test_per_class = 2, 3
    data = (mnist_items, None)
    a = harness.run_experiment(cfg, pools_out=tmp_path / "a", data=data)
    b = harness.run_experiment(cfg, pools_out=tmp_path / "b", data=data)
    assert a.dumps() == b.dumps()
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
    rep = json.loads(a.dumps())
    assert "wall_time" not in rep and rep["config"]["seed"] == 0
    assert [sum(r) for r in rep["confusion"]] == [3] * 10
    assert rep["single_pass"] == {"encoded": 20, "added": 20, "distinct_items": 20}


def test_parallel_encoding_matches_serial(mnist_items):
    imgs = [img for img, _ in mnist_items[:6]]
    p = harness.EncodeParams()
    serial = harness.encode_all(imgs, p, workers=1)
    parallel = harness.encode_all(imgs, p, workers=2)
    assert [c.facts for c in serial] == [c.facts for c in parallel]


def test_blank_image_encodes_to_empty_case():
    case = harness.encode_image(GrayImage(np.zeros((28, 28), np.uint8)))
    assert len(case.facts) == 0


def test_trained_model_round_trip(tmp_path):
    items = _glyph_data()
    cfg = harness.load_config(CONFIGS / "phal_synthetic.ini")
    tr, te = harness.stratified_split([y for _, y in items], 2, 2, 0)
    for mode in ("flat", "phal"):
        model, single = harness.train_model(cfg, mode, items, tr)
        assert single["added"] == len(tr)
        model.save(tmp_path / mode)
        back = harness.TrainedModel.load(tmp_path / mode)
        for i in te:
            probe = model.encode(items[i][0])
            assert back.classify(probe) == model.classify(probe)


def test_missing_manifest(tmp_path):
    with pytest.raises(DataFormatError):
        harness.TrainedModel.load(tmp_path)


# -- inspection -----------------------------------------------------------------------------

def test_inspect_two_example_generalization(tmp_path):
    pool = GeneralizationPool("c", threshold=0.4)
    pool.add_example(CaseDescription([fact("p", "A"), fact("q", "A"), fact("r", "B")]))
    pool.add_example(CaseDescription([fact("p", "X"), fact("q", "X"), fact("u", "Y")]))
    pool.save(tmp_path / "c.json")
    text = harness.inspect_pool(tmp_path / "c.json")
    assert "1.00  (p e0)" in text and "0.50  (r e1)" in text
    assert "generalization G0 (2 examples)" in text


def test_inspect_empty_pool(tmp_path):
    GeneralizationPool("nothing").save(tmp_path / "e.json")
    assert "empty pool" in harness.inspect_pool(tmp_path / "e.json")


def test_inspect_corrupt(tmp_path):
    (tmp_path / "x.json").write_text("[1, 2")
    with pytest.raises(DataFormatError):
        harness.inspect_pool(tmp_path / "x.json")


def test_inspect_wears_pool(tmp_path):
    recs = []
    for i, (clothing, box) in enumerate((("jeans", (8, 60, 46, 100)), ("shorts", (8, 60, 46, 80)),
                                         ("jeans", (6, 58, 44, 100)), ("shoes", (10, 92, 45, 102)))):
        recs.append(DetectionRecord(f"w{i}", 100, 120, (Detection((0, 0, 40, 100), "person"),
                                                        Detection(box, clothing)),
                                    ((1, "wears", 0),)))
    pools = train_predicates(recs, threshold=0.5)
    pools["wears"].save(tmp_path / "wears.json")
    text = harness.inspect_pool(tmp_path / "wears.json")
    assert "(PO " in text
    assert "muchSmaller" in text or "smaller" in text
    assert "is most likely: jeans 0.50" in text
    assert "shorts 0.25" in text and "person 1.00" in text


def test_generalization_svg():
    a = harness.encode_glyph(_glyph_data()[0][0])
    g = merge(a, a)
    svg = harness.render_generalization_svg(g)
    assert svg.startswith("<svg") and svg.count("<path") == sum(1 for e in g.entities if e.startswith("e")
                                                                and any(f.args == (e,) for f in g.facts))
