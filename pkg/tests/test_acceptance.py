"""Acceptance criteria 1-10, each at its stated tolerance.

Every test records PASS/FAIL with the measured numbers in ``conftest.ACCEPTANCE``
before asserting, so the terminal summary lists one line per criterion even
when some of them fail.
"""
import json
import os
import random
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import ndimage

from conftest import ACCEPTANCE, CONFIGS, DATA, MNIST_IMAGES, MNIST_LABELS
from hps import cli, harness
from hps.case import canonicalize
from hps.glyph import glyph_from_strokes, read_detections
from hps.phal import CascadeParams, HierarchicalConcept, classify_cascade, decompose, train
from hps.raster import BinaryImage, Polyline, thin
from hps.relations import INVERSE, RCC8, rcc8_regions
from hps.retrieval import mac, retrieve
from hps.sage import GeneralizationPool, classify
from hps.shape import encode_shape
from hps.sme import best_mapping, match, similarity
from hps.synthetic import vrd_fixture
from hps.vrd import evaluate, train_predicates, triples_of
from oracles import (brute_force_optimum, check_mapping_consistency, planar, random_case,
                     replay_probabilities)
from test_relations import _random_region
from test_retrieval import adversarial, library
from test_sage import renamed, run_stream


def record(n, ok, detail):
    ACCEPTANCE[n] = ("PASS" if ok else "FAIL", detail)
    return ok


def skip(n, why):
    ACCEPTANCE[n] = ("SKIP", why)
    pytest.skip(why)


# -- MNIST --------------------------------------------------------------------

class Counted:
    """Counts encodings per training item and pool additions per encoded case."""

    def __init__(self, monkeypatch):
        self.encoded: dict[int, int] = {}
        self.outputs: dict[int, int] = {}
        self.added: dict[int, int] = {}
        self.stray_adds = 0
        self.train_ids: dict[int, int] = {}
        real_job, real_add = harness._encode_job, GeneralizationPool.add_example

        def job(args):
            out = real_job(args)
            k = self.train_ids.get(id(args[0]))
            if k is not None:
                self.encoded[k] = self.encoded.get(k, 0) + 1
                self.outputs[id(out)] = k
            return out

        def add(pool, c):
            k = self.outputs.get(id(c))
            if k is None:
                self.stray_adds += 1
            else:
                self.added[k] = self.added.get(k, 0) + 1
            return real_add(pool, c)

        monkeypatch.setattr(harness, "_encode_job", job)
        monkeypatch.setattr(GeneralizationPool, "add_example", add)


def mnist_config(per_class):
    cfg = harness.load_config(CONFIGS / "mnist10.ini")
    cfg.train_per_class = per_class
    cfg.workers = 1
    return cfg


@pytest.fixture(scope="module")
def mnist10_run():
    mp = pytest.MonkeyPatch()
    try:
        cfg = mnist_config(10)
        items, test_items = harness.load_dataset(cfg)
        tr, _ = harness.stratified_split([y for _, y in items], cfg.train_per_class,
                                         cfg.test_per_class, cfg.seed)
        counted = Counted(mp)
        counted.train_ids = {id(items[i][0]): i for i in tr}
        t0 = time.perf_counter()
        report = harness.run_experiment(cfg, data=(items, test_items))
        elapsed = time.perf_counter() - t0
    finally:
        mp.undo()
    return report, elapsed, counted, tr


def test_criterion_1_mnist_10_per_digit(mnist10_run):
    report, elapsed, _, _ = mnist10_run
    ok = report.n_test == 1000 and report.accuracy >= 40.0 and elapsed <= 600
    record(1, ok, f"accuracy {report.accuracy:.2f}% on {report.n_test} test digits "
                  f"(need >= 40%), {elapsed:.0f}s on {os.cpu_count()} CPU(s) (need <= 600s)")
    assert report.n_test == 1000
    assert report.accuracy >= 40.0
    assert elapsed <= 600


def test_criterion_2_mnist_100_per_digit_and_monotone(mnist10_run):
    cfg = mnist_config(100)
    report = harness.run_experiment(cfg)
    acc10 = mnist10_run[0].accuracy
    monotone = report.accuracy >= acc10
    ok = report.accuracy >= 60.0 and monotone
    record(2, ok, f"100/digit accuracy {report.accuracy:.2f}% (need >= 60%); "
                  f"10/digit {acc10:.2f}% -> 100/digit {report.accuracy:.2f}% "
                  f"({'monotone' if monotone else 'NOT monotone'}); 500/digit: see 2.500")
    assert monotone
    assert report.accuracy >= 60.0


def _full_mnist_dir():
    d = os.environ.get("HPS_MNIST_DIR")
    if not d:
        return None
    p = Path(d)
    names = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
             "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")
    found = []
    for n in names:
        c = [q for q in (p / n, p / (n + ".gz")) if q.exists()]
        if not c:
            return None
        found.append(c[0])
    return found


def test_criterion_2_mnist_500_per_digit():
    files = _full_mnist_dir()
    if files is None:
        skip("2.500", "needs the full MNIST IDX files in HPS_MNIST_DIR (offline run)")
    accs = []
    t0 = time.perf_counter()
    for n in (10, 100, 500):
        cfg = mnist_config(n)
        cfg.images, cfg.labels, cfg.test_images, cfg.test_labels = (str(f) for f in files)
        accs.append(harness.run_experiment(cfg).accuracy)
    elapsed = time.perf_counter() - t0
    monotone = accs[0] <= accs[1] <= accs[2]
    ok = accs[2] >= 70.0 and monotone and elapsed <= 7200
    record("2.500", ok, f"standard split: 10/100/500 per digit -> "
                        f"{accs[0]:.2f}/{accs[1]:.2f}/{accs[2]:.2f}% (need 500 >= 70%, "
                        f"monotone), {elapsed:.0f}s (need <= 7200s)")
    assert ok


def test_criterion_3_single_pass(mnist10_run):
    report, _, counted, tr = mnist10_run
    enc_once = counted.encoded == {i: 1 for i in tr}
    add_once = counted.added == {i: 1 for i in tr} and counted.stray_adds == 0
    reported = report.single_pass == {"encoded": len(tr), "added": len(tr),
                                      "distinct_items": len(tr)}
    ok = enc_once and add_once and reported
    record(3, ok, f"{len(tr)} training items: encoded once each {enc_once}, "
                  f"added once each {add_once}, harness counter agrees {reported}")
    assert ok


# -- hierarchy ----------------------------------------------------------------

def test_criterion_4_phal_beats_flat():
    cfg = harness.load_config(CONFIGS / "phal_synthetic.ini")
    items, _ = harness.load_dataset(cfg)
    labels = [y for _, y in items]
    tr, te = harness.stratified_split(labels, cfg.train_per_class, cfg.test_per_class, cfg.seed)
    assert len(items) == 50 and len(set(labels)) == 5

    concepts = {}
    for i in tr:
        g, y = items[i]
        hc = concepts.setdefault(y, HierarchicalConcept(y, cfg.sage_threshold, cfg.prune_cutoff))
        train(hc, g)
    hcs = [concepts[c] for c in sorted(concepts)]
    pools = [hc.pools[1] for hc in hcs]
    total = sum(len(p) for p in pools)
    n = len(hcs)
    reduction = CascadeParams(K=n, Q=n, V=n, level_weights=(1.0, 0.0, 0.0),
                              distinct_bonus=0.0, avg_top=1, mac_k=None)

    flat_ok = phal_ok = 0
    same = True
    for i in te:
        g, y = items[i]
        levels = decompose(g)
        fl, fs = classify(levels[0].case, pools, k=total)
        rl, rs = classify_cascade(levels, hcs, reduction)
        same &= rl == fl and abs(rs - fs) <= 1e-12
        flat_ok += fl == y
        phal_ok += classify_cascade(levels, hcs, cfg.cascade)[0] == y
    flat_acc, phal_acc = 100.0 * flat_ok / len(te), 100.0 * phal_ok / len(te)

    # the harness end to end, and flat SAGE over the full (all-cycles) encoding
    phal_report = harness.run_experiment(cfg, mode="phal")
    full_flat = harness.run_experiment(cfg, mode="flat").accuracy

    ok = phal_acc >= flat_acc + 10 and same and phal_report.accuracy == phal_acc
    record(4, ok, f"PHAL {phal_acc:.1f}% vs flat level-1 {flat_acc:.1f}% (need +10); "
                  f"reduction equals flat {same}; "
                  f"(flat over the full glyph encoding: {full_flat:.1f}%)")
    assert same
    assert phal_report.accuracy == phal_acc
    assert phal_acc >= flat_acc + 10


# -- SME / SAGE / MAC/FAC -----------------------------------------------------

def test_criterion_5_sme_structural_suite():
    rng = random.Random(5)
    t0 = time.perf_counter()
    consistent = near_opt = symmetric = 0
    worst_asym = 0.0
    n_pairs = 200
    for k in range(n_pairs):
        a = canonicalize(random_case(rng, max_facts=8, prefix=f"a{k}_"))
        b = canonicalize(random_case(rng, max_facts=8, prefix=f"b{k}_"))
        ms = match(a, b)
        consistent += all(check_mapping_consistency(m) == [] for m in ms)
        best = ms[0].raw_score if ms else 0.0
        opt = brute_force_optimum(a, b)
        near_opt += best >= 0.9 * opt - 1e-12
        d = abs(similarity(a, b) - similarity(b, a))
        worst_asym = max(worst_asym, d)
        symmetric += d <= 1e-9
    elapsed = time.perf_counter() - t0
    ok = (consistent == n_pairs and near_opt >= 0.95 * n_pairs and symmetric == n_pairs
          and elapsed <= 60)
    record(5, ok, f"{n_pairs} pairs: consistent {consistent}, >= 0.9 x optimum {near_opt} "
                  f"(need >= {int(0.95 * n_pairs)}), max asymmetry {worst_asym:.1e}, "
                  f"{elapsed:.1f}s (need <= 60s)")
    assert ok


def test_criterion_6_sage_bookkeeping():
    exact = gens = 0
    for seed in range(50):
        pool, stream = run_stream(1000 + seed, n=12)
        good = pool.example_count() == len(stream)
        for g in pool.generalizations:
            gens += 1
            counts, n = replay_probabilities(g.members, pool.prune_cutoff)
            good &= n == g.n_examples and counts == g.facts
            good &= all(g.probability(f) == c / n for f, c in counts.items())
        exact += good

    from hps.case import CaseDescription, fact
    rng = random.Random(6)
    x = canonicalize(CaseDescription([fact("cause", fact("above", "A", "B"), fact("fall", "B")),
                                      fact("red", "A")]))
    y = canonicalize(CaseDescription([fact("leftOf", "A", "B"), fact("leftOf", "B", "C"),
                                      fact("round", "C")]))
    pool = GeneralizationPool("c", threshold=0.8)
    for i in range(8):
        pool.add_example(renamed(x if i % 2 == 0 else y, rng, f"e{i}_"))
    below = similarity(x, y) < pool.threshold
    n_gen = len(pool.generalizations)
    ok = exact == 50 and gens > 0 and below and n_gen >= 2
    record(6, ok, f"replay exact on {exact}/50 sequences ({gens} generalizations); "
                  f"disjunctive pool formed {n_gen} generalizations (need >= 2)")
    assert ok


def test_criterion_7_mac_fac_soundness():
    rng = random.Random(7)
    agree = 0
    for _ in range(100):
        cases = [canonicalize(random_case(rng)) for _ in range(rng.randint(1, 10))]
        probe = canonicalize(random_case(rng))
        lib = library(cases)
        best = retrieve(probe, lib, k=len(lib))
        want = min((-round(best_mapping(c, probe).normalized_score, 12), f"i{n:03d}")
                   for n, c in enumerate(cases))
        agree += best.item.id == want[1]
    probe, lib = adversarial()
    mac_top = mac(probe, lib, 1)[0][0].id
    fac_top = retrieve(probe, lib, k=len(lib)).item.id
    ok = agree == 100 and mac_top != fac_top and fac_top == "i000"
    record(7, ok, f"full-k retrieve equals SME argmax on {agree}/100 libraries; "
                  f"adversarial MAC top {mac_top}, returned {fac_top} (FAC winner i000)")
    assert ok


# -- geometry -----------------------------------------------------------------

def _components(bits):
    return ndimage.label(bits, structure=np.ones((3, 3)))[1]


def _random_planar_glyph(rng, id):
    while True:
        strokes = []
        for _ in range(rng.randint(1, 4)):
            pts = [(rng.randint(0, 10) * 10, rng.randint(0, 10) * 10)
                   for _ in range(rng.randint(2, 5))]
            pts = [p for i, p in enumerate(pts) if i == 0 or p != pts[i - 1]]
            if len(pts) < 2:
                continue
            closed = rng.random() < 0.5 and len(pts) >= 3 and pts[0] != pts[-1]
            strokes.append(Polyline(tuple(pts), closed))
        if strokes and planar(strokes):
            return glyph_from_strokes(strokes, id=id)


def test_criterion_8_geometry_suite(mnist_items):
    rng = np.random.default_rng(8)
    thin_ok = 0
    for _ in range(1000):
        n = int(rng.integers(5, 41))
        img = ndimage.binary_dilation(rng.random((n, n)) < 0.04,
                                      iterations=int(rng.integers(1, 4)))
        once = thin(BinaryImage(img)).bits
        thin_ok += (np.array_equal(thin(BinaryImage(once)).bits, once)
                    and _components(once) == _components(img))

    prng = random.Random(2024)
    rcc_ok = 0
    for _ in range(10_000):
        a, b = _random_region(prng), _random_region(prng)
        r = rcc8_regions(a, b)
        rcc_ok += r in RCC8 and rcc8_regions(b, a) == INVERSE[r]

    from hps.synthetic import phal_dataset
    grng = random.Random(88)
    glyphs = phal_dataset()[:50] + [_random_planar_glyph(grng, f"r{i}") for i in range(50)]
    inv_ok = 0
    for g in glyphs:
        base = set(encode_shape(g).facts)
        same = set(encode_shape(g.transformed(1.0, grng.uniform(-300, 300),
                                              grng.uniform(-300, 300))).facts) == base
        for s in (0.5, 2.0, 3.0):
            same &= set(encode_shape(g.transformed(s)).facts) == base
        inv_ok += same

    # diagnostic only: skeleton glyphs recovered from MNIST bitmaps
    p = harness.EncodeParams()
    mn = [harness.vectorize(img, p) for img, _ in mnist_items[:100]]
    mn = [g for g in mn if g is not None]
    mn_ok = sum(set(encode_shape(g).facts) == set(encode_shape(g.transformed(2.0)).facts)
                for g in mn)

    ok = thin_ok == 1000 and rcc_ok == 10_000 and inv_ok == len(glyphs)
    record(8, ok, f"thinning {thin_ok}/1000, RCC8 {rcc_ok}/10000, translation+scale invariant "
                  f"{inv_ok}/{len(glyphs)} vector glyphs "
                  f"(diagnostic: MNIST skeletons x2 scale {mn_ok}/{len(mn)})")
    assert ok


# -- VRD ----------------------------------------------------------------------

def test_criterion_9_vrd_fixture_tallies():
    train_recs = list(read_detections(DATA / "vrd_train.jsonl"))
    test_recs = list(read_detections(DATA / "vrd_test.jsonl"))
    kinds = json.loads((DATA / "vrd_test_kinds.json").read_text())
    assert (train_recs, test_recs, kinds) == vrd_fixture()

    counter = {}
    pools = train_predicates(train_recs, counter=counter)
    n_triples = len(triples_of(train_recs))
    one_pass = set(counter.values()) == {1} and len(counter) == n_triples
    m = evaluate(test_recs, pools)
    clean = sum(v["kind"] == "clean" for v in kinds.values())
    want = {"recall@1": 100.0 * clean / len(kinds), "recall@50": 100.0, "recall@100": 100.0}
    exact = all(m[k] == pytest.approx(v, abs=1e-9) for k, v in want.items())
    ordered = m["recall@1"] <= m["recall@50"] <= m["recall@100"]
    ok = one_pass and exact and ordered and len(train_recs) + len(test_recs) == 200
    record(9, ok, f"synthetic fixture ({len(train_recs) + len(test_recs)} scenes): "
                  f"recall@1/50/100 = {m['recall@1']:.2f}/{m['recall@50']:.2f}/"
                  f"{m['recall@100']:.2f}, hand tally {want['recall@1']:.2f}/100.00/100.00; "
                  f"one pass {one_pass}")
    assert ok


# -- determinism --------------------------------------------------------------

def _eval_twice(tmp_path, config, *extra):
    outs = []
    for run in ("a", "b"):
        rep, pools = tmp_path / f"{run}.json", tmp_path / f"{run}_pools"
        assert cli.main(["eval", "--config", str(config), "--out", str(rep),
                         "--pools-out", str(pools), *extra]) == 0
        files = {p.relative_to(pools).as_posix(): p.read_bytes()
                 for p in sorted(pools.rglob("*")) if p.is_file()}
        outs.append((rep.read_bytes(), files))
    return outs[0] == outs[1] and bool(outs[0][1])


def test_criterion_10_determinism(tmp_path):
    cfg = tmp_path / "mnist_small.ini"
    text = (CONFIGS / "mnist10.ini").read_text()
    text = text.replace("../tests/data/mnist5k-images-idx3-ubyte.gz", str(MNIST_IMAGES))
    text = text.replace("../tests/data/mnist5k-labels-idx1-ubyte.gz", str(MNIST_LABELS))
    text = text.replace("train_per_class = 10", "train_per_class = 3")
    text = text.replace("test_per_class = 100", "test_per_class = 3")
    cfg.write_text(text)
    runs = {
        "mnist flat": _eval_twice(tmp_path / "m", cfg),
        "synthetic flat": _eval_twice(tmp_path / "f", CONFIGS / "phal_synthetic.ini"),
        "synthetic phal": _eval_twice(tmp_path / "p", CONFIGS / "phal_synthetic.ini", "--phal"),
    }
    ok = all(runs.values())
    record(10, ok, "byte-identical reports and pool files: "
                   + ", ".join(f"{k} {v}" for k, v in runs.items()))
    assert ok
