import json
import random

import pytest

from hps.glyph import Detection, DetectionRecord, read_detections
from hps.sage import GeneralizationPool
from hps.synthetic import VRD_PREDICATES, vrd_fixture
from hps.vrd import RankedPrediction, evaluate, predict, recall_at_k, train_predicates, triples_of

from conftest import DATA


def rec(image_id, boxes, triples=()):
    return DetectionRecord(image_id, 200, 200,
                           tuple(Detection(b, lab) for b, lab in boxes), tuple(triples))


WEARS_A = rec("a", [((0, 0, 40, 100), "person"), ((5, 20, 35, 55), "shirt")], [(0, "wears", 1)])
WEARS_B = rec("b", [((10, 10, 90, 210), "person"), ((20, 50, 80, 120), "shirt")], [(0, "wears", 1)])


@pytest.fixture(scope="module")
def fixture_data():
    train = list(read_detections(DATA / "vrd_train.jsonl"))
    test = list(read_detections(DATA / "vrd_test.jsonl"))
    kinds = json.loads((DATA / "vrd_test_kinds.json").read_text())
    return train, test, kinds


@pytest.fixture(scope="module")
def fixture_pools(fixture_data):
    return train_predicates(fixture_data[0])


def test_committed_fixture_is_current():
    train, test, kinds = vrd_fixture()
    assert list(read_detections(DATA / "vrd_train.jsonl")) == train
    assert list(read_detections(DATA / "vrd_test.jsonl")) == test
    assert json.loads((DATA / "vrd_test_kinds.json").read_text()) == kinds


def test_one_triple_one_outlier():
    pools = train_predicates([WEARS_A])
    assert list(pools) == ["wears"]
    assert len(pools["wears"].outliers) == 1


def test_two_isomorphic_wears_generalize():
    pools = train_predicates([WEARS_A, WEARS_B])
    assert len(pools["wears"].generalizations) == 1 and not pools["wears"].outliers


def test_training_tallies(fixture_data):
    train = fixture_data[0][:20]
    counter = {}
    pools = train_predicates(train, counter=counter)
    tally = {}
    for t in triples_of(train):
        tally[t.predicate] = tally.get(t.predicate, 0) + 1
    assert {p: pl.example_count() for p, pl in pools.items()} == tally
    assert len(tally) >= 3
    # single pass: every triple added exactly once
    assert set(counter.values()) == {1} and len(counter) == sum(tally.values())


def test_zero_overlap_scores_zero():
    pool = GeneralizationPool("weird")
    from hps.case import CaseDescription, fact
    pool.add_example(CaseDescription([fact("zzz", "q")]))
    preds = predict(WEARS_A, {"weird": pool})
    assert [p.score for p in preds] == [0.0, 0.0]
    assert predict(WEARS_A, {"weird": pool}) == preds


def test_training_pair_ranked_first():
    pools = train_predicates([WEARS_A, rec("c", [((0, 0, 10, 10), "cup"), ((0, 10, 60, 40), "table")],
                                              [(0, "on", 1)])])
    top = predict(WEARS_A, pools)[0]
    assert (top.subject, top.object, top.predicate) == (0, 1, "wears")
    assert top.score == pytest.approx(1.0)


def test_three_detections_candidate_count(fixture_pools):
    r = rec("t", [((0, 0, 40, 100), "person"), ((5, 20, 35, 55), "shirt"), ((50, 0, 70, 10), "cup")])
    preds = predict(r, fixture_pools)
    assert len(preds) == 3 * 2 * len(fixture_pools)
    scores = [p.score for p in preds]
    assert scores == sorted(scores, reverse=True)


def test_recall_perfect_and_never():
    records = [WEARS_A, WEARS_B]
    perfect = {r.image_id: [RankedPrediction(r.image_id, 0, 1, "wears", 1.0)] for r in records}
    wrong = {r.image_id: [RankedPrediction(r.image_id, 0, 1, "holds", 1.0)] for r in records}
    assert recall_at_k(perfect, records, 1) == 100.0
    assert recall_at_k(wrong, records, 50) == 0.0


def test_recall_hand_built_two_images():
    img1 = rec("i1", [((0, 0, 10, 10), "cup"), ((0, 10, 50, 30), "table"), ((60, 0, 70, 10), "cup")],
               [(0, "on", 1), (2, "on", 1)])
    img2 = rec("i2", [((0, 0, 40, 100), "person"), ((5, 20, 35, 55), "shirt")], [(0, "wears", 1)])
    preds = {
        "i1": [RankedPrediction("i1", 0, 1, "on", 0.9), RankedPrediction("i1", 1, 0, "under", 0.8),
               RankedPrediction("i1", 2, 1, "on", 0.7)],
        "i2": [RankedPrediction("i2", 1, 0, "wears", 0.9), RankedPrediction("i2", 0, 1, "wears", 0.5)],
    }
    # by hand: k=1 finds (0,on,1) only; k=2 adds nothing new; k=3 finds all three
    assert recall_at_k(preds, [img1, img2], 1) == pytest.approx(100 / 3)
    assert recall_at_k(preds, [img1, img2], 2) == pytest.approx(200 / 3)
    assert recall_at_k(preds, [img1, img2], 3) == pytest.approx(100.0)
    assert recall_at_k(preds, [img1, img2], 2, predicate="wears") == 100.0
    assert recall_at_k(preds, [rec("e", [((0, 0, 1, 1), "x"), ((2, 2, 3, 3), "y")])], 5) is None


def test_bad_k():
    with pytest.raises(ValueError):
        recall_at_k({}, [], 0)


def test_fixture_recall_matches_tally(fixture_data, fixture_pools):
    _, test, kinds = fixture_data
    m = evaluate(test, fixture_pools)
    clean = sum(1 for v in kinds.values() if v["kind"] == "clean")
    assert m["recall@1"] == pytest.approx(100.0 * clean / len(kinds))
    assert m["recall@50"] == m["recall@100"] == 100.0
    assert m["n_triples"] == len(kinds)
    for p in VRD_PREDICATES:
        own = [v for v in kinds.values() if v["ground_truth"] == p]
        hits = sum(1 for v in own if v["kind"] == "clean")
        assert m["per_predicate"][p]["recall@1"] == pytest.approx(100.0 * hits / len(own))


def test_fixture_top_prediction_is_template(fixture_data, fixture_pools):
    _, test, kinds = fixture_data
    for r in test:
        top = predict(r, fixture_pools)[0]
        s, _, o = r.triples[0]
        assert (top.subject, top.object, top.predicate) == (s, o, kinds[r.image_id]["template"])
        assert top.score == pytest.approx(1.0)


def test_recall_nondecreasing_in_k(fixture_data, fixture_pools):
    _, test, _ = fixture_data
    sub = test[::5]
    preds = {r.image_id: predict(r, fixture_pools) for r in sub}
    vals = [recall_at_k(preds, sub, k) for k in range(1, 10)]
    assert vals == sorted(vals)


def test_predict_deterministic(fixture_data, fixture_pools):
    r = fixture_data[1][3]
    assert predict(r, fixture_pools) == predict(r, fixture_pools)
