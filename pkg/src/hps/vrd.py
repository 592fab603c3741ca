"""Predicate learning over qualitative pair encodings (ground-truth boxes given).

Every annotated (subject, predicate, object) triple becomes a two-entity case
that is added, once, to the pool for its predicate.  Prediction scores every
ordered detection pair of an image against every predicate pool and ranks the
results; evaluation is recall@K over the ground-truth triples.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from hps.glyph import Detection, DetectionRecord
from hps.relations import encode_pair
from hps.retrieval import retrieve
from hps.sage import PRUNE_CUTOFF, THRESHOLD, GeneralizationPool

RECALL_KS = (1, 50, 100)


@dataclass(frozen=True)
class RelationTriple:
    image_id: str
    subject: Detection
    predicate: str
    object: Detection
    subject_index: int = -1
    object_index: int = -1

    def __post_init__(self):
        if self.subject_index == self.object_index and self.subject_index >= 0:
            raise ValueError("subject and object must differ")


@dataclass(frozen=True)
class RankedPrediction:
    image_id: str
    subject: int
    object: int
    predicate: str
    score: float


def triples_of(records: Iterable[DetectionRecord]) -> list[RelationTriple]:
    out = []
    for rec in records:
        for s, p, o in rec.triples:
            out.append(RelationTriple(rec.image_id, rec.detections[s], p,
                                      rec.detections[o], s, o))
    return out


def _pair_case(rec: DetectionRecord, glyphs, s: int, o: int):
    return encode_pair(glyphs[s], glyphs[o], f"{rec.image_id}:{s}-{o}")


def train_predicates(records: Iterable[DetectionRecord],
                     pools: Optional[dict[str, GeneralizationPool]] = None,
                     threshold: float = THRESHOLD, prune_cutoff: float = PRUNE_CUTOFF,
                     counter: Optional[dict] = None) -> dict[str, GeneralizationPool]:
    """Single pass: each triple's pair case is added to its predicate pool once."""
    pools = {} if pools is None else pools
    for rec in records:
        if not rec.triples:
            continue
        glyphs = rec.glyphs()
        for s, pred, o in rec.triples:
            case = _pair_case(rec, glyphs, s, o)
            if pred not in pools:
                pools[pred] = GeneralizationPool(pred, threshold, prune_cutoff)
            pools[pred].add_example(case)
            if counter is not None:
                key = (rec.image_id, s, pred, o)
                counter[key] = counter.get(key, 0) + 1
    return pools


def predict(rec: DetectionRecord, pools: dict[str, GeneralizationPool],
            k: int = 3) -> list[RankedPrediction]:
    """Every ordered pair against every predicate pool, best first."""
    glyphs = rec.glyphs()
    n = len(glyphs)
    libs = [(p, pools[p].items()) for p in sorted(pools)]
    out = []
    for s in range(n):
        for o in range(n):
            if s == o:
                continue
            case = _pair_case(rec, glyphs, s, o)
            for pred, items in libs:
                best = retrieve(case, items, k)
                out.append(RankedPrediction(rec.image_id, s, o, pred,
                                            0.0 if best is None else best.score))
    out.sort(key=lambda r: (-round(r.score, 12), r.subject, r.object, r.predicate))
    return out


def _hit_keys(rec: DetectionRecord, preds: Sequence[RankedPrediction], k: int) -> set:
    dets = rec.detections
    return {(dets[p.subject].bbox, dets[p.object].bbox, p.predicate) for p in preds[:k]}


def recall_at_k(predictions: dict[str, Sequence[RankedPrediction]],
                records: Iterable[DetectionRecord], k: int,
                predicate: Optional[str] = None) -> Optional[float]:
    """Percentage of ground-truth triples found in their image's top-k.

    Matching is on subject box, object box and predicate.  Returns None when
    there are no ground-truth triples.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    total = hits = 0
    for rec in records:
        keys = _hit_keys(rec, predictions.get(rec.image_id, ()), k)
        for s, p, o in rec.triples:
            if predicate is not None and p != predicate:
                continue
            total += 1
            hits += (rec.detections[s].bbox, rec.detections[o].bbox, p) in keys
    return None if total == 0 else 100.0 * hits / total


def evaluate(records: Sequence[DetectionRecord], pools: dict[str, GeneralizationPool],
             ks: Sequence[int] = RECALL_KS, mac_k: int = 3) -> dict:
    records = [r for r in records if r.triples and len(r.detections) >= 2]
    preds = {r.image_id: predict(r, pools, mac_k) for r in records}
    metrics: dict = {f"recall@{k}": recall_at_k(preds, records, k) for k in ks}
    per = {}
    for p in sorted({t[1] for r in records for t in r.triples}):
        row = {f"recall@{k}": recall_at_k(preds, records, k, p) for k in ks}
        row["n"] = sum(1 for r in records for t in r.triples if t[1] == p)
        per[p] = row
    metrics["per_predicate"] = per
    metrics["n_images"] = len(records)
    metrics["n_triples"] = sum(len(r.triples) for r in records)
    return metrics
