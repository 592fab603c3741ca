"""Generators for the small synthetic datasets shipped with the tests.

``phal_dataset`` draws five concepts that share the same outer frame and
differ only in what is drawn inside it, so a description of the outer cycle
alone cannot tell them apart.  ``vrd_fixture`` builds two-object scenes from
fixed predicate templates; every test scene is a scaled, shifted copy of a
template, and a known subset carries a deliberately mismatched predicate, so
the expected recall values follow from counting scenes.
"""
from __future__ import annotations

import math
import random

from hps.glyph import Detection, DetectionRecord, glyph_from_strokes
from hps.raster import Polyline

PHAL_CONCEPTS = ("window", "door", "eyes", "roof", "stack")


def _r(v: float) -> float:
    return round(v, 1)


def _poly(pts, closed=True) -> Polyline:
    return Polyline(tuple((_r(x), _r(y)) for x, y in pts), closed)


def _square(rng, x, y, w, h, jitter):
    pts = [(x, y), (x + w, y), (x + w, y + h), (x, y + h)]
    return _poly([(px + rng.uniform(-jitter, jitter), py + rng.uniform(-jitter, jitter))
                  for px, py in pts])


def _circle(rng, cx, cy, r, n=24):
    phase = rng.uniform(0, 2 * math.pi)
    return _poly([(cx + r * math.cos(phase + 2 * math.pi * k / n),
                   cy + r * math.sin(phase + 2 * math.pi * k / n)) for k in range(n)])


def _triangle(rng, cx, cy, s, jitter):
    pts = [(cx, cy - s), (cx + s, cy + s * 0.8), (cx - s, cy + s * 0.8)]
    return _poly([(px + rng.uniform(-jitter, jitter), py + rng.uniform(-jitter, jitter))
                  for px, py in pts])


def phal_glyph(concept: str, rng: random.Random, id: str):
    side = rng.uniform(90, 110)
    x0, y0 = rng.uniform(0, 20), rng.uniform(0, 20)
    cx, cy = x0 + side / 2, y0 + side / 2
    j = 1.5
    strokes = [_square(rng, x0, y0, side, side, j)]
    if concept == "window":
        strokes.append(_circle(rng, cx + rng.uniform(-5, 5), cy + rng.uniform(-5, 5),
                               side * rng.uniform(0.22, 0.3)))
    elif concept == "door":
        w, h = side * rng.uniform(0.22, 0.28), side * rng.uniform(0.5, 0.6)
        strokes.append(_square(rng, cx - w / 2, y0 + side - h - side * 0.1, w, h, j))
    elif concept == "eyes":
        r = side * rng.uniform(0.1, 0.14)
        strokes.append(_circle(rng, cx - side * 0.22, cy - side * 0.1, r))
        strokes.append(_circle(rng, cx + side * 0.22, cy - side * 0.1, r))
    elif concept == "roof":
        strokes.append(_triangle(rng, cx, cy, side * rng.uniform(0.22, 0.3), j))
    elif concept == "stack":
        w, h = side * rng.uniform(0.3, 0.4), side * rng.uniform(0.15, 0.2)
        strokes.append(_square(rng, cx - w / 2, cy - h - 4, w, h, j))
        strokes.append(_square(rng, cx - w / 2, cy + 4, w, h, j))
    else:
        raise ValueError(concept)
    return glyph_from_strokes(strokes, concept, id)


def phal_dataset(per_concept: int = 10, seed: int = 7):
    rng = random.Random(seed)
    out = []
    for c in PHAL_CONCEPTS:
        for k in range(per_concept):
            out.append(phal_glyph(c, rng, f"{c}-{k}"))
    return out


# -- relationship scenes ------------------------------------------------------

# predicate: (subject label, subject box, object label, object box) at scale 1
VRD_TEMPLATES = {
    "wears": ("person", (0, 0, 40, 100), "shirt", (5, 20, 35, 55)),
    "on": ("cup", (20, 0, 30, 10), "table", (0, 10, 60, 40)),
    "next to": ("lamp", (0, 0, 20, 40), "sofa", (30, 10, 90, 40)),
    "under": ("cat", (10, 40, 30, 55), "desk", (0, 0, 60, 25)),
}
VRD_PREDICATES = tuple(VRD_TEMPLATES)


def _scene(image_id: str, pred: str, rng: random.Random, gt_pred: str) -> DetectionRecord:
    sl, sb, ol, ob = VRD_TEMPLATES[pred]
    s = rng.choice((1, 2, 3))
    dx, dy = rng.randrange(0, 200), rng.randrange(0, 200)

    def tr(b):
        return (b[0] * s + dx, b[1] * s + dy, b[2] * s + dx, b[3] * s + dy)

    dets = (Detection(tr(sb), sl), Detection(tr(ob), ol))
    if rng.random() < 0.5:
        dets = dets[::-1]
        triples = ((1, gt_pred, 0),)
    else:
        triples = ((0, gt_pred, 1),)
    return DetectionRecord(image_id, 400, 600, dets, triples)


def vrd_fixture(n_train: int = 100, n_test: int = 100, relabeled_per_predicate: int = 7,
                seed: int = 11):
    """(train records, test records, tally) with the tally counted per scene kind."""
    rng = random.Random(seed)
    train = []
    for i in range(n_train):
        pred = VRD_PREDICATES[i % len(VRD_PREDICATES)]
        train.append(_scene(f"train{i:03d}", pred, rng, pred))
    test, kinds = [], {}
    per_pred = n_test // len(VRD_PREDICATES)
    i = 0
    for pi, pred in enumerate(VRD_PREDICATES):
        for k in range(per_pred):
            relabel = k < relabeled_per_predicate
            gt = VRD_PREDICATES[(pi + 1) % len(VRD_PREDICATES)] if relabel else pred
            rec = _scene(f"test{i:03d}", pred, rng, gt)
            test.append(rec)
            kinds[rec.image_id] = {"template": pred, "ground_truth": gt,
                                   "kind": "relabeled" if relabel else "clean"}
            i += 1
    return train, test, kinds
