"""Qualitative relations between glyphs: RCC8, position and relative size.

Regions are the filled outer boundary of a glyph: its largest outer edge
cycle for sketch glyphs, its box (or mask) for detection glyphs, and the
bounding box as a fallback for open ink.
"""
from __future__ import annotations

import math
from functools import lru_cache
from typing import Optional

from shapely.geometry import Polygon, box as sbox

from hps.case import CaseDescription, Const, Expression, canonicalize, fact
from hps.errors import InvalidInput
from hps.glyph import Glyph, Sketch

RCC8 = ("DC", "EC", "PO", "TPP", "NTPP", "TPPi", "NTPPi", "EQ")
INVERSE = {"DC": "DC", "EC": "EC", "PO": "PO", "EQ": "EQ",
           "TPP": "TPPi", "NTPP": "NTPPi", "TPPi": "TPP", "NTPPi": "NTPP"}
SIZE_RELATIONS = ("muchSmaller", "smaller", "similar", "larger", "muchLarger")
MIRROR_SIZE = dict(zip(SIZE_RELATIONS, reversed(SIZE_RELATIONS)))

EPS = 1.0
GAP_RATIO = 0.1


def region(g: Glyph) -> Polygon:
    """Filled region of a glyph (cached per glyph object)."""
    return _region(g)


@lru_cache(maxsize=4096)
def _region(g: Glyph) -> Polygon:
    if g.from_detection:
        ink = g.strokes[0]
        poly = Polygon(ink.points) if ink.closed and len(ink.points) >= 3 else sbox(*g.bbox)
    else:
        from hps.shape import ShapeAnalysis

        an = ShapeAnalysis(g)
        outer = [c for c, d in zip(an.cycles, an.tree.depth) if d == 1]
        poly = max(outer, key=lambda c: c.area).polygon() if outer else sbox(*g.bbox)
    if not poly.is_valid:
        poly = poly.buffer(0)
    return poly


def rcc8_regions(a: Polygon, b: Polygon, eps: float = EPS) -> str:
    """RCC8 relation between two polygons with an ``eps`` boundary band.

    ``a`` counts as part of ``b`` when the area of ``a`` outside ``b`` fits in
    a band of width eps/2 along a's boundary.  Every test is symmetric or has
    a mirrored counterpart, so rcc8(b, a) is always the inverse of rcc8(a, b).
    """
    if a.area <= 0 or b.area <= 0:
        raise InvalidInput("degenerate (zero-area) region")
    band_a = eps * a.length / 2
    band_b = eps * b.length / 2
    inter = a.intersection(b).area
    a_in_b = a.area - inter <= band_a
    b_in_a = b.area - inter <= band_b
    if a_in_b and b_in_a:
        return "EQ"
    if a_in_b or b_in_a:
        inner, outer = (a, b) if a_in_b else (b, a)
        touching = inner.exterior.distance(outer.exterior) <= eps
        rel = "TPP" if touching else "NTPP"
        return rel if a_in_b else rel + "i"
    if inter > min(band_a, band_b):
        return "PO"
    if a.distance(b) <= eps:
        return "EC"
    return "DC"


def rcc8(a: Glyph, b: Glyph, eps: float = EPS) -> str:
    return rcc8_regions(region(a), region(b), eps)


def positional_boxes(ba, bb, gap_ratio: float = GAP_RATIO) -> frozenset[str]:
    ax, ay = (ba[0] + ba[2]) / 2, (ba[1] + ba[3]) / 2
    bx, by = (bb[0] + bb[2]) / 2, (bb[1] + bb[3]) / 2
    mh = ((ba[3] - ba[1]) + (bb[3] - bb[1])) / 2
    mw = ((ba[2] - ba[0]) + (bb[2] - bb[0])) / 2
    out = set()
    # image coordinates: smaller y is higher up
    if ay < by - gap_ratio * mh:
        out.add("above")
    elif by < ay - gap_ratio * mh:
        out.add("below")
    if ax < bx - gap_ratio * mw:
        out.add("leftOf")
    elif bx < ax - gap_ratio * mw:
        out.add("rightOf")
    return frozenset(out)


def positional(a: Glyph, b: Glyph, gap_ratio: float = GAP_RATIO) -> frozenset[str]:
    """Subset of {above, below, leftOf, rightOf} holding for a relative to b."""
    if gap_ratio < 0:
        raise InvalidInput("gap_ratio must be >= 0")
    return positional_boxes(a.bbox, b.bbox, gap_ratio)


def size_relation(area_a: float, area_b: float) -> str:
    if area_a <= 0 or area_b <= 0:
        raise InvalidInput("areas must be positive")
    # cross-multiplied so that swapping the arguments evaluates the same products
    if 4 * area_a < area_b:
        return "muchSmaller"
    if 5 * area_a < 4 * area_b:
        return "smaller"
    if 4 * area_a <= 5 * area_b and 4 * area_b <= 5 * area_a:
        return "similar"
    if 4 * area_b < area_a:
        return "muchLarger"
    return "larger"


def relative_area(a: Glyph, b: Glyph) -> str:
    return size_relation(region(a).area, region(b).area)


def pair_facts(a: Glyph, b: Glyph, na: str, nb: str) -> list[Expression]:
    facts = [fact(rcc8(a, b), na, nb)]
    facts.extend(fact(p, na, nb) for p in sorted(positional(a, b)))
    facts.append(fact(relative_area(a, b), na, nb))
    return facts


def _isa(g: Glyph, name: str) -> list[Expression]:
    return [fact("isa", name, Const(g.label))] if g.label else []


def encode_scene(s: Sketch) -> CaseDescription:
    """Scene case: labels plus relations for every nearby ordered glyph pair.

    Disconnected pairs whose centers are further apart than twice their mean
    bounding-box diagonal are left out to keep cases small.
    """
    if not s.glyphs:
        raise InvalidInput("scene has no glyphs")
    facts: list[Expression] = []
    ents = {}
    for g in s.glyphs:
        ents[g.id] = "glyph"
        facts.extend(_isa(g, g.id))
    for a in s.glyphs:
        for b in s.glyphs:
            if a is b:
                continue
            rel = rcc8(a, b)
            if rel == "DC":
                diag = (math.hypot(a.width, a.height) + math.hypot(b.width, b.height)) / 2
                if math.dist(a.center, b.center) > 2 * diag:
                    continue
            facts.append(fact(rel, a.id, b.id))
            facts.extend(fact(p, a.id, b.id) for p in sorted(positional(a, b)))
            facts.append(fact(relative_area(a, b), a.id, b.id))
    return canonicalize(CaseDescription(facts, ents, "scene"))


def encode_pair(subject: Glyph, obj: Glyph, provenance: str = "") -> CaseDescription:
    """Two-entity case for a (subject, object) pair with all pair relations."""
    if not subject.label or not obj.label:
        raise InvalidInput("encode_pair needs labeled glyphs")
    facts = [fact("subject", "subj"), fact("object", "obj")]
    facts += _isa(subject, "subj") + _isa(obj, "obj")
    facts += pair_facts(subject, obj, "subj", "obj")
    return canonicalize(CaseDescription(facts, {"subj": "glyph", "obj": "glyph"}, provenance))
