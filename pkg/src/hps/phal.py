"""Part-based hierarchical analogical learning.

A glyph is described at up to three levels following its edge-cycle tree:
level 1 holds the outermost cycles (plus any ink not on a cycle), levels 2
and 3 the cycles nested one and two deep.  Each concept keeps one pool per
level, and classification is a cascade that narrows the candidate concepts
level by level before combining the evidence.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

from hps.case import CaseDescription, Expression, canonicalize, fact
from hps.errors import InvalidInput, InvariantViolation, NoClassification
from hps.glyph import Glyph
from hps.relations import positional_boxes, size_relation
from hps.retrieval import fac, mac
from hps.sage import PRUNE_CUTOFF, THRESHOLD, GeneralizationPool
from hps.shape import ShapeAnalysis, encode_analysis, segment_facts

LEVELS = (1, 2, 3)


@dataclass
class LevelDescription:
    level: int
    case: CaseDescription
    part_cases: list[CaseDescription] = field(default_factory=list)


@dataclass
class CascadeParams:
    K: int = 10
    Q: int = 5
    V: int = 3
    level_weights: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    distinct_bonus: float = 0.1
    # a level score is the mean of this many best FAC scores
    avg_top: int = 3
    # MAC shortlist per concept pool; None scans the whole pool
    mac_k: Optional[int] = 5

    def __post_init__(self):
        if not self.K >= self.Q >= self.V >= 1:
            raise InvalidInput("need K >= Q >= V >= 1")
        if len(self.level_weights) != 3 or abs(sum(self.level_weights) - 1.0) > 1e-9 \
                or min(self.level_weights) < 0:
            raise InvalidInput("level_weights must be 3 non-negative reals summing to 1")
        if self.distinct_bonus < 0 or self.avg_top < 1:
            raise InvalidInput("distinct_bonus must be >= 0 and avg_top >= 1")
        if self.mac_k is not None and self.mac_k < 1:
            raise InvalidInput("mac_k must be >= 1")


class HierarchicalConcept:
    def __init__(self, concept: str, threshold: float = THRESHOLD,
                 prune_cutoff: float = PRUNE_CUTOFF):
        self.concept = concept
        self.pools = {lv: GeneralizationPool(concept, threshold, prune_cutoff) for lv in LEVELS}

    def pool(self, level: int) -> GeneralizationPool:
        return self.pools[level]

    def counts(self) -> dict[int, int]:
        return {lv: p.example_count() for lv, p in self.pools.items()}


# -- decomposition ------------------------------------------------------------

def _ring_bbox(ring):
    xs = [p[0] for p in ring]
    ys = [p[1] for p in ring]
    return (min(xs), min(ys), max(xs), max(ys))


def _sibling_facts(an: ShapeAnalysis, cyc_ids: Sequence[int]) -> list[Expression]:
    out = []
    for a in cyc_ids:
        for b in cyc_ids:
            if a >= b or an.tree.parent[a] != an.tree.parent[b]:
                continue
            ca, cb = an.cycles[a], an.cycles[b]
            ba, bb = _ring_bbox(ca.ring), _ring_bbox(cb.ring)
            for rel in sorted(positional_boxes(ba, bb)):
                out.append(fact(rel, f"c{a}", f"c{b}"))
            out.append(fact(size_relation(ca.area, cb.area), f"c{a}", f"c{b}"))
    return out


def _part_case(an: ShapeAnalysis, c: int, provenance: str) -> CaseDescription:
    return encode_analysis(an, an.cycles[c].segment_ids(), [c], provenance, with_contains=False)


def decompose(glyph: Glyph | ShapeAnalysis, **shape_kw) -> list[LevelDescription]:
    """One description per cycle-tree depth present (1 to 3)."""
    an = glyph if isinstance(glyph, ShapeAnalysis) else ShapeAnalysis(glyph, **shape_kw)
    prov = an.glyph.id
    by_depth: dict[int, list[int]] = {}
    for c, d in enumerate(an.tree.depth):
        by_depth.setdefault(d, []).append(c)
    on_cycle = set()
    for cyc in an.cycles:
        on_cycle.update(cyc.segment_ids())
    loose = [i for i in range(len(an.segments)) if i not in on_cycle]
    out = []
    for lv in LEVELS:
        cycs = by_depth.get(lv, [])
        if lv > 1 and not cycs:
            break
        segs = set()
        for c in cycs:
            segs.update(an.cycles[c].segment_ids())
        if lv == 1:
            segs.update(loose)
        base = encode_analysis(an, sorted(segs), cycs, f"{prov}#L{lv}", with_contains=False)
        extra = _sibling_facts(an, cycs)
        case = canonicalize(CaseDescription(list(base.facts) + extra, base.entities, base.provenance)) \
            if extra else base
        out.append(LevelDescription(lv, case, [_part_case(an, c, f"{prov}#c{c}") for c in cycs]))
    return out


def train(hc: HierarchicalConcept, glyph: Glyph | Sequence[LevelDescription]) -> HierarchicalConcept:
    levels = glyph if not isinstance(glyph, Glyph) else decompose(glyph)
    for ld in levels:
        hc.pools[ld.level].add_example(ld.case)
    return hc


# -- classification -----------------------------------------------------------

def _rank(scores: dict[str, float], keep: int) -> list[str]:
    return [c for c, _ in sorted(scores.items(), key=lambda x: (-round(x[1], 12), x[0]))][:keep]


def level_score(probe: Optional[CaseDescription], pool: GeneralizationPool,
                p: CascadeParams) -> tuple[float, list]:
    """Mean of the best ``avg_top`` FAC scores of ``probe`` against ``pool``."""
    if probe is None or pool.is_empty():
        return 0.0, []
    items = pool.items()
    k = len(items) if p.mac_k is None else max(p.mac_k, p.avg_top)
    rem = fac(probe, mac(probe, items, k))
    top = rem[:p.avg_top]
    return sum(r.score for r in top) / len(top), rem


def _distinct_fraction(levels: Sequence[LevelDescription], hc: HierarchicalConcept,
                       p: CascadeParams) -> float:
    best = []
    for ld in levels:
        pool = hc.pools[ld.level]
        for part in ld.part_cases:
            if pool.is_empty():
                best.append(None)
                continue
            _, rem = level_score(part, pool, p)
            best.append((ld.level, rem[0].item.id))
    if not best:
        return 0.0
    distinct = sum(1 for b in best if b is not None and best.count(b) == 1)
    return distinct / len(best)


def classify_cascade(glyph: Glyph | Sequence[LevelDescription],
                     concepts: Sequence[HierarchicalConcept],
                     p: CascadeParams = CascadeParams(),
                     trace: Optional[dict] = None) -> tuple[str, float]:
    """K/Q/V cascade; returns (concept, combined score)."""
    concepts = [hc for hc in concepts if any(not pl.is_empty() for pl in hc.pools.values())]
    if not concepts:
        raise NoClassification("no trained concepts")
    levels = decompose(glyph) if isinstance(glyph, Glyph) else list(glyph)
    probe = {ld.level: ld.case for ld in levels}
    by_name = {hc.concept: hc for hc in concepts}
    w = dict(zip(LEVELS, p.level_weights))
    per_level: dict[str, dict[int, float]] = {c: {} for c in by_name}
    stages = []
    survivors = sorted(by_name)
    for lv, keep in zip(LEVELS, (p.K, p.Q, p.V)):
        for c in survivors:
            per_level[c][lv], _ = level_score(probe.get(lv), by_name[c].pools[lv], p)
        # rank by the weighted evidence gathered so far
        running = {c: sum(w[l] * per_level[c][l] for l in LEVELS if l <= lv) for c in survivors}
        kept = _rank(running, keep)
        if not set(kept) <= set(survivors):
            raise InvariantViolation("cascade survivors must shrink monotonically")
        stages.append({"level": lv, "scores": {c: per_level[c][lv] for c in survivors},
                       "survivors": kept})
        survivors = kept
    final = {}
    for c in survivors:
        s = sum(w[lv] * per_level[c][lv] for lv in LEVELS)
        if p.distinct_bonus:
            s += p.distinct_bonus * _distinct_fraction(levels, by_name[c], p)
        final[c] = s
    winner = _rank(final, 1)[0]
    if winner not in stages[0]["survivors"]:
        raise InvariantViolation("cascade winner outside the level-1 shortlist")
    if trace is not None:
        trace["stages"] = stages
        trace["final"] = final
        trace["winner"] = winner
    return winner, final[winner]
