"""Structure-mapping: consistent alignments between two relational cases.

The matcher follows the classic pipeline.  Local match hypotheses (MHs) pair
expressions with identical functors (and identical constant arguments);
entity MHs are induced from aligned argument positions.  Scores trickle down
from parents to arguments so that deep, interconnected structure outweighs
isolated facts.  Kernels (consistent structures rooted at top-level MHs) are
merged greedily into at most three mappings.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Union

from hps.case import CaseDescription, Const, Expression, arg_key

LOCAL_SCORE = 1.0
TRICKLE = 0.8
MAX_MAPPINGS = 3

Item = Union[str, Expression]


@dataclass(frozen=True)
class MatchHypothesis:
    base: Item
    target: Item
    local_score: float
    score: float = 0.0

    @property
    def is_entity(self) -> bool:
        return isinstance(self.base, str)


@dataclass
class Mapping:
    base: CaseDescription
    target: CaseDescription
    correspondences: list[MatchHypothesis]
    raw_score: float
    normalized_score: float = 0.0
    _inferences: Optional[list] = field(default=None, repr=False)

    def pairs(self) -> dict:
        return {mh.base: mh.target for mh in self.correspondences}

    def entity_pairs(self) -> dict[str, str]:
        return {mh.base: mh.target for mh in self.correspondences if mh.is_entity}

    def expression_pairs(self) -> dict[Expression, Expression]:
        return {mh.base: mh.target for mh in self.correspondences if not mh.is_entity}

    @property
    def candidate_inferences(self) -> list[Expression]:
        if self._inferences is None:
            self._inferences = candidate_inferences(self)
        return self._inferences

    def __len__(self):
        return len(self.correspondences)


# -- self scores --------------------------------------------------------------

def _nested_weights(case: CaseDescription) -> dict[Expression, float]:
    got = case._cache.get("nw")
    if got is None:
        got = {}
        for f in case.facts:
            w = case.weight(f)
            got[f] = max(got.get(f, 0.0), w)
            for s in f.subexpressions():
                got[s] = max(got.get(s, 0.0), w)
        case._cache["nw"] = got
    return got


def self_score(case: CaseDescription) -> float:
    """Raw score of the identity mapping of ``case`` onto itself."""
    got = case._cache.get("self")
    if got is not None:
        return got
    weights = _nested_weights(case)
    acc: dict = {}
    total = 0.0
    for e in reversed(case.all_expressions()):
        s = weights[e] * LOCAL_SCORE + acc.get(e, 0.0)
        total += s
        for a in e.args:
            if not isinstance(a, Const):
                acc[a] = acc.get(a, 0.0) + TRICKLE * s
    for a, v in acc.items():
        if isinstance(a, str):
            total += LOCAL_SCORE + v
    case._cache["self"] = total
    return total


# -- matcher ------------------------------------------------------------------

class _Matcher:
    def __init__(self, base: CaseDescription, target: CaseDescription):
        self.base = base
        self.target = target
        self.mh_base: list = []
        self.mh_target: list = []
        self.children: list[tuple[int, ...]] = []
        self.parents: list[list[int]] = []
        self.local: list[float] = []
        self.depth: list[int] = []
        self._closure: dict[int, Optional[frozenset]] = {}
        self._build()

    def _new(self, b, t, local, children, depth):
        i = len(self.mh_base)
        self.mh_base.append(b)
        self.mh_target.append(t)
        self.local.append(local)
        self.children.append(children)
        self.depth.append(depth)
        self.parents.append([])
        for c in children:
            self.parents[c].append(i)
        return i

    def _build(self):
        index: dict[tuple, list[Expression]] = {}
        for t in self.target.all_expressions():
            index.setdefault((t.functor, len(t.args)), []).append(t)
        weights = _nested_weights(self.base)
        ents: dict[tuple, int] = {}
        exprs: dict[tuple, list[int]] = {}
        self.expression_mhs: list[int] = []
        for b in self.base.all_expressions():
            cands = index.get((b.functor, len(b.args)))
            if not cands:
                continue
            local = LOCAL_SCORE * weights[b]
            n = len(b.args)
            perms = [tuple(range(n))]
            if b.symmetric and n == 2:
                perms.append((1, 0))
            for t in cands:
                seen_children = set()
                for perm in perms:
                    alts = []
                    for i, ba in enumerate(b.args):
                        ta = t.args[perm[i]]
                        if isinstance(ba, str):
                            if not isinstance(ta, str):
                                break
                            key = (ba, ta)
                            e = ents.get(key)
                            if e is None:
                                e = ents[key] = self._new(ba, ta, LOCAL_SCORE, (), 0)
                            alts.append((e,))
                        elif isinstance(ba, Const):
                            if ba is not ta:
                                break
                        else:
                            if not isinstance(ta, Expression):
                                break
                            sub = exprs.get((ba, ta))
                            if not sub:
                                break
                            alts.append(sub)
                    else:
                        for combo in itertools.product(*alts):
                            if combo in seen_children:
                                continue
                            seen_children.add(combo)
                            m = self._new(b, t, local, combo, b.depth)
                            exprs.setdefault((b, t), []).append(m)
                            self.expression_mhs.append(m)

    # structure ---------------------------------------------------------------

    def closure(self, m: int) -> Optional[frozenset]:
        """All MHs required by ``m``; None when they are not one-to-one."""
        if m in self._closure:
            return self._closure[m]
        items = {m}
        for c in self.children[m]:
            if not self.children[c]:
                items.add(c)
                continue
            sub = self.closure(c)
            if sub is None:
                self._closure[m] = None
                return None
            items |= sub
        result = frozenset(items) if self._one_to_one(items) else None
        self._closure[m] = result
        return result

    def _one_to_one(self, items) -> bool:
        b2t, t2b = {}, {}
        for m in items:
            b, t = self.mh_base[m], self.mh_target[m]
            if b2t.setdefault(b, t) != t or t2b.setdefault(t, b) != b:
                return False
        return True

    def score(self, items) -> tuple[float, dict[int, float]]:
        acc: dict[int, float] = {}
        scores: dict[int, float] = {}
        total = 0.0
        for m in sorted(items, key=lambda i: -self.depth[i]):
            s = self.local[m] + acc.get(m, 0.0)
            scores[m] = s
            total += s
            for c in self.children[m]:
                acc[c] = acc.get(c, 0.0) + TRICKLE * s
        return total, scores

    def _sym_key(self, items) -> tuple:
        # identical under swapping base and target, so that greedy tie-breaks
        # (and hence normalized scores) do not depend on argument order
        return tuple(sorted(
            tuple(sorted((arg_key(self.mh_base[m]), arg_key(self.mh_target[m]))))
            for m in items))

    def kernels(self) -> list[tuple[float, frozenset]]:
        has_parent = [bool(p) for p in self.parents]
        todo = [m for m in self.expression_mhs if not has_parent[m]]
        seen = set()
        found = []
        while todo:
            m = todo.pop()
            if m in seen:
                continue
            seen.add(m)
            cl = self.closure(m)
            if cl is not None:
                found.append(cl)
            else:
                todo.extend(c for c in self.children[m] if self.children[c])
        scored = []
        for cl in set(found):
            total, _ = self.score(cl)
            scored.append((total, cl))
        scored.sort(key=lambda x: (-round(x[0], 9), -len(x[1]), self._sym_key(x[1])))
        return scored

    def _fill_candidates(self) -> list[frozenset]:
        out = []
        for m in self.expression_mhs:
            cl = self.closure(m)
            if cl is not None:
                out.append((self.score(cl)[0], cl))
        out.sort(key=lambda x: (-round(x[0], 9), -len(x[1]), self._sym_key(x[1])))
        return [cl for _, cl in out]

    def greedy(self, ordered: list[frozenset], fill: list[frozenset]) -> frozenset:
        b2t: dict = {}
        t2b: dict = {}
        chosen: set[int] = set()
        mb, mt = self.mh_base, self.mh_target
        for group in (ordered, fill):
            for cl in group:
                if cl <= chosen:
                    continue
                ok = True
                for m in cl:
                    b, t = mb[m], mt[m]
                    tb = b2t.get(b)
                    if tb is not None and tb != t:
                        ok = False
                        break
                    bt = t2b.get(t)
                    if bt is not None and bt != b:
                        ok = False
                        break
                if not ok:
                    continue
                for m in cl:
                    b2t[mb[m]] = mt[m]
                    t2b[mt[m]] = mb[m]
                chosen |= cl
        return frozenset(chosen)

    def mapping(self, items: frozenset) -> Mapping:
        total, scores = self.score(items)
        order = sorted(items, key=lambda i: (self.children[i] == (), arg_key(self.mh_base[i]),
                                             arg_key(self.mh_target[i])))
        corr = [MatchHypothesis(self.mh_base[m], self.mh_target[m], self.local[m], scores[m])
                for m in order]
        return Mapping(self.base, self.target, corr, total)


def match(base: CaseDescription, target: CaseDescription,
          max_mappings: int = MAX_MAPPINGS) -> list[Mapping]:
    """Best mappings from ``base`` onto ``target``, best first.

    When ``base`` carries fact weights (a generalization), each expression's
    local score is scaled by its probability.
    """
    matcher = _Matcher(base, target)
    kernels = matcher.kernels()
    if not kernels:
        return [Mapping(base, target, [], 0.0, 0.0)]
    order = [cl for _, cl in kernels]
    fill = matcher._fill_candidates()
    results = [matcher.greedy(order, fill)]
    # restarts from unused kernels give the alternates; they can also beat the
    # first greedy pass, so they run even when only the best mapping is wanted
    for cl in order:
        if len(results) >= max(max_mappings, MAX_MAPPINGS):
            break
        if cl <= results[0]:
            continue
        alt = matcher.greedy([cl] + [k for k in order if k is not cl], fill)
        if alt not in results:
            results.append(alt)
    denom = max(self_score(base), self_score(target))
    maps = [matcher.mapping(r) for r in results]
    for m in maps:
        m.normalized_score = min(1.0, m.raw_score / denom) if denom > 0 else 0.0
    maps.sort(key=lambda m: -round(m.raw_score, 9))
    return maps[:max_mappings]


def best_mapping(base: CaseDescription, target: CaseDescription) -> Mapping:
    return match(base, target)[0]


def normalized_score(m: Mapping, base: Optional[CaseDescription] = None,
                     target: Optional[CaseDescription] = None) -> float:
    base = base or m.base
    target = target or m.target
    denom = max(self_score(base), self_score(target))
    if denom <= 0 or not m.correspondences:
        return 0.0
    return min(1.0, m.raw_score / denom)


def similarity(a: CaseDescription, b: CaseDescription) -> float:
    return best_mapping(a, b).normalized_score


def candidate_inferences(m: Mapping) -> list[Expression]:
    """Project unmatched base facts that touch the mapping into the target.

    Mapped entities are replaced by their target counterparts, unmapped ones
    by skolem entities named ``skolem:<base id>``.
    """
    if not m.correspondences:
        return []
    pairs = m.pairs()
    mapped_entities = {b for b in pairs if isinstance(b, str)}
    target_facts = {f.canonical() for f in m.target.all_expressions()}
    out: dict[Expression, None] = {}
    for f in m.base.facts:
        if f in pairs:
            continue
        if not (f.entities() & mapped_entities) and not any(s in pairs for s in f.subexpressions()):
            continue
        sub = dict(pairs)
        for e in f.entities():
            if e not in sub:
                sub[e] = "skolem:" + e
        projected = f.substitute(sub).canonical()
        if projected in target_facts:
            continue
        out.setdefault(projected, None)
    return list(out)


def mapping_to_json(m: Mapping) -> dict:
    return {
        "raw_score": m.raw_score,
        "normalized_score": m.normalized_score,
        "correspondences": [
            {"base": arg_key(c.base), "target": arg_key(c.target), "score": round(c.score, 6)}
            for c in m.correspondences
        ],
        "candidate_inferences": [e.key for e in m.candidate_inferences],
    }
