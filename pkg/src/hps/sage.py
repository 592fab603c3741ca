"""Incremental analogical generalization (SAGE-style pools).

A pool holds, per concept, probabilistic generalizations and outlier
examples.  A new example retrieves the most similar pool item; above the
assimilation threshold it is folded into that generalization (or merged with
the outlier into a new one), otherwise it becomes an outlier itself.  Fact
probabilities are count / n_examples and facts below the prune cutoff are
dropped.
"""
from __future__ import annotations

import json
from collections import Counter
from pathlib import Path
from typing import Iterable, Optional

from hps.case import (CaseDescription, Const, Expression, case_from_json, case_to_json,
                      expression_from_json, expression_to_json)
from hps.errors import DataFormatError, InvalidInput, NoClassification
from hps.retrieval import CaseLibrary, LibraryItem, retrieve
from hps.sme import Mapping, best_mapping

THRESHOLD = 0.8
PRUNE_CUTOFF = 0.2
FULL_MAC_LIMIT = 50
LARGE_POOL_K = 5


def _labels_of(case: CaseDescription) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    for f in case.facts:
        if f.functor == "isa" and len(f.args) == 2 and isinstance(f.args[0], str) \
                and isinstance(f.args[1], Const):
            out.setdefault(f.args[0], []).append(f.args[1].name)
    return out


class Generalization:
    """Facts over generalized entities with example counts."""

    def __init__(self, id: str = "G0"):
        self.id = id
        self.facts: dict[Expression, int] = {}
        self.n_examples = 0
        self.entities: dict[str, str] = {}
        self.labels: dict[str, Counter] = {}
        self._next = 0
        self._case: Optional[CaseDescription] = None
        # (case, entity map) per absorbed example; only kept when tracing
        self.members: Optional[list] = None

    def probability(self, f: Expression) -> float:
        return self.facts[f] / self.n_examples

    def as_case(self) -> CaseDescription:
        if self._case is None:
            facts = sorted(self.facts, key=lambda e: e.key)
            self._case = CaseDescription(
                facts, {e: self.entities[e] for e in sorted(self.entities)}, self.id,
                {f: self.facts[f] / self.n_examples for f in facts})
        return self._case

    def _fresh(self, kind: str) -> str:
        name = f"e{self._next}"
        self._next += 1
        self.entities[name] = kind
        return name

    def _absorb(self, case: CaseDescription, emap: dict[str, str]) -> None:
        for e in sorted(case.entities):
            if e not in emap and any(e in f.entities() for f in case.facts):
                emap[e] = self._fresh(case.entities[e])
        seen = set()
        for f in case.facts:
            g = f.substitute(emap).canonical()
            if g in seen:
                continue
            seen.add(g)
            self.facts[g] = self.facts.get(g, 0) + 1
        for e, labs in _labels_of(case).items():
            table = self.labels.setdefault(emap[e], Counter())
            for lab in set(labs):
                table[lab] += 1
        self.n_examples += 1
        if self.members is not None:
            self.members.append((case, dict(emap)))
        self._case = None

    def prune(self, cutoff: float) -> list[Expression]:
        dropped = [f for f, n in self.facts.items() if n / self.n_examples < cutoff]
        for f in dropped:
            del self.facts[f]
        if dropped:
            live = set()
            for f in self.facts:
                live |= f.entities()
            for e in list(self.entities):
                if e not in live:
                    del self.entities[e]
                    self.labels.pop(e, None)
            self._case = None
        return dropped

    def label_alternatives(self, entity: str) -> list[tuple[str, float]]:
        table = self.labels.get(entity, Counter())
        return sorted(((lab, n / self.n_examples) for lab, n in table.items()),
                      key=lambda x: (-x[1], x[0]))

    # persistence -------------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "n_examples": self.n_examples,
            "next_entity": self._next,
            "entities": [{"id": e, "kind": self.entities[e],
                          "labels": dict(sorted(self.labels.get(e, {}).items()))}
                         for e in sorted(self.entities)],
            "facts": [dict(expression_to_json(f), count=self.facts[f])
                      for f in sorted(self.facts, key=lambda e: e.key)],
        }

    @classmethod
    def from_json(cls, obj) -> "Generalization":
        g = cls(obj["id"])
        g.n_examples = int(obj["n_examples"])
        g._next = int(obj.get("next_entity", 0))
        for e in obj["entities"]:
            g.entities[e["id"]] = e.get("kind", "entity")
            if e.get("labels"):
                g.labels[e["id"]] = Counter(e["labels"])
        for f in obj["facts"]:
            g.facts[expression_from_json(f)] = int(f["count"])
        return g


def merge(a: CaseDescription, b: CaseDescription, mapping: Optional[Mapping] = None,
          id: str = "G0", prune_cutoff: float = 0.0, track: bool = False) -> Generalization:
    """New generalization from two examples aligned by their best mapping."""
    if mapping is None:
        mapping = best_mapping(a, b)
    g = Generalization(id)
    if track:
        g.members = []
    amap: dict[str, str] = {}
    bmap: dict[str, str] = {}
    for ae, be in sorted(mapping.entity_pairs().items()):
        amap[ae] = bmap[be] = g._fresh(a.entities.get(ae, "entity"))
    g._absorb(a, amap)
    g._absorb(b, bmap)
    g.prune(prune_cutoff)
    return g


def assimilate(g: Generalization, c: CaseDescription, mapping: Optional[Mapping] = None,
               prune_cutoff: float = PRUNE_CUTOFF) -> Generalization:
    """Fold a new example into ``g`` (in place) and wear away rare facts."""
    if mapping is None:
        mapping = best_mapping(g.as_case(), c)
    emap = {ce: ge for ge, ce in mapping.entity_pairs().items()}
    g._absorb(c, emap)
    g.prune(prune_cutoff)
    return g


class GeneralizationPool:
    def __init__(self, concept: str, threshold: float = THRESHOLD,
                 prune_cutoff: float = PRUNE_CUTOFF, track: bool = False):
        if not 0.0 <= threshold <= 1.0 or not 0.0 <= prune_cutoff <= 1.0:
            raise InvalidInput("threshold and prune_cutoff must lie in [0, 1]")
        self.concept = concept
        self.threshold = threshold
        self.prune_cutoff = prune_cutoff
        self.generalizations: list[Generalization] = []
        self.outliers: list[tuple[str, CaseDescription]] = []
        self.track = track
        self.added = 0
        self._next_gen = 0
        self._next_out = 0

    def __len__(self):
        return len(self.generalizations) + len(self.outliers)

    def is_empty(self) -> bool:
        return len(self) == 0

    def items(self) -> list[LibraryItem]:
        out = [LibraryItem(f"{self.concept}/{g.id}", g.as_case(), self.concept, g)
               for g in self.generalizations]
        out += [LibraryItem(f"{self.concept}/{oid}", c, self.concept, c)
                for oid, c in self.outliers]
        return out

    def library(self) -> CaseLibrary:
        return CaseLibrary(self.items())

    def _add_outlier(self, c: CaseDescription) -> str:
        oid = f"O{self._next_out}"
        self._next_out += 1
        self.outliers.append((oid, c))
        return oid

    def add_example(self, c: CaseDescription) -> str:
        """Add one example; returns what happened ('outlier', 'merged', 'assimilated')."""
        self.added += 1
        items = self.items()
        if not items:
            self._add_outlier(c)
            return "outlier"
        k = len(items) if len(items) <= FULL_MAC_LIMIT else LARGE_POOL_K
        best = retrieve(c, items, k)
        if best is None or best.score < self.threshold:
            self._add_outlier(c)
            return "outlier"
        if isinstance(best.item.payload, Generalization):
            assimilate(best.item.payload, c, best.mapping, self.prune_cutoff)
            return "assimilated"
        oid = best.item.id.rsplit("/", 1)[1]
        self.outliers = [(o, oc) for o, oc in self.outliers if o != oid]
        g = merge(best.item.payload, c, best.mapping, f"G{self._next_gen}",
                  self.prune_cutoff, self.track)
        self._next_gen += 1
        self.generalizations.append(g)
        return "merged"

    def example_count(self) -> int:
        return sum(g.n_examples for g in self.generalizations) + len(self.outliers)

    # persistence -------------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "concept": self.concept,
            "threshold": self.threshold,
            "prune_cutoff": self.prune_cutoff,
            "added": self.added,
            "next_generalization": self._next_gen,
            "next_outlier": self._next_out,
            "generalizations": [g.to_json() for g in self.generalizations],
            "outliers": [{"id": oid, "case": case_to_json(c)} for oid, c in self.outliers],
        }

    @classmethod
    def from_json(cls, obj) -> "GeneralizationPool":
        try:
            pool = cls(obj["concept"], float(obj["threshold"]), float(obj["prune_cutoff"]))
            pool.added = int(obj.get("added", 0))
            pool._next_gen = int(obj.get("next_generalization", 0))
            pool._next_out = int(obj.get("next_outlier", 0))
            pool.generalizations = [Generalization.from_json(g) for g in obj["generalizations"]]
            pool.outliers = [(o["id"], case_from_json(o["case"])) for o in obj["outliers"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"corrupt pool file: {exc}") from exc
        return pool

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path: str | Path) -> "GeneralizationPool":
        try:
            obj = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DataFormatError(f"{path}: {exc}") from exc
        return cls.from_json(obj)


def union_library(pools: Iterable[GeneralizationPool]) -> list[LibraryItem]:
    items = []
    for p in pools:
        items.extend(p.items())
    return items


def classify(probe: CaseDescription, pools: Iterable[GeneralizationPool],
             k: int = 3) -> tuple[str, float]:
    """Label of the pool that the best MAC/FAC reminding came from."""
    items = union_library(pools)
    if not items:
        raise NoClassification("all pools are empty")
    best = retrieve(probe, items, k)
    return best.item.owner, best.score
