"""Relational case descriptions shared by matching, retrieval and generalization.

A case is a set of facts (expressions) over entities.  Entity arguments are
plain id strings; concept labels appear as :class:`Const` arguments, which only
ever match an identical constant.  Expressions are hash-consed so structural
equality is an identity check.
"""
from __future__ import annotations

import json
import math
import weakref
from collections import Counter
from typing import Iterable, Mapping, Optional, Union

SYMMETRIC_FUNCTORS = frozenset({"adjacent", "DC", "EC", "PO", "EQ", "similar"})

ENTITY_KINDS = ("segment", "cycle", "glyph", "skolem", "entity")


class Const:
    """A constant symbol (a concept label) used as an argument."""

    __slots__ = ("name", "__weakref__")
    _table: "weakref.WeakValueDictionary[str, Const]" = weakref.WeakValueDictionary()

    def __new__(cls, name: str):
        obj = cls._table.get(name)
        if obj is None:
            obj = super().__new__(cls)
            obj.name = name
            cls._table[name] = obj
        return obj

    def __reduce__(self):
        return (Const, (self.name,))

    def __repr__(self):
        return f"'{self.name}"

    def __lt__(self, other):
        return arg_key(self) < arg_key(other)


Arg = Union[str, Const, "Expression"]


def arg_key(a) -> str:
    if isinstance(a, str):
        return a
    if isinstance(a, Const):
        return "'" + a.name
    return a.key


class Expression:
    """An interned relational expression ``functor(args...)``."""

    __slots__ = ("functor", "args", "symmetric", "key", "depth", "_hash", "__weakref__")
    _table: "weakref.WeakValueDictionary[tuple, Expression]" = weakref.WeakValueDictionary()

    def __new__(cls, functor: str, args: Iterable[Arg], symmetric: Optional[bool] = None):
        args = tuple(args)
        if symmetric is None:
            symmetric = functor in SYMMETRIC_FUNCTORS
        sig = (functor, args, symmetric)
        obj = cls._table.get(sig)
        if obj is not None:
            return obj
        for a in args:
            if not isinstance(a, (str, Const, Expression)):
                raise TypeError(f"bad argument {a!r} for {functor}")
        obj = super().__new__(cls)
        obj.functor = functor
        obj.args = args
        obj.symmetric = symmetric
        obj.key = "(" + " ".join([functor] + [arg_key(a) for a in args]) + ")"
        obj.depth = 1 + max((a.depth for a in args if isinstance(a, Expression)), default=0)
        obj._hash = hash(sig)
        cls._table[sig] = obj
        return obj

    def __hash__(self):
        return self._hash

    def __reduce__(self):
        return (Expression, (self.functor, self.args, self.symmetric))

    def __repr__(self):
        return self.key

    def __lt__(self, other):
        return self.key < arg_key(other)

    @property
    def arity(self) -> int:
        return len(self.args)

    def entities(self) -> set[str]:
        out = set()
        for a in self.args:
            if isinstance(a, str):
                out.add(a)
            elif isinstance(a, Expression):
                out |= a.entities()
        return out

    def subexpressions(self) -> list["Expression"]:
        """Nested expressions (not including self), innermost first."""
        out = []
        for a in self.args:
            if isinstance(a, Expression):
                out.extend(a.subexpressions())
                out.append(a)
        return out

    def substitute(self, mapping: Mapping) -> "Expression":
        args = []
        for a in self.args:
            if isinstance(a, Expression):
                args.append(mapping.get(a) or a.substitute(mapping))
            elif isinstance(a, str):
                args.append(mapping.get(a, a))
            else:
                args.append(a)
        return Expression(self.functor, args, self.symmetric)

    def canonical(self) -> "Expression":
        args = [a.canonical() if isinstance(a, Expression) else a for a in self.args]
        if self.symmetric:
            args.sort(key=arg_key)
        return Expression(self.functor, args, self.symmetric)


def fact(functor: str, *args) -> Expression:
    return Expression(functor, args)


class CaseDescription:
    """Facts over entities, plus optional per-fact weights (probabilities).

    Weights are only present for cases that stand in for generalizations;
    they scale each fact's local match score.
    """

    __slots__ = ("facts", "entities", "provenance", "weights", "_cache")

    def __init__(self, facts: Iterable[Expression], entities: Optional[Mapping[str, str]] = None,
                 provenance: str = "", weights: Optional[Mapping[Expression, float]] = None):
        seen = {}
        for f in facts:
            seen.setdefault(f, None)
        self.facts: tuple[Expression, ...] = tuple(seen)
        ents = dict(entities or {})
        for f in self.facts:
            for e in sorted(f.entities()):
                ents.setdefault(e, "entity")
        self.entities: dict[str, str] = ents
        self.provenance = provenance
        self.weights = dict(weights) if weights else None
        self._cache: dict = {}

    def __len__(self):
        return len(self.facts)

    def __repr__(self):
        return f"CaseDescription({len(self.facts)} facts, {len(self.entities)} entities)"

    def weight(self, f: Expression) -> float:
        return 1.0 if self.weights is None else self.weights.get(f, 1.0)

    def all_expressions(self) -> list[Expression]:
        """Every distinct expression, nested ones included, innermost first."""
        got = self._cache.get("all")
        if got is None:
            seen = {}
            for f in self.facts:
                for s in f.subexpressions():
                    seen.setdefault(s, None)
                seen.setdefault(f, None)
            got = sorted(seen, key=lambda e: e.depth)
            self._cache["all"] = got
        return got

    def content_vector(self) -> "ContentVector":
        got = self._cache.get("cv")
        if got is None:
            got = content_vector(self)
            self._cache["cv"] = got
        return got

    def functors(self) -> set[str]:
        return {e.functor for e in self.all_expressions()}

    def union(self, other: "CaseDescription") -> "CaseDescription":
        ents = dict(self.entities)
        ents.update(other.entities)
        return CaseDescription(self.facts + other.facts, ents, self.provenance)


# -- content vectors --------------------------------------------------------

class ContentVector:
    __slots__ = ("counts", "norm")

    def __init__(self, counts: Mapping[str, float]):
        self.counts = {k: v for k, v in counts.items() if v > 0}
        self.norm = math.sqrt(sum(v * v for v in self.counts.values()))

    def __len__(self):
        return len(self.counts)

    def __eq__(self, other):
        return isinstance(other, ContentVector) and self.counts == other.counts

    def __repr__(self):
        return f"ContentVector({self.counts})"

    def normalized(self) -> dict[str, float]:
        if not self.norm:
            return {}
        return {k: v / self.norm for k, v in self.counts.items()}


def _count(e: Expression, w: float, acc: Counter):
    acc[e.functor] += w
    if e.functor == "isa":
        for a in e.args:
            if isinstance(a, Const):
                acc["isa:" + a.name] += w
    for a in e.args:
        if isinstance(a, Expression):
            _count(a, w, acc)


def content_vector(c: CaseDescription) -> ContentVector:
    """Functor occurrence counts over all facts, nested ones included."""
    acc: Counter = Counter()
    for f in c.facts:
        _count(f, c.weight(f), acc)
    return ContentVector(acc)


def dot(a: ContentVector, b: ContentVector) -> float:
    """Cosine similarity of two content vectors (0 when either is empty)."""
    if not a.norm or not b.norm:
        return 0.0
    small, large = (a.counts, b.counts) if len(a.counts) <= len(b.counts) else (b.counts, a.counts)
    s = sum(v * large.get(k, 0.0) for k, v in small.items())
    return min(1.0, max(0.0, s / (a.norm * b.norm)))


def canonicalize(c: CaseDescription) -> CaseDescription:
    """Sort symmetric arguments, drop duplicates and fix fact/entity order."""
    facts = sorted({f.canonical() for f in c.facts}, key=lambda e: e.key)
    weights = None
    if c.weights:
        weights = {}
        for f in c.facts:
            cf = f.canonical()
            weights[cf] = max(weights.get(cf, 0.0), c.weight(f))
    ents = {e: c.entities[e] for e in sorted(c.entities)}
    return CaseDescription(facts, ents, c.provenance, weights)


# -- JSON -------------------------------------------------------------------

def _arg_to_json(a):
    if isinstance(a, str):
        return a
    if isinstance(a, Const):
        return {"const": a.name}
    return expression_to_json(a)


def expression_to_json(e: Expression) -> dict:
    return {"functor": e.functor, "args": [_arg_to_json(a) for a in e.args],
            "symmetric": e.symmetric}


def expression_from_json(obj) -> Expression:
    args = []
    for a in obj["args"]:
        if isinstance(a, str):
            args.append(a)
        elif "const" in a:
            args.append(Const(a["const"]))
        else:
            args.append(expression_from_json(a))
    return Expression(obj["functor"], args, obj.get("symmetric"))


def case_to_json(c: CaseDescription) -> dict:
    out = {
        "provenance": c.provenance,
        "entities": [{"id": e, "kind": k} for e, k in c.entities.items()],
        "facts": [expression_to_json(f) for f in c.facts],
    }
    if c.weights:
        out["weights"] = [c.weight(f) for f in c.facts]
    return out


def case_from_json(obj) -> CaseDescription:
    facts = [expression_from_json(f) for f in obj.get("facts", [])]
    weights = None
    if "weights" in obj:
        weights = dict(zip(facts, obj["weights"]))
    ents = {e["id"]: e.get("kind", "entity") for e in obj.get("entities", [])}
    return CaseDescription(facts, ents, obj.get("provenance", ""), weights)


def dumps_case(c: CaseDescription) -> str:
    return json.dumps(case_to_json(c), sort_keys=True, separators=(",", ":"))
