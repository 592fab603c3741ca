"""MAC/FAC retrieval over a case library.

MAC ranks every library item by the cosine of functor-count vectors and keeps
a handful; FAC runs structure-mapping against those few and keeps the best.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

from hps.case import CaseDescription, dot
from hps.sme import Mapping, best_mapping

DEFAULT_K = 3


@dataclass
class LibraryItem:
    id: str
    case: CaseDescription
    owner: Optional[str] = None
    # the Generalization or plain case this item stands for
    payload: object = None

    @property
    def vector(self):
        return self.case.content_vector()


@dataclass
class Reminding:
    item: LibraryItem
    mapping: Mapping
    score: float


class CaseLibrary:
    def __init__(self, items: Iterable[LibraryItem] = ()):
        self.items: list[LibraryItem] = []
        self._ids: set[str] = set()
        for it in items:
            self.append(it)

    def append(self, item: LibraryItem) -> None:
        if item.id in self._ids:
            raise ValueError(f"duplicate library id {item.id!r}")
        self._ids.add(item.id)
        self.items.append(item)

    def add(self, id: str, case: CaseDescription, owner: Optional[str] = None,
            payload: object = None) -> LibraryItem:
        item = LibraryItem(id, case, owner, payload)
        self.append(item)
        return item

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)


def mac(probe: CaseDescription, lib: CaseLibrary | Iterable[LibraryItem],
        k: int = DEFAULT_K) -> list[tuple[LibraryItem, float]]:
    """Top-k items by content-vector cosine, ties broken by id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    pv = probe.content_vector()
    scored = [(item, dot(pv, item.vector)) for item in lib]
    scored.sort(key=lambda x: (-round(x[1], 12), x[0].id))
    return scored[:k]


def fac(probe: CaseDescription, candidates: Iterable) -> list[Reminding]:
    """Structure-map each candidate (as base) onto the probe; best first."""
    out = []
    for cand in candidates:
        item = cand[0] if isinstance(cand, tuple) else cand
        m = best_mapping(item.case, probe)
        out.append(Reminding(item, m, m.normalized_score))
    out.sort(key=lambda r: (-round(r.score, 12), r.item.id))
    return out


def retrieve(probe: CaseDescription, lib: CaseLibrary | list[LibraryItem],
             k: int = DEFAULT_K) -> Optional[Reminding]:
    items = list(lib)
    if not items:
        return None
    return fac(probe, mac(probe, items, k))[0]
