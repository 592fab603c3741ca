"""Glyphs: digital ink plus an optional conceptual label.

Glyphs are what the vision side hands to the reasoning side.  They come either
from bitmap strokes or from recognizer detections (boxes or masks), which are
treated as if they were ink.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence
from xml.sax.saxutils import quoteattr

from hps.errors import DataFormatError, InvalidInput
from hps.raster import Polyline

BBox = tuple[float, float, float, float]

_ids = itertools.count()


def normalize_label(label: str) -> str:
    sym = " ".join(str(label).split()).lower()
    if not sym:
        raise InvalidInput("empty concept label")
    return sym


def fresh_id(prefix: str = "glyph") -> str:
    return f"{prefix}{next(_ids)}"


def bbox_of(strokes: Iterable[Polyline]) -> BBox:
    xs, ys = [], []
    for s in strokes:
        for x, y in s.points:
            xs.append(x)
            ys.append(y)
    return (min(xs), min(ys), max(xs), max(ys))


@dataclass(frozen=True)
class Glyph:
    id: str
    strokes: tuple[Polyline, ...]
    label: Optional[str] = None
    bbox: BBox = field(default=None)
    # detection glyphs use their box as the region; sketch glyphs use ink
    from_detection: bool = False

    def __post_init__(self):
        if not self.strokes:
            raise InvalidInput("a glyph needs at least one stroke")
        object.__setattr__(self, "strokes", tuple(self.strokes))
        if self.label is not None:
            object.__setattr__(self, "label", normalize_label(self.label))
        if self.bbox is None:
            object.__setattr__(self, "bbox", bbox_of(self.strokes))

    @property
    def width(self) -> float:
        return self.bbox[2] - self.bbox[0]

    @property
    def height(self) -> float:
        return self.bbox[3] - self.bbox[1]

    @property
    def center(self) -> tuple[float, float]:
        return ((self.bbox[0] + self.bbox[2]) / 2, (self.bbox[1] + self.bbox[3]) / 2)

    def relabeled(self, label: Optional[str]) -> "Glyph":
        return Glyph(self.id, self.strokes, label, self.bbox, self.from_detection)

    def transformed(self, scale: float = 1.0, dx: float = 0.0, dy: float = 0.0) -> "Glyph":
        strokes = tuple(s.scaled(scale).translated(dx, dy) for s in self.strokes)
        return Glyph(self.id, strokes, self.label, None, self.from_detection)


@dataclass(frozen=True)
class Sketch:
    glyphs: tuple[Glyph, ...]
    width: float
    height: float

    def __post_init__(self):
        object.__setattr__(self, "glyphs", tuple(self.glyphs))
        ids = [g.id for g in self.glyphs]
        if len(set(ids)) != len(ids):
            raise InvalidInput("glyph ids must be unique within a sketch")


@dataclass(frozen=True)
class Detection:
    bbox: BBox
    label: str
    score: float = 1.0
    mask: Optional[tuple[tuple[float, float], ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "bbox", tuple(float(v) for v in self.bbox))
        object.__setattr__(self, "label", normalize_label(self.label))
        if not 0.0 <= self.score <= 1.0:
            raise InvalidInput(f"detection score {self.score} outside [0, 1]")
        if self.mask is not None:
            object.__setattr__(self, "mask", tuple((float(x), float(y)) for x, y in self.mask))


def glyph_from_strokes(strokes: Sequence[Polyline], label: Optional[str] = None,
                       id: Optional[str] = None) -> Glyph:
    if not strokes:
        raise InvalidInput("empty stroke list")
    return Glyph(id or fresh_id(), tuple(strokes), label)


def glyph_from_detection(d: Detection, id: Optional[str] = None) -> Glyph:
    """Treat a detection's box (or mask outline) as closed ink."""
    if d.mask is not None and len(d.mask) >= 3:
        ink = Polyline(d.mask, closed=True)
        box = bbox_of([ink])
    else:
        x1, y1, x2, y2 = d.bbox
        box = d.bbox
        if x2 <= x1 or y2 <= y1:
            raise InvalidInput(f"degenerate detection box {d.bbox}")
        ink = Polyline(((x1, y1), (x2, y1), (x2, y2), (x1, y2)), closed=True)
    if box[2] <= box[0] or box[3] <= box[1]:
        raise InvalidInput(f"degenerate detection region {box}")
    return Glyph(id or fresh_id("det"), (ink,), d.label, box, from_detection=True)


def _min_distance(a: Polyline, b: Polyline) -> float:
    return min(math.dist(p, q) for p in a.points for q in b.points)


def group_strokes(strokes: Sequence[Polyline], gap: float = math.inf,
                  id_prefix: str = "glyph") -> list[Glyph]:
    """Cluster strokes whose closest vertices lie within ``gap`` pixels."""
    if gap < 0:
        raise InvalidInput("gap must be >= 0")
    n = len(strokes)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    if math.isinf(gap):
        parent = [0] * n
    else:
        for i in range(n):
            for j in range(i + 1, n):
                if find(i) != find(j) and _min_distance(strokes[i], strokes[j]) <= gap:
                    parent[find(j)] = find(i)
    groups: dict[int, list[Polyline]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(strokes[i])
    return [Glyph(f"{id_prefix}{k}", tuple(g)) for k, g in enumerate(groups.values())]


# -- detection files --------------------------------------------------------

@dataclass(frozen=True)
class DetectionRecord:
    image_id: str
    width: int
    height: int
    detections: tuple[Detection, ...]
    triples: tuple[tuple[int, str, int], ...] = ()

    def glyphs(self) -> list[Glyph]:
        return [glyph_from_detection(d, id=f"{self.image_id}/d{i}")
                for i, d in enumerate(self.detections)]


def parse_record(obj: dict, where: str = "") -> DetectionRecord:
    try:
        dets = []
        for d in obj["detections"]:
            mask = d.get("mask")
            dets.append(Detection(tuple(d["bbox"]), d["label"], float(d.get("score", 1.0)),
                                  tuple(map(tuple, mask)) if mask else None))
        triples = tuple((int(s), normalize_label(p), int(o)) for s, p, o in obj.get("triples") or ())
        rec = DetectionRecord(str(obj["image_id"]), int(obj["width"]), int(obj["height"]),
                              tuple(dets), triples)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"{where}bad detection record: {exc}") from exc
    for s, _, o in rec.triples:
        if not (0 <= s < len(dets) and 0 <= o < len(dets)) or s == o:
            raise DataFormatError(f"{where}triple indices ({s}, {o}) invalid")
    return rec


def read_detections(path: str | Path) -> Iterator[DetectionRecord]:
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
            yield parse_record(obj, f"{path}:{lineno}: ")


def record_to_json(rec: DetectionRecord) -> dict:
    out = {
        "image_id": rec.image_id,
        "width": rec.width,
        "height": rec.height,
        "detections": [
            {"bbox": list(d.bbox), "label": d.label, "score": d.score,
             **({"mask": [list(p) for p in d.mask]} if d.mask else {})}
            for d in rec.detections
        ],
    }
    if rec.triples:
        out["triples"] = [list(t) for t in rec.triples]
    return out


def sketch_to_svg(sketch: Sketch) -> str:
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{sketch.width:g}" '
             f'height="{sketch.height:g}" viewBox="0 0 {sketch.width:g} {sketch.height:g}">']
    for g in sketch.glyphs:
        label = f" data-label={quoteattr(g.label)}" if g.label else ""
        parts.append(f"  <g id={quoteattr(g.id)}{label}>")
        for s in g.strokes:
            d = "M " + " L ".join(f"{x:g} {y:g}" for x, y in s.points)
            if s.closed:
                d += " Z"
            parts.append(f'    <path d="{d}" fill="none" stroke="black"{label}/>')
        parts.append("  </g>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
