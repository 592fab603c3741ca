"""Qualitative shape encoding: edge segments, edge cycles and their nesting.

Ink is cut at sharp corners into edge segments which get qualitative
attributes (straight/curved, orientation quadrant, relative length and, for
curved edges on a cycle, convexity).  Segments sharing endpoints form a
planar graph whose bounded faces are the edge cycles; cycles nest by
geometric containment, at most three levels deep.

Fact vocabulary emitted by :func:`encode_shape` (entities ``s<i>`` are
segments, ``c<i>`` cycles):

    straight(s) | curved(s)
    orientE(s) | orientNE(s) | orientN(s) | orientNW(s)
    shortEdge(s) | mediumEdge(s) | longEdge(s)
    convex(s) | concave(s)            curved segments on a cycle only
    adjacent(s, s')                   segments sharing an endpoint (symmetric)
    partOf(s, c)
    contains(c, c')                   direct parent/child in the cycle tree
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from shapely.geometry import Point as SPoint, Polygon

from hps.case import CaseDescription, Expression, canonicalize, fact
from hps.glyph import Glyph
from hps.raster import Polyline

CORNER_ANGLE = 45.0
STRAIGHT_TOL = 0.05
SNAP = 2.0
MAX_DEPTH = 3

ORIENTATIONS = ("E", "NE", "N", "NW")
LENGTH_FUNCTORS = {"short": "shortEdge", "medium": "mediumEdge", "long": "longEdge"}


@dataclass
class EdgeSegment:
    geometry: Polyline
    shape_class: str = "straight"
    orientation: str = "E"
    rel_length: str = "medium"
    convexity: Optional[str] = None

    @property
    def start(self):
        return self.geometry.points[0]

    @property
    def end(self):
        return self.geometry.points[0] if self.geometry.closed else self.geometry.points[-1]

    def length(self) -> float:
        return self.geometry.length()


@dataclass
class EdgeCycle:
    # (segment index, traversed forward?) in boundary order
    segments: list[tuple[int, bool]]
    ring: list[tuple[float, float]]
    signed_area: float

    @property
    def area(self) -> float:
        return abs(self.signed_area)

    @property
    def winding(self) -> str:
        # image coordinates (y down): positive shoelace area is clockwise on screen
        return "CW" if self.signed_area > 0 else "CCW"

    def polygon(self) -> Polygon:
        poly = Polygon(self.ring)
        if not poly.is_valid:
            poly = poly.buffer(0)
        return poly

    def segment_ids(self) -> list[int]:
        seen = []
        for i, _ in self.segments:
            if i not in seen:
                seen.append(i)
        return seen


@dataclass
class CycleTree:
    parent: list[Optional[int]]
    depth: list[int]

    def children(self, i: int) -> list[int]:
        return [j for j, p in enumerate(self.parent) if p == i]

    def roots(self) -> list[int]:
        return [j for j, p in enumerate(self.parent) if p is None]


# -- segment attributes -------------------------------------------------------

def _turn(a, b, c) -> float:
    v1 = (b[0] - a[0], b[1] - a[1])
    v2 = (c[0] - b[0], c[1] - b[1])
    n1, n2 = math.hypot(*v1), math.hypot(*v2)
    if n1 == 0 or n2 == 0:
        return 0.0
    cos = (v1[0] * v2[0] + v1[1] * v2[1]) / (n1 * n2)
    return math.degrees(math.acos(max(-1.0, min(1.0, cos))))


def _chord_deviation(points) -> float:
    (ax, ay), (bx, by) = points[0], points[-1]
    dx, dy = bx - ax, by - ay
    chord = math.hypot(dx, dy)
    return max(abs((px - ax) * dy - (py - ay) * dx) / chord for px, py in points)


def classify_shape(seg: EdgeSegment | Polyline, tol: float = STRAIGHT_TOL) -> str:
    """'straight' iff max deviation from the chord over chord length < tol."""
    line = seg.geometry if isinstance(seg, EdgeSegment) else seg
    pts = line.ring()
    chord = math.dist(pts[0], pts[-1])
    if chord == 0:
        return "curved"
    return "straight" if _chord_deviation(pts) / chord < tol else "curved"


def orientation(line: Polyline) -> str:
    pts = line.ring()
    a, b = pts[0], pts[-1]
    if a == b:
        b = max(pts, key=lambda p: math.dist(a, p))
    # image y grows downwards; flip so that N is up
    ang = math.degrees(math.atan2(-(b[1] - a[1]), b[0] - a[0])) % 180.0
    return ORIENTATIONS[int(((ang + 22.5) % 180.0) // 45.0)]


def segment_edges(line: Polyline, corner_angle: float = CORNER_ANGLE,
                  tol: float = STRAIGHT_TOL) -> list[EdgeSegment]:
    """Split a polyline at every vertex turning by at least ``corner_angle``."""
    if not 0 < corner_angle < 180:
        raise ValueError("corner_angle must be in (0, 180)")
    pts = list(line.points)
    n = len(pts)
    eps = 1e-9
    if line.closed:
        corners = [i for i in range(n) if _turn(pts[i - 1], pts[i], pts[(i + 1) % n]) >= corner_angle - eps]
        if not corners:
            pieces = [line]
        else:
            pieces = []
            for k, c in enumerate(corners):
                nxt = corners[(k + 1) % len(corners)]
                if nxt <= c:
                    nxt += n
                pieces.append(Polyline(tuple(pts[i % n] for i in range(c, nxt + 1))))
    else:
        cuts = [0] + [i for i in range(1, n - 1)
                      if _turn(pts[i - 1], pts[i], pts[i + 1]) >= corner_angle - eps] + [n - 1]
        pieces = [Polyline(tuple(pts[a:b + 1])) for a, b in zip(cuts, cuts[1:])]
    return [EdgeSegment(p, classify_shape(p, tol), orientation(p)) for p in pieces]


def rel_lengths(segs: Sequence[EdgeSegment]) -> Sequence[EdgeSegment]:
    """Label segments short/medium/long by tercile of the length distribution."""
    n = len(segs)
    lengths = [s.length() for s in segs]
    for s, L in zip(segs, lengths):
        if n == 1:
            s.rel_length = "medium"
            continue
        tie = 1e-9 * max(L, 1.0)
        below = sum(1 for x in lengths if x < L - tie)
        equal = sum(1 for x in lengths if abs(x - L) <= tie)
        frac = (below + 0.5 * (equal - 1)) / (n - 1)
        s.rel_length = "short" if frac < 1 / 3 else "long" if frac > 2 / 3 else "medium"
    return segs


def _oriented_points(seg: EdgeSegment, forward: bool):
    pts = seg.geometry.ring()
    return pts if forward else pts[::-1]


def classify_convexity(seg: EdgeSegment, cycle: EdgeCycle, index: Optional[int] = None,
                       segments: Optional[Sequence[EdgeSegment]] = None) -> Optional[str]:
    """'convex' when a curved segment bulges away from the cycle interior."""
    if seg.shape_class != "curved":
        return None
    forward = True
    if index is not None:
        for i, fwd in cycle.segments:
            if i == index:
                forward = fwd
                break
    pts = _oriented_points(seg, forward)
    a, b = pts[0], pts[-1]
    if a == b or len(pts) < 3:
        return "convex"
    dx, dy = b[0] - a[0], b[1] - a[1]
    mx, my = (a[0] + b[0]) / 2, (a[1] + b[1]) / 2
    cross = sum(dx * (py - my) - dy * (px - mx) for px, py in pts[1:-1]) / (len(pts) - 2)
    # interior lies on the side where cross has the sign of the signed area
    return "convex" if cross * cycle.signed_area < 0 else "concave"


# -- planar graph and faces ---------------------------------------------------

class ShapeAnalysis:
    """Segments, planar graph, faces and cycle tree of one glyph."""

    def __init__(self, glyph: Glyph, corner_angle: float = CORNER_ANGLE,
                 straight_tol: float = STRAIGHT_TOL, snap: float = SNAP, min_area: float = 0.0):
        self.glyph = glyph
        self.snap = snap
        self.segments: list[EdgeSegment] = []
        for stroke in glyph.strokes:
            self.segments.extend(segment_edges(stroke, corner_angle, straight_tol))
        rel_lengths(self.segments)
        self._build_graph()
        self.cycles = self._faces(min_area)
        self.tree = build_cycle_tree(self.cycles)
        for ci, cyc in enumerate(self.cycles):
            for si, _ in cyc.segments:
                seg = self.segments[si]
                if seg.convexity is None:
                    seg.convexity = classify_convexity(seg, cyc, si)

    def _build_graph(self):
        ends = []
        for i, s in enumerate(self.segments):
            if not s.geometry.closed:
                ends.append((s.start, i, 0))
                ends.append((s.end, i, 1))
        parent = list(range(len(ends)))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        order = sorted(range(len(ends)), key=lambda k: ends[k][0])
        for a in range(len(order)):
            pa = ends[order[a]][0]
            for b in range(a + 1, len(order)):
                pb = ends[order[b]][0]
                if pb[0] - pa[0] > self.snap:
                    break
                if math.dist(pa, pb) <= self.snap:
                    ra, rb = find(order[a]), find(order[b])
                    if ra != rb:
                        parent[max(ra, rb)] = min(ra, rb)
        roots = sorted({find(k) for k in range(len(ends))})
        node_id = {r: n for n, r in enumerate(roots)}
        self.node_pos = []
        for r in roots:
            members = [ends[k][0] for k in range(len(ends)) if find(k) == r]
            self.node_pos.append((sum(p[0] for p in members) / len(members),
                                  sum(p[1] for p in members) / len(members)))
        self.seg_nodes: list[Optional[tuple[int, int]]] = [None] * len(self.segments)
        tmp: dict[int, list] = {}
        for k, (_, i, which) in enumerate(ends):
            tmp.setdefault(i, [None, None])[which] = node_id[find(k)]
        for i, (u, v) in tmp.items():
            self.seg_nodes[i] = (u, v)

    def edges(self) -> list[int]:
        """Segments that take part in the planar graph (not isolated loops)."""
        return [i for i, nv in enumerate(self.seg_nodes) if nv is not None]

    def adjacency(self) -> list[tuple[int, int]]:
        at_node: dict[int, list[int]] = {}
        for i in self.edges():
            u, v = self.seg_nodes[i]
            at_node.setdefault(u, []).append(i)
            if v != u:
                at_node.setdefault(v, []).append(i)
        pairs = set()
        for segs in at_node.values():
            for a in segs:
                for b in segs:
                    if a < b:
                        pairs.add((a, b))
        return sorted(pairs)

    def _faces(self, min_area: float) -> list[EdgeCycle]:
        half = []  # (segment, forward, origin node, angle)
        for i in self.edges():
            u, v = self.seg_nodes[i]
            pts = self.segments[i].geometry.points
            a0 = math.atan2(pts[1][1] - pts[0][1], pts[1][0] - pts[0][0])
            a1 = math.atan2(pts[-2][1] - pts[-1][1], pts[-2][0] - pts[-1][0])
            half.append((i, True, u, a0))
            half.append((i, False, v, a1))
        out_at: dict[int, list[int]] = {}
        for h, (_, _, node, ang) in enumerate(half):
            out_at.setdefault(node, []).append(h)
        for node in out_at:
            out_at[node].sort(key=lambda h: (half[h][3], h))
        pos_in = {}
        for node, hs in out_at.items():
            for k, h in enumerate(hs):
                pos_in[h] = k
        twin = {}
        index = {(half[h][0], half[h][1]): h for h in range(len(half))}
        for h, (i, fwd, _, _) in enumerate(half):
            twin[h] = index[(i, not fwd)]

        def dest(h):
            i, fwd, _, _ = half[h]
            u, v = self.seg_nodes[i]
            return v if fwd else u

        visited = [False] * len(half)
        cycles = []
        for h0 in range(len(half)):
            if visited[h0]:
                continue
            face = []
            h = h0
            while not visited[h]:
                visited[h] = True
                face.append(h)
                t = twin[h]
                ring = out_at[dest(h)]
                h = ring[(pos_in[t] - 1) % len(ring)]
            cyc = self._make_cycle([(half[h][0], half[h][1]) for h in face])
            if cyc is not None and cyc.signed_area > 0 and cyc.area > min_area:
                cycles.append(cyc)
        for i, s in enumerate(self.segments):
            if self.seg_nodes[i] is None and len(s.geometry.points) >= 3:
                cyc = self._make_cycle([(i, True)])
                if cyc is not None and cyc.area > min_area:
                    if cyc.signed_area < 0:
                        cyc = EdgeCycle([(i, False)], cyc.ring[::-1], -cyc.signed_area)
                    cycles.append(cyc)
        cycles.sort(key=lambda c: (-c.area, min(c.segment_ids())))
        return cycles

    def _make_cycle(self, walk: list[tuple[int, bool]]) -> Optional[EdgeCycle]:
        ring = []
        for i, fwd in walk:
            pts = _oriented_points(self.segments[i], fwd)
            ring.extend(pts[:-1] if not self.segments[i].geometry.closed else pts[:-1])
        if len(ring) < 3:
            return None
        area = 0.0
        for (x1, y1), (x2, y2) in zip(ring, ring[1:] + ring[:1]):
            area += x1 * y2 - x2 * y1
        area /= 2.0
        counts: dict[int, int] = {}
        for i, _ in walk:
            counts[i] = counts.get(i, 0) + 1
        kept = [(i, f) for i, f in walk if counts[i] == 1] or walk
        return EdgeCycle(kept, ring, area)


def _interior_point(cycle: EdgeCycle):
    return cycle.polygon().representative_point()


def build_cycle_tree(cycles: Sequence[EdgeCycle]) -> CycleTree:
    """Parent = smallest cycle strictly containing the child's interior point."""
    n = len(cycles)
    polys = [c.polygon() for c in cycles]
    reps = [_interior_point(c) for c in cycles]
    parent: list[Optional[int]] = [None] * n
    for j in range(n):
        best = None
        for i in range(n):
            if i == j or cycles[i].area <= cycles[j].area:
                continue
            if polys[i].contains(reps[j]):
                if best is None or cycles[i].area < cycles[best].area:
                    best = i
        parent[j] = best
    depth = [0] * n
    for j in sorted(range(n), key=lambda k: -cycles[k].area):
        p = parent[j]
        if p is not None and depth[p] >= MAX_DEPTH:
            # fold anything deeper than the cap into the last level
            while depth[p] >= MAX_DEPTH:
                p = parent[p]
            parent[j] = p
        depth[j] = 1 if parent[j] is None else depth[parent[j]] + 1
    return CycleTree(parent, depth)


def find_edge_cycles(glyph: Glyph, **kw) -> list[EdgeCycle]:
    return ShapeAnalysis(glyph, **kw).cycles


# -- encoding -----------------------------------------------------------------

def segment_facts(seg: EdgeSegment, name: str) -> list[Expression]:
    out = [fact(seg.shape_class, name), fact("orient" + seg.orientation, name),
           fact(LENGTH_FUNCTORS[seg.rel_length], name)]
    if seg.convexity:
        out.append(fact(seg.convexity, name))
    return out


def encode_analysis(an: ShapeAnalysis, segments: Optional[Sequence[int]] = None,
                    cycles: Optional[Sequence[int]] = None, provenance: str = "",
                    with_contains: bool = True) -> CaseDescription:
    """Facts over a subset of an analysis (all of it by default)."""
    seg_ids = list(range(len(an.segments))) if segments is None else list(segments)
    cyc_ids = list(range(len(an.cycles))) if cycles is None else list(cycles)
    seg_set, cyc_set = set(seg_ids), set(cyc_ids)
    facts: list[Expression] = []
    ents: dict[str, str] = {}
    for i in seg_ids:
        name = f"s{i}"
        ents[name] = "segment"
        facts.extend(segment_facts(an.segments[i], name))
    for a, b in an.adjacency():
        if a in seg_set and b in seg_set:
            facts.append(fact("adjacent", f"s{a}", f"s{b}"))
    for c in cyc_ids:
        ents[f"c{c}"] = "cycle"
        for i in an.cycles[c].segment_ids():
            if i in seg_set:
                facts.append(fact("partOf", f"s{i}", f"c{c}"))
    if with_contains:
        for c in cyc_ids:
            p = an.tree.parent[c]
            if p is not None and p in cyc_set:
                facts.append(fact("contains", f"c{p}", f"c{c}"))
    return canonicalize(CaseDescription(facts, ents, provenance))


def encode_shape(glyph: Glyph | ShapeAnalysis, **kw) -> CaseDescription:
    an = glyph if isinstance(glyph, ShapeAnalysis) else ShapeAnalysis(glyph, **kw)
    return encode_analysis(an, provenance=an.glyph.id)
