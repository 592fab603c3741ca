"""Bitmap pre-processing, skeletonisation and stroke extraction.

Images are numpy arrays (rows x cols).  ``GrayImage`` holds uint8 intensities
and ``BinaryImage`` boolean foreground flags; both are thin immutable wrappers
so the rest of the pipeline can carry width/height around explicitly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from hps import _kernels
from hps.errors import InvalidInput, DataFormatError

Point = tuple[float, float]


@dataclass(frozen=True, eq=False)
class GrayImage:
    pixels: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        if arr.ndim != 2:
            raise InvalidInput("gray image must be 2-D")
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other):
        return isinstance(other, GrayImage) and np.array_equal(self.pixels, other.pixels)

    @classmethod
    def from_samples(cls, width: int, height: int, samples: Sequence[int]) -> "GrayImage":
        if len(samples) != width * height:
            raise InvalidInput(f"expected {width * height} samples, got {len(samples)}")
        return cls(np.asarray(samples, dtype=np.uint8).reshape(height, width))


@dataclass(frozen=True, eq=False)
class BinaryImage:
    bits: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.bits, dtype=bool)
        if arr.ndim != 2:
            raise InvalidInput("binary image must be 2-D")
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def count(self) -> int:
        return int(self.bits.sum())

    def __eq__(self, other):
        return isinstance(other, BinaryImage) and np.array_equal(self.bits, other.bits)


@dataclass(frozen=True)
class Polyline:
    points: tuple[Point, ...]
    closed: bool = False

    def __post_init__(self):
        pts = tuple((float(x), float(y)) for x, y in self.points)
        dedup = [pts[0]] if pts else []
        for p in pts[1:]:
            if p != dedup[-1]:
                dedup.append(p)
        if self.closed and len(dedup) > 1 and dedup[0] == dedup[-1]:
            dedup.pop()
        if len(dedup) < 2:
            raise InvalidInput("polyline needs at least two distinct points")
        object.__setattr__(self, "points", tuple(dedup))

    def __len__(self):
        return len(self.points)

    def ring(self) -> list[Point]:
        """Points with the closing vertex repeated for closed lines."""
        pts = list(self.points)
        return pts + [pts[0]] if self.closed else pts

    def length(self) -> float:
        pts = self.ring()
        return sum(math.dist(a, b) for a, b in zip(pts, pts[1:]))

    def translated(self, dx: float, dy: float) -> "Polyline":
        return Polyline(tuple((x + dx, y + dy) for x, y in self.points), self.closed)

    def scaled(self, s: float) -> "Polyline":
        return Polyline(tuple((x * s, y * s) for x, y in self.points), self.closed)


# -- pre-processing ---------------------------------------------------------

def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    """Row i holds the fractional coverage of each source cell by output cell i."""
    scale = n_in / n_out
    w = np.zeros((n_out, n_in))
    for i in range(n_out):
        lo, hi = i * scale, (i + 1) * scale
        for j in range(int(math.floor(lo)), min(n_in, int(math.ceil(hi)))):
            w[i, j] = min(hi, j + 1) - max(lo, j)
    return w / w.sum(axis=1, keepdims=True)


def resize_below(img: GrayImage, max_dim: int = 300) -> GrayImage:
    """Downscale by area averaging so that neither side exceeds ``max_dim``."""
    if max_dim < 8:
        raise InvalidInput("max_dim must be >= 8")
    h, w = img.height, img.width
    if h == 0 or w == 0:
        raise InvalidInput("degenerate image")
    if max(w, h) <= max_dim:
        return img
    if w >= h:
        nw, nh = max_dim, max(1, int(round(h * max_dim / w)))
    else:
        nh, nw = max_dim, max(1, int(round(w * max_dim / h)))
    out = _area_weights(h, nh) @ img.pixels.astype(float) @ _area_weights(w, nw).T
    return GrayImage(np.floor(out + 0.5).clip(0, 255).astype(np.uint8))


def upscale(img: GrayImage, factor: int) -> GrayImage:
    """Bilinear integer upscaling; used to give small bitmaps room to thin."""
    if factor <= 1:
        return img
    h, w = img.height, img.width
    ys = (np.arange(h * factor) + 0.5) / factor - 0.5
    xs = (np.arange(w * factor) + 0.5) / factor - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    fy = np.clip(ys - y0, 0, 1)[:, None]
    fx = np.clip(xs - x0, 0, 1)[None, :]
    p = img.pixels.astype(float)
    top = p[y0][:, x0] * (1 - fx) + p[y0][:, x1] * fx
    bot = p[y1][:, x0] * (1 - fx) + p[y1][:, x1] * fx
    return GrayImage(np.floor(top * (1 - fy) + bot * fy + 0.5).astype(np.uint8))


def blur(img: GrayImage) -> GrayImage:
    return GrayImage(_kernels.blur3(img.pixels))


def binarize(img: GrayImage, threshold: int = 128, polarity: str = "bright-ink") -> BinaryImage:
    if not 0 <= threshold <= 255:
        raise InvalidInput("threshold must be in [0, 255]")
    if polarity == "bright-ink":
        return BinaryImage(img.pixels >= threshold)
    if polarity == "dark-ink":
        return BinaryImage(img.pixels <= threshold)
    raise InvalidInput(f"unknown polarity {polarity!r}")


def thin(img: BinaryImage) -> BinaryImage:
    """Zhang-Suen skeleton; never deletes the last pixel of a component."""
    return BinaryImage(_kernels.thin(img.bits))


# -- vectorisation ----------------------------------------------------------

_OFFSETS = ((-1, 0), (0, 1), (1, 0), (0, -1), (-1, 1), (1, 1), (1, -1), (-1, -1))


def pixel_graph(bits: np.ndarray) -> dict[tuple[int, int], list[tuple[int, int]]]:
    """8-adjacency graph over foreground pixels, keyed by (row, col).

    A diagonal link is dropped when the two pixels already share an
    orthogonal neighbour; otherwise every staircase corner would form a
    triangle of degree-3 nodes.
    """
    h, w = bits.shape
    graph: dict[tuple[int, int], list[tuple[int, int]]] = {}
    ys, xs = np.nonzero(bits)
    for y, x in zip(ys.tolist(), xs.tolist()):
        nbrs = []
        for dy, dx in _OFFSETS:
            ny, nx = y + dy, x + dx
            if not (0 <= ny < h and 0 <= nx < w) or not bits[ny, nx]:
                continue
            if dy and dx and (bits[y, nx] or bits[ny, x]):
                continue
            nbrs.append((ny, nx))
        graph[(y, x)] = nbrs
    return graph


def extract_strokes(skeleton: BinaryImage) -> list[Polyline]:
    """Split a skeleton into strokes between junctions and endpoints.

    Points are (x, y) pixel coordinates.  Junction pixels are repeated at the
    ends of every incident stroke; isolated single pixels carry no stroke.
    """
    graph = pixel_graph(skeleton.bits)
    nodes = sorted(p for p, nb in graph.items() if len(nb) != 2)
    used: set[frozenset] = set()
    strokes: list[Polyline] = []

    def walk(start, nxt):
        path = [start, nxt]
        used.add(frozenset((start, nxt)))
        prev, cur = start, nxt
        while len(graph[cur]) == 2:
            a, b = graph[cur]
            step = b if a == prev else a
            edge = frozenset((cur, step))
            if edge in used:
                break
            used.add(edge)
            path.append(step)
            prev, cur = cur, step
        return path

    for node in nodes:
        for nb in graph[node]:
            if frozenset((node, nb)) in used:
                continue
            path = walk(node, nb)
            strokes.append(Polyline(tuple((x, y) for y, x in path)))
    # whatever is left consists of isolated cycles
    for start in sorted(graph):
        for nb in graph[start]:
            if frozenset((start, nb)) in used:
                continue
            path = walk(start, nb)
            if path[-1] == path[0]:
                path.pop()
            strokes.append(Polyline(tuple((x, y) for y, x in path), closed=len(path) >= 3))
    return strokes


def _point_segment_distance(p: Point, a: Point, b: Point) -> float:
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    seg2 = dx * dx + dy * dy
    if seg2 == 0.0:
        return math.dist(p, a)
    t = ((p[0] - ax) * dx + (p[1] - ay) * dy) / seg2
    t = min(1.0, max(0.0, t))
    return math.dist(p, (ax + t * dx, ay + t * dy))


def _dp(points: Sequence[Point], epsilon: float) -> list[int]:
    keep = [0, len(points) - 1]
    stack = [(0, len(points) - 1)]
    while stack:
        lo, hi = stack.pop()
        best, best_d = -1, epsilon
        for i in range(lo + 1, hi):
            d = _point_segment_distance(points[i], points[lo], points[hi])
            if d > best_d:
                best, best_d = i, d
        if best >= 0:
            keep.append(best)
            stack.append((lo, best))
            stack.append((best, hi))
    return sorted(set(keep))


def simplify(line: Polyline, epsilon: float = 1.5) -> Polyline:
    """Douglas-Peucker reduction; closed lines are split at their far point."""
    if epsilon < 0:
        raise InvalidInput("epsilon must be >= 0")
    pts = line.points
    if epsilon == 0 or len(pts) <= 2:
        return line
    if not line.closed:
        return Polyline(tuple(pts[i] for i in _dp(pts, epsilon)))
    far = max(range(len(pts)), key=lambda i: (math.dist(pts[0], pts[i]), -i))
    first = _dp(pts[: far + 1], epsilon)
    second = _dp(list(pts[far:]) + [pts[0]], epsilon)
    idx = first + [far + i for i in second[1:-1]]
    if len(idx) < 3:
        return Polyline(tuple(pts[i] for i in idx), closed=False)
    return Polyline(tuple(pts[i] for i in idx), closed=True)


def prune_spurs(strokes: list[Polyline], min_length: float) -> list[Polyline]:
    """Drop short strokes that dangle from a junction (skeleton noise).

    A stroke is a spur when one end is free (not shared with another stroke)
    and its length is below ``min_length``.  Strokes that are the only stroke
    of their component are kept.
    """
    if min_length <= 0 or len(strokes) < 2:
        return strokes
    ends: dict[Point, int] = {}
    for s in strokes:
        if not s.closed:
            ends[s.points[0]] = ends.get(s.points[0], 0) + 1
            ends[s.points[-1]] = ends.get(s.points[-1], 0) + 1
    kept = []
    for s in strokes:
        if s.closed:
            kept.append(s)
            continue
        a, b = ends[s.points[0]], ends[s.points[-1]]
        dangling = (a == 1) != (b == 1)
        if dangling and s.length() < min_length:
            continue
        kept.append(s)
    return kept or strokes


# -- file formats -----------------------------------------------------------

def read_image(path: str | Path) -> GrayImage:
    """Read an 8-bit grayscale PGM (P5) or PNG file."""
    path = Path(path)
    data = path.read_bytes()
    if data[:2] == b"P5":
        return _parse_pgm(data, path)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        from PIL import Image

        with Image.open(path) as im:
            if im.mode not in ("L", "1", "P", "LA", "RGB", "RGBA", "I;16"):
                raise DataFormatError(f"{path}: unsupported PNG mode {im.mode}")
            return GrayImage(np.asarray(im.convert("L")))
    raise DataFormatError(f"{path}: not a P5 PGM or PNG file")


def _parse_pgm(data: bytes, path) -> GrayImage:
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataFormatError(f"{path}: truncated PGM header at byte {pos}")
        fields.append(int(data[start:pos]))
    pos += 1
    w, h, maxval = fields
    if maxval > 255:
        raise DataFormatError(f"{path}: 16-bit PGM not supported")
    body = data[pos:pos + w * h]
    if len(body) != w * h:
        raise DataFormatError(f"{path}: truncated PGM body at byte {pos + len(body)}")
    return GrayImage(np.frombuffer(body, dtype=np.uint8).reshape(h, w))


def write_pgm(path: str | Path, img: GrayImage | BinaryImage) -> None:
    if isinstance(img, BinaryImage):
        arr = np.where(img.bits, 255, 0).astype(np.uint8)
    else:
        arr = img.pixels
    h, w = arr.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + arr.tobytes())
