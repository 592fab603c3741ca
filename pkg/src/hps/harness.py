"""Dataset loaders, the bitmap encoding pipeline and the experiment driver.

An experiment samples a seeded, per-class stratified training subset, encodes
every item once, adds the cases to per-concept pools in a fixed order and
classifies a held-out split.  Reports are plain JSON with sorted keys so that
two runs of the same config can be compared byte for byte; wall-clock timing
is kept out of the report and returned separately.
"""
from __future__ import annotations

import configparser
import gzip
import json
import random
import struct
import time
import warnings
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from hps import phal as hier
from hps.case import CaseDescription
from hps.errors import DataFormatError, InvalidInput, InvariantViolation
from hps.glyph import Glyph, glyph_from_strokes
from hps.raster import (GrayImage, Polyline, binarize, blur, extract_strokes, prune_spurs,
                        read_image, resize_below, simplify, thin, upscale)
from hps.sage import GeneralizationPool, Generalization, classify
from hps.shape import encode_shape

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


# -- loaders ------------------------------------------------------------------

def _read_maybe_gz(path: str | Path) -> bytes:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc
    if data[:2] == b"\x1f\x8b":
        try:
            data = gzip.decompress(data)
        except (OSError, EOFError) as exc:
            raise DataFormatError(f"{path}: bad gzip stream: {exc}") from exc
    return data


def _header(data: bytes, n: int, path) -> tuple[int, ...]:
    if len(data) < 4 * n:
        raise DataFormatError(f"{path}: truncated header at byte {len(data)} "
                              f"(need {4 * n} bytes)")
    return struct.unpack(">" + "I" * n, data[:4 * n])


def load_idx(images_path: str | Path, labels_path: str | Path) -> list[tuple[GrayImage, str]]:
    """Read an IDX image file and its label file (optionally gzipped)."""
    img = _read_maybe_gz(images_path)
    lab = _read_maybe_gz(labels_path)
    magic, count, rows, cols = _header(img, 4, images_path)
    if magic != IMAGE_MAGIC:
        raise DataFormatError(f"{images_path}: bad magic 0x{magic:08x} at byte 0 "
                              f"(expected 0x{IMAGE_MAGIC:08x})")
    lmagic, lcount = _header(lab, 2, labels_path)
    if lmagic != LABEL_MAGIC:
        raise DataFormatError(f"{labels_path}: bad magic 0x{lmagic:08x} at byte 0 "
                              f"(expected 0x{LABEL_MAGIC:08x})")
    if lcount != count:
        raise DataFormatError(f"{labels_path}: label count {lcount} at byte 4 does not match "
                              f"image count {count}")
    need = 16 + count * rows * cols
    if len(img) < need:
        raise DataFormatError(f"{images_path}: truncated at byte {len(img)} (need {need})")
    if len(lab) < 8 + count:
        raise DataFormatError(f"{labels_path}: truncated at byte {len(lab)} (need {8 + count})")
    pix = np.frombuffer(img, dtype=np.uint8, count=count * rows * cols, offset=16)
    pix = pix.reshape(count, rows, cols)
    labels = np.frombuffer(lab, dtype=np.uint8, count=count, offset=8)
    return [(GrayImage(pix[i]), str(int(labels[i]))) for i in range(count)]


def load_png_dir(root: str | Path) -> list[tuple[GrayImage, str]]:
    """root/<label>/*.png, in lexicographic order; label is the directory name."""
    root = Path(root)
    if not root.is_dir():
        raise DataFormatError(f"{root}: not a directory")
    out = []
    classes = sorted(p for p in root.iterdir() if p.is_dir())
    if not classes:
        raise DataFormatError(f"{root}: no class directories")
    for cdir in classes:
        n = 0
        for f in sorted(cdir.rglob("*.png")):
            try:
                out.append((read_image(f), cdir.name))
                n += 1
            except (DataFormatError, OSError, ValueError) as exc:
                warnings.warn(f"skipping {f}: {exc}")
        if n == 0:
            raise DataFormatError(f"{cdir}: class has no readable images")
    return out


def _stroke_from_json(obj) -> Polyline:
    return Polyline(tuple(tuple(map(float, p)) for p in obj["points"]), bool(obj.get("closed")))


def load_glyph_jsonl(path: str | Path) -> list[tuple[Glyph, str]]:
    """Vector sketches: one JSON object per line with "id", "label", "strokes"."""
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                strokes = [_stroke_from_json(s) for s in obj["strokes"]]
                g = glyph_from_strokes(strokes, obj["label"], obj.get("id") or f"line{lineno}")
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
            out.append((g, g.label))
    return out


def glyph_to_json(g: Glyph) -> dict:
    return {"id": g.id, "label": g.label,
            "strokes": [{"points": [list(p) for p in s.points], "closed": s.closed}
                        for s in g.strokes]}


# -- config -------------------------------------------------------------------

@dataclass
class EncodeParams:
    upscale: int = 4
    max_dim: int = 300
    blur: bool = True
    threshold: int = 128
    polarity: str = "bright-ink"
    epsilon: float = 1.5
    spur_length: float = 0.0
    corner_angle: float = 45.0
    straight_tol: float = 0.05
    snap: float = 2.0
    min_area: float = 0.0


@dataclass
class ExperimentConfig:
    kind: str = "idx"
    images: str = ""
    labels: str = ""
    root: str = ""
    test_images: str = ""
    test_labels: str = ""
    train_per_class: int = 10
    test_per_class: int = 100
    seed: int = 0
    workers: int = 1
    encode: EncodeParams = field(default_factory=EncodeParams)
    sage_threshold: float = 0.8
    prune_cutoff: float = 0.2
    mac_k: int = 20
    phal: bool = False
    cascade: hier.CascadeParams = field(default_factory=hier.CascadeParams)
    base_dir: str = "."

    def path(self, p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else Path(self.base_dir) / q

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        d["cascade"]["level_weights"] = list(d["cascade"]["level_weights"])
        return d


def _coerce(raw: str, typ, key: str):
    try:
        if typ in ("bool", bool):
            v = raw.strip().lower()
            if v not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise ValueError(raw)
            return v in ("1", "true", "yes", "on")
        if typ in ("int", int):
            return int(raw)
        if typ in ("float", float):
            return float(raw)
        if typ in ("Optional[int]",):
            return None if raw.strip().lower() in ("", "none", "all") else int(raw)
        return raw.strip()
    except ValueError as exc:
        raise InvalidInput(f"config key {key}: cannot parse {raw!r}") from exc


def _fill(obj, section: dict, sec_name: str):
    known = {f.name: f.type for f in fields(obj)}
    for key, raw in section.items():
        if key not in known or key in ("encode", "cascade", "base_dir"):
            raise InvalidInput(f"unknown config key [{sec_name}] {key}")
        typ = known[key]
        if key == "level_weights":
            try:
                val = tuple(float(x) for x in raw.replace(",", " ").split())
            except ValueError as exc:
                raise InvalidInput(f"config key {key}: cannot parse {raw!r}") from exc
        else:
            val = _coerce(raw, typ if isinstance(typ, str) else typ, key)
        setattr(obj, key, val)


def load_config(path: str | Path) -> ExperimentConfig:
    """INI-style key = value file with [data], [encode], [sage], [phal] sections."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise DataFormatError(f"{path}: {exc}") from exc
    cfg = ExperimentConfig(base_dir=str(Path(path).parent))
    sections = {s: dict(cp[s]) for s in cp.sections()}
    for name in sections:
        if name not in ("data", "encode", "sage", "phal", "run"):
            raise InvalidInput(f"unknown config section [{name}]")
    top = {}
    top.update(sections.get("data", {}))
    top.update(sections.get("run", {}))
    sage = sections.get("sage", {})
    for k, v in sage.items():
        top[{"threshold": "sage_threshold"}.get(k, k)] = v
    ph = dict(sections.get("phal", {}))
    if "enabled" in ph:
        top["phal"] = ph.pop("enabled")
    _fill(cfg, top, "data")
    _fill(cfg.encode, sections.get("encode", {}), "encode")
    _fill(cfg.cascade, ph, "phal")
    cfg.cascade.__post_init__()
    return cfg


def dump_config(cfg: ExperimentConfig) -> str:
    d = cfg.to_dict()
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["data"] = {k: str(d[k]) for k in ("kind", "images", "labels", "root", "test_images",
                                         "test_labels", "train_per_class", "test_per_class",
                                         "seed")}
    cp["run"] = {"workers": str(d["workers"])}
    cp["encode"] = {k: str(v) for k, v in d["encode"].items()}
    cp["sage"] = {"threshold": str(d["sage_threshold"]), "prune_cutoff": str(d["prune_cutoff"]),
                  "mac_k": str(d["mac_k"])}
    casc = dict(d["cascade"])
    casc["level_weights"] = " ".join(repr(w) for w in casc["level_weights"])
    cp["phal"] = {"enabled": str(d["phal"]), **{k: str(v) for k, v in casc.items()}}
    import io
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


# -- encoding -----------------------------------------------------------------

def vectorize(img: GrayImage, p: EncodeParams = EncodeParams(), label: Optional[str] = None,
              id: str = "glyph") -> Optional[Glyph]:
    """Bitmap to a single glyph (all strokes), or None for blank images."""
    if p.upscale > 1:
        img = upscale(img, p.upscale)
    img = resize_below(img, p.max_dim)
    if p.blur:
        img = blur(img)
    skel = thin(binarize(img, p.threshold, p.polarity))
    strokes = extract_strokes(skel)
    if p.spur_length > 0:
        strokes = prune_spurs(strokes, p.spur_length)
    strokes = [simplify(s, p.epsilon) for s in strokes]
    if not strokes:
        return None
    return glyph_from_strokes(strokes, label, id)


def _shape_kw(p: EncodeParams) -> dict:
    return dict(corner_angle=p.corner_angle, straight_tol=p.straight_tol, snap=p.snap,
                min_area=p.min_area)


def encode_glyph(g: Optional[Glyph], p: EncodeParams = EncodeParams()) -> CaseDescription:
    if g is None:
        return CaseDescription([], provenance="blank")
    return encode_shape(g, **_shape_kw(p))


def encode_image(img: GrayImage, p: EncodeParams = EncodeParams(), id: str = "glyph") -> CaseDescription:
    return encode_glyph(vectorize(img, p, id=id), p)


def decompose_item(item, p: EncodeParams) -> list[hier.LevelDescription]:
    g = item if isinstance(item, Glyph) or item is None else vectorize(item, p)
    if g is None:
        return [hier.LevelDescription(1, CaseDescription([], provenance="blank"))]
    return hier.decompose(g, **_shape_kw(p))


def _encode_job(args):
    item, p, mode, id = args
    if mode == "phal":
        return decompose_item(item, p)
    if isinstance(item, Glyph):
        return encode_glyph(item, p)
    return encode_image(item, p, id)


def encode_all(items: Sequence, p: EncodeParams, mode: str = "flat", workers: int = 1) -> list:
    """Encode in parallel when workers > 1; output order always follows input."""
    jobs = [(x, p, mode, f"item{i}") for i, x in enumerate(items)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(_encode_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    return [_encode_job(j) for j in jobs]


# -- experiment ---------------------------------------------------------------

def load_dataset(cfg: ExperimentConfig) -> tuple[list, Optional[list]]:
    """(train-side items, separate test items or None)."""
    if cfg.kind == "idx":
        data = load_idx(cfg.path(cfg.images), cfg.path(cfg.labels))
        test = None
        if cfg.test_images:
            test = load_idx(cfg.path(cfg.test_images), cfg.path(cfg.test_labels))
        return data, test
    if cfg.kind == "png-dir":
        return load_png_dir(cfg.path(cfg.root)), None
    if cfg.kind == "glyph-jsonl":
        return load_glyph_jsonl(cfg.path(cfg.root or cfg.images)), None
    raise InvalidInput(f"unknown dataset kind {cfg.kind!r}")


def stratified_split(labels: Sequence[str], n_train: int, n_test: int, seed: int,
                     test_labels: Optional[Sequence[str]] = None) -> tuple[list[int], list[int]]:
    """Seeded per-class sample; train and test are disjoint when drawn from one set."""
    rng = random.Random(seed)
    by_class: dict[str, list[int]] = {}
    for i, y in enumerate(labels):
        by_class.setdefault(y, []).append(i)
    train, test = [], []
    for y in sorted(by_class):
        idx = by_class[y][:]
        rng.shuffle(idx)
        train.extend(idx[:n_train])
        if test_labels is None:
            # test items come from the far end, so growing n_train keeps the
            # same test set (and nested training sets) for a given seed
            test.extend(idx[max(n_train, len(idx) - n_test):])
    if test_labels is not None:
        tb: dict[str, list[int]] = {}
        for i, y in enumerate(test_labels):
            tb.setdefault(y, []).append(i)
        for y in sorted(tb):
            idx = tb[y][:]
            rng.shuffle(idx)
            test.extend(idx[:n_test])
    return train, test


@dataclass
class EvalReport:
    accuracy: float
    labels: list[str]
    confusion: list[list[int]]
    per_class: dict[str, Optional[float]]
    n_train: int
    n_test: int
    config: dict
    mode: str = "flat"
    single_pass: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def to_json(self) -> dict:
        d = asdict(self)
        # timing varies run to run; it is reported beside, not inside, the report
        d.pop("wall_time")
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1) + "\n"


def confusion_report(truth: Sequence[str], pred: Sequence[str], labels: Sequence[str]):
    index = {y: i for i, y in enumerate(labels)}
    m = [[0] * len(labels) for _ in labels]
    for t, p in zip(truth, pred):
        m[index[t]][index[p]] += 1
    per = {}
    for y in labels:
        row = m[index[y]]
        per[y] = None if sum(row) == 0 else 100.0 * row[index[y]] / sum(row)
    acc = 100.0 * sum(m[i][i] for i in range(len(labels))) / max(1, len(truth))
    return acc, m, per


class TrainedModel:
    """Flat pools or hierarchical concepts, plus the encoding parameters."""

    def __init__(self, mode: str, cfg: ExperimentConfig):
        self.mode = mode
        self.cfg = cfg
        self.pools: dict[str, GeneralizationPool] = {}
        self.concepts: dict[str, hier.HierarchicalConcept] = {}

    def add(self, label: str, encoded) -> None:
        if self.mode == "phal":
            if label not in self.concepts:
                self.concepts[label] = hier.HierarchicalConcept(
                    label, self.cfg.sage_threshold, self.cfg.prune_cutoff)
            hier.train(self.concepts[label], encoded)
        else:
            if label not in self.pools:
                self.pools[label] = GeneralizationPool(label, self.cfg.sage_threshold,
                                                       self.cfg.prune_cutoff)
            self.pools[label].add_example(encoded)

    def classify(self, encoded, trace: Optional[dict] = None) -> tuple[str, float]:
        if self.mode == "phal":
            return hier.classify_cascade(encoded, [self.concepts[c] for c in sorted(self.concepts)],
                                         self.cfg.cascade, trace)
        return classify(encoded, [self.pools[c] for c in sorted(self.pools)], self.cfg.mac_k)

    def save(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = []
        if self.mode == "phal":
            for c in sorted(self.concepts):
                for lv, pool in self.concepts[c].pools.items():
                    name = f"{_safe(c)}.L{lv}.json"
                    pool.save(out / name)
                    files.append({"concept": c, "level": lv, "file": name})
        else:
            for c in sorted(self.pools):
                name = f"{_safe(c)}.json"
                self.pools[c].save(out / name)
                files.append({"concept": c, "file": name})
        manifest = {"mode": self.mode, "pools": files, "config": self.cfg.to_dict()}
        (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")

    @classmethod
    def load(cls, pools_dir: str | Path, cfg: Optional[ExperimentConfig] = None) -> "TrainedModel":
        d = Path(pools_dir)
        try:
            manifest = json.loads((d / "manifest.json").read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DataFormatError(f"{d}/manifest.json: {exc}") from exc
        if cfg is None:
            cfg = config_from_dict(manifest.get("config", {}))
        model = cls(manifest["mode"], cfg)
        for ent in manifest["pools"]:
            pool = GeneralizationPool.load(d / ent["file"])
            if model.mode == "phal":
                hc = model.concepts.setdefault(ent["concept"], hier.HierarchicalConcept(ent["concept"]))
                hc.pools[int(ent["level"])] = pool
            else:
                model.pools[ent["concept"]] = pool
        return model

    def encode(self, item) -> object:
        return _encode_job((item, self.cfg.encode, self.mode, "probe"))


def config_from_dict(d: dict) -> ExperimentConfig:
    cfg = ExperimentConfig()
    for k, v in d.items():
        if k == "encode":
            cfg.encode = EncodeParams(**v)
        elif k == "cascade":
            v = dict(v)
            v["level_weights"] = tuple(v["level_weights"])
            cfg.cascade = hier.CascadeParams(**v)
        elif hasattr(cfg, k):
            setattr(cfg, k, v)
    return cfg


def _safe(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in name)


def train_model(cfg: ExperimentConfig, mode: str, items: Sequence, train_idx: Sequence[int],
                workers: Optional[int] = None) -> tuple[TrainedModel, dict]:
    """Encode each training item once and add it, in index order."""
    encoded = encode_all([items[i][0] for i in train_idx], cfg.encode, mode,
                         cfg.workers if workers is None else workers)
    model = TrainedModel(mode, cfg)
    added: Counter = Counter()
    for i, case in zip(train_idx, encoded):
        model.add(items[i][1], case)
        added[i] += 1
    if len(encoded) != len(train_idx) or len(added) != len(train_idx) \
            or any(n != 1 for n in added.values()):
        raise InvariantViolation("every training item must be encoded and added exactly once")
    return model, {"encoded": len(encoded), "added": sum(added.values()),
                   "distinct_items": len(added)}


def run_experiment(cfg: ExperimentConfig, mode: Optional[str] = None,
                   pools_out: Optional[str | Path] = None, trace: Optional[list] = None,
                   data=None) -> EvalReport:
    """Sample, encode once, train in item order, classify, report."""
    mode = mode or ("phal" if cfg.phal else "flat")
    t0 = time.perf_counter()
    items, test_items = data if data is not None else load_dataset(cfg)
    labels = [y for _, y in items]
    tr, te = stratified_split(labels, cfg.train_per_class, cfg.test_per_class, cfg.seed,
                              None if test_items is None else [y for _, y in test_items])
    test_src = items if test_items is None else test_items
    model, single_pass = train_model(cfg, mode, items, tr)
    probes = encode_all([test_src[i][0] for i in te], cfg.encode, mode, cfg.workers)
    truth, pred = [], []
    for i, probe in zip(te, probes):
        t = {} if trace is not None else None
        y, score = model.classify(probe, t)
        truth.append(test_src[i][1])
        pred.append(y)
        if trace is not None:
            trace.append({"item": i, "truth": test_src[i][1], "predicted": y, "score": score,
                          **(t or {})})
    all_labels = sorted(set(labels) | set(truth), key=_label_key)
    acc, m, per = confusion_report(truth, pred, all_labels)
    if pools_out is not None:
        model.save(pools_out)
    return EvalReport(acc, all_labels, m, per, len(tr), len(te), cfg.to_dict(), mode,
                      single_pass, time.perf_counter() - t0)


def _label_key(y: str):
    return (0, int(y), y) if y.isdigit() else (1, 0, y)


# -- inspection ---------------------------------------------------------------

def _band(p: float) -> str:
    return f"{p:.2f}"


def inspect_pool(pool_path: str | Path) -> str:
    """Human-readable listing: facts by probability, entity label alternatives."""
    pool = GeneralizationPool.load(pool_path)
    lines = [f"pool {pool.concept}: {len(pool.generalizations)} generalization(s), "
             f"{len(pool.outliers)} outlier(s), threshold {pool.threshold}, "
             f"cutoff {pool.prune_cutoff}"]
    if pool.is_empty():
        lines.append("empty pool")
        return "\n".join(lines) + "\n"
    for g in pool.generalizations:
        lines.append(f"generalization {g.id} ({g.n_examples} examples)")
        facts = sorted(g.facts, key=lambda f: (-g.facts[f], f.key))
        for f in facts:
            lines.append(f"  {_band(g.probability(f))}  {f.key}")
        for e in sorted(g.labels):
            alts = ", ".join(f"{lab} {_band(p)}" for lab, p in g.label_alternatives(e))
            lines.append(f"  {e} is most likely: {alts}")
    for oid, c in pool.outliers:
        lines.append(f"outlier {oid} ({len(c.facts)} facts)")
    return "\n".join(lines) + "\n"


_ANGLE = {"orientE": 0.0, "orientNE": 45.0, "orientN": 90.0, "orientNW": 135.0}
_LEN = {"shortEdge": 14.0, "mediumEdge": 26.0, "longEdge": 38.0}


def render_generalization_svg(g: Generalization) -> str:
    """One row per generalized segment drawn with its modal orientation,
    length and curvature; opacity follows the modal probability."""
    import math
    from xml.sax.saxutils import escape

    per: dict[str, dict[str, float]] = {}
    for f in g.facts:
        if len(f.args) == 1 and isinstance(f.args[0], str):
            per.setdefault(f.args[0], {})[f.functor] = g.probability(f)
    rows = sorted(per)
    h = 50 * max(1, len(rows)) + 20
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="420" height="{h}">',
           f'  <text x="10" y="15" font-size="12">{escape(g.id)}: {g.n_examples} examples</text>']
    for r, e in enumerate(rows):
        facts = per[e]
        cy = 45 + 50 * r
        ang = max(_ANGLE, key=lambda k: (facts.get(k, 0.0), k))
        ln = max(_LEN, key=lambda k: (facts.get(k, 0.0), k))
        prob = max(facts.get(ang, 0.0), 1e-3)
        a, L = math.radians(_ANGLE[ang]), _LEN[ln]
        x1, y1 = 40 - L / 2 * math.cos(a), cy + L / 2 * math.sin(a)
        x2, y2 = 40 + L / 2 * math.cos(a), cy - L / 2 * math.sin(a)
        if facts.get("curved", 0.0) > facts.get("straight", 0.0):
            mx, my = (x1 + x2) / 2 - 8 * math.sin(a), (y1 + y2) / 2 - 8 * math.cos(a)
            d = f"M {x1:.1f} {y1:.1f} Q {mx:.1f} {my:.1f} {x2:.1f} {y2:.1f}"
        else:
            d = f"M {x1:.1f} {y1:.1f} L {x2:.1f} {y2:.1f}"
        out.append(f'  <path d="{d}" stroke="black" fill="none" stroke-opacity="{prob:.2f}"/>')
        text = ", ".join(f"{k} {v:.2f}" for k, v in sorted(facts.items(), key=lambda x: (-x[1], x[0])))
        out.append(f'  <text x="80" y="{cy + 4}" font-size="11">{escape(e)}: {escape(text)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
