"""Command line interface.

Exit codes: 0 ok, 1 usage or invalid input, 2 data-format error,
3 internal invariant violation (or nothing to classify against).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from hps import harness, vrd
from hps.case import case_to_json, dumps_case
from hps.errors import DataFormatError, HPSError, InvalidInput
from hps.glyph import Sketch, read_detections, sketch_to_svg
from hps.raster import read_image
from hps.relations import encode_scene
from hps.sage import GeneralizationPool

log = logging.getLogger("hps")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _dump(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def _config(args) -> harness.ExperimentConfig:
    cfg = harness.load_config(args.config) if getattr(args, "config", None) \
        else harness.ExperimentConfig()
    if getattr(args, "phal", False):
        cfg.phal = True
    return cfg


def _read_input(path: str):
    """Image file, or a vector-glyph JSONL (first line)."""
    p = Path(path)
    if p.suffix in (".jsonl", ".json"):
        items = harness.load_glyph_jsonl(p)
        if not items:
            raise DataFormatError(f"{p}: no glyphs")
        return items[0][0]
    return read_image(p)


def cmd_vectorize(args) -> int:
    cfg = _config(args)
    img = read_image(args.image)
    g = harness.vectorize(img, cfg.encode, id=Path(args.image).stem)
    if g is None:
        _dump({"strokes": []})
        return 0
    _dump(harness.glyph_to_json(g))
    if args.svg:
        w = img.width * max(1, cfg.encode.upscale)
        h = img.height * max(1, cfg.encode.upscale)
        Path(args.svg).write_text(sketch_to_svg(Sketch((g,), w, h)))
    return 0


def cmd_encode(args) -> int:
    cfg = _config(args)
    src = Path(args.input)
    if src.suffix == ".jsonl" and not args.glyphs:
        for rec in read_detections(src):
            case = encode_scene(Sketch(tuple(rec.glyphs()), rec.width, rec.height))
            sys.stdout.write(json.dumps({"image_id": rec.image_id, "case": case_to_json(case)},
                                        sort_keys=True) + "\n")
        return 0
    item = _read_input(args.input)
    if args.levels:
        levels = harness.decompose_item(item, cfg.encode)
        _dump([{"level": ld.level, "case": case_to_json(ld.case),
                "parts": [case_to_json(c) for c in ld.part_cases]} for ld in levels])
        return 0
    case = harness.encode_glyph(item, cfg.encode) if not hasattr(item, "pixels") \
        else harness.encode_image(item, cfg.encode)
    sys.stdout.write(dumps_case(case))
    return 0


def _split(cfg):
    items, test_items = harness.load_dataset(cfg)
    tr, te = harness.stratified_split([y for _, y in items], cfg.train_per_class,
                                      cfg.test_per_class, cfg.seed,
                                      None if test_items is None else [y for _, y in test_items])
    return items, tr


def cmd_train(args) -> int:
    cfg = _config(args)
    items, tr = _split(cfg)
    model, single = harness.train_model(cfg, "phal" if cfg.phal else "flat", items, tr)
    model.save(args.out)
    log.info("trained on %d items (%s)", len(tr), single)
    _dump({"pools": args.out, "mode": model.mode, "single_pass": single})
    return 0


def cmd_classify(args) -> int:
    model = harness.TrainedModel.load(args.pools)
    out = []
    for path in args.inputs:
        probe = model.encode(_read_input(path))
        trace = {} if args.trace else None
        label, score = model.classify(probe, trace)
        row = {"input": path, "label": label, "score": score}
        if trace:
            row["trace"] = trace
        out.append(row)
    _dump(out if len(out) != 1 else out[0])
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    trace = [] if args.trace else None
    report = harness.run_experiment(cfg, pools_out=args.pools_out, trace=trace)
    text = report.dumps()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.trace:
        Path(args.trace).write_text(json.dumps(trace, sort_keys=True, indent=1) + "\n")
    # timing differs between runs, so it never goes into the report itself
    sys.stderr.write(f"accuracy {report.accuracy:.2f}%  wall time {report.wall_time:.1f}s\n")
    return 0


def _load_vrd_pools(d: str) -> dict[str, GeneralizationPool]:
    p = Path(d)
    try:
        manifest = json.loads((p / "manifest.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"{p}/manifest.json: {exc}") from exc
    return {e["concept"]: GeneralizationPool.load(p / e["file"]) for e in manifest["pools"]}


def cmd_vrd(args) -> int:
    if args.vrd_cmd == "train":
        counter: dict = {}
        pools = vrd.train_predicates(read_detections(args.data), threshold=args.threshold,
                                     prune_cutoff=args.prune_cutoff, counter=counter)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        files = []
        for name in sorted(pools):
            fname = harness._safe(name) + ".json"
            pools[name].save(out / fname)
            files.append({"concept": name, "file": fname})
        (out / "manifest.json").write_text(
            json.dumps({"mode": "vrd", "pools": files}, sort_keys=True, indent=1) + "\n")
        _dump({"predicates": len(pools), "triples": sum(counter.values())})
        return 0
    pools = _load_vrd_pools(args.pools)
    recs = list(read_detections(args.data))
    if args.vrd_cmd == "predict":
        for rec in recs:
            preds = vrd.predict(rec, pools, args.mac_k)[:args.top]
            sys.stdout.write(json.dumps({"image_id": rec.image_id, "predictions": [
                {"subject": p.subject, "object": p.object, "predicate": p.predicate,
                 "score": p.score} for p in preds]}, sort_keys=True) + "\n")
        return 0
    metrics = vrd.evaluate(recs, pools, mac_k=args.mac_k)
    text = json.dumps(metrics, sort_keys=True, indent=1) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_inspect(args) -> int:
    sys.stdout.write(harness.inspect_pool(args.pool))
    if args.svg:
        pool = GeneralizationPool.load(args.pool)
        if not pool.generalizations:
            raise InvalidInput("pool has no generalization to render")
        g = max(pool.generalizations, key=lambda g: (g.n_examples, g.id))
        Path(args.svg).write_text(harness.render_generalization_svg(g))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="hps", description="Sketch and scene encoding with analogical learning.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("vectorize", help="bitmap to strokes")
    p.add_argument("image")
    p.add_argument("--svg")
    p.add_argument("--config")
    p.set_defaults(func=cmd_vectorize)

    p = sub.add_parser("encode", help="image, glyph JSONL or detection JSONL to cases")
    p.add_argument("input")
    p.add_argument("--config")
    p.add_argument("--levels", action="store_true", help="hierarchical level descriptions")
    p.add_argument("--glyphs", action="store_true", help="treat .jsonl input as vector glyphs")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("train", help="train pools from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--phal", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="classify inputs against trained pools")
    p.add_argument("--pools", required=True)
    p.add_argument("--trace", action="store_true")
    p.add_argument("inputs", nargs="+")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("eval", help="run an experiment and print its report")
    p.add_argument("--config", required=True)
    p.add_argument("--phal", action="store_true")
    p.add_argument("--trace", help="write per-item cascade traces to this file")
    p.add_argument("--out")
    p.add_argument("--pools-out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("vrd", help="predicate learning over detection files")
    vs = p.add_subparsers(dest="vrd_cmd", required=True, parser_class=_Parser)
    q = vs.add_parser("train")
    q.add_argument("--data", required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--threshold", type=float, default=0.8)
    q.add_argument("--prune-cutoff", type=float, default=0.2)
    for name in ("predict", "eval"):
        q = vs.add_parser(name)
        q.add_argument("--pools", required=True)
        q.add_argument("--data", required=True)
        q.add_argument("--mac-k", type=int, default=3)
        if name == "predict":
            q.add_argument("--top", type=int, default=100)
        else:
            q.add_argument("--out")
    p.set_defaults(func=cmd_vrd)

    p = sub.add_parser("inspect", help="list a pool's generalizations")
    p.add_argument("pool")
    p.add_argument("--svg")
    p.set_defaults(func=cmd_inspect)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except HPSError as exc:
        sys.stderr.write(f"hps: {exc}\n")
        return exc.exit_code
    except FileNotFoundError as exc:
        sys.stderr.write(f"hps: {exc}\n")
        return 2
    except BrokenPipeError:
        # the reader went away (e.g. piped into head); not an error
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0


if __name__ == "__main__":
    sys.exit(main())
