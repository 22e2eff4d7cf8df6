"""``docground`` command line.

Exit codes: 0 success, 1 bad input or failed validation of an input file,
2 usage error. Diagnostics go to stderr; data goes to files (or stdout when
no output path is given). Every command that writes files also writes
``<output>.manifest.json`` describing the run.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import random
import sys
import time
from importlib import metadata
from pathlib import Path
from typing import Any, Sequence

from . import raster
from .annotate import annotate_sample
from .bench import DEFAULT_IOU, evaluate, format_table, threshold_sweep
from .dataset import (
    ChartPage,
    CorpusError,
    ParseGranularity,
    ParseTask,
    PdfPage,
    PosterPage,
    Sample,
    build_text_index,
    dumps_item,
    emit_parsing_tasks,
    item_from_dict,
    load_corpus,
    pages_by_id,
    save_corpus,
)
from .geometry import quantize
from .markup import MarkupError, find_defects, parse, serialize
from .merge import Block, MergeConfig, merge
from .taxonomy import AnswerClass, DocType, classify_task
from .templates import load_templates
from .verify import derive_plain_qa, validate_sample

log = logging.getLogger("docground")

LOG_ENV = "DOCGROUND_LOG_LEVEL"


class InputError(Exception):
    """Bad input data; reported on stderr with exit code 1."""


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _timestamp() -> str:
    # SOURCE_DATE_EPOCH pins the manifest timestamp for reproducible builds
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = time.gmtime(int(epoch)) if epoch else time.gmtime()
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", t)


def write_manifest(out: Path, command: str, config: dict, inputs: Sequence[Path | None]) -> Path:
    target = out / "manifest.json" if out.is_dir() else out.with_name(out.name + ".manifest.json")
    manifest = {
        "command": command,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs if p is not None},
        "version": _version(),
        "timestamp": _timestamp(),
    }
    target.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return target


def _read_jsonl(path: Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as e:
                raise InputError(f"{path}:{lineno}: invalid JSON: {e.msg}") from None
            if not isinstance(obj, dict):
                raise InputError(f"{path}:{lineno}: record must be a JSON object")
            rows.append(obj)
    return rows


def _write_jsonl(path: Path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, separators=(",", ":")))
            fh.write("\n")


def _load_config(path: Path | None, allowed: set[str]) -> dict:
    if path is None:
        return {}
    data = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise InputError(f"{path}: config must be a flat JSON object")
    unknown = set(data) - allowed
    if unknown:
        raise InputError(f"{path}: unknown config keys {sorted(unknown)}")
    return data


def _pick(flag, config: dict, key: str, default):
    if flag is not None:
        return flag
    return config.get(key, default)


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _load_pages(path: Path | None) -> dict:
    if path is None:
        return {}
    return pages_by_id(load_corpus(path))


def _samples(path: Path) -> list[Sample]:
    items = load_corpus(path)
    bad = [type(i).__name__ for i in items if not isinstance(i, Sample)]
    if bad:
        raise InputError(f"{path}: expected only sample records, found {bad[0]}")
    return items  # type: ignore[return-value]


def _predictions(path: Path) -> dict[str, str]:
    out: dict[str, str] = {}
    for k, row in enumerate(_read_jsonl(path), 1):
        if not isinstance(row.get("id"), str) or not isinstance(row.get("output"), str):
            raise InputError(f"{path}: record {k}: needs string fields 'id' and 'output'")
        if row["id"] in out:
            log.warning("duplicate prediction id %s; keeping the first", row["id"])
            continue
        out[row["id"]] = row["output"]
    return out


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_extract_boxes(a: argparse.Namespace) -> int:
    config = {"tol": a.tol, "toggle": a.toggle, "errors": a.errors}
    if a.scene is not None:
        scene = raster.load_scene(a.scene)
        try:
            results = raster.extract_block_boxes(scene, tol=a.tol, toggle=a.toggle, errors=a.errors)
        except raster.InvisibleLayer as e:
            raise InputError(f"{a.scene}: {e}") from None
        rows = [
            {
                "layer_id": r.layer_id,
                "pixel_box": list(r.pixel_box.as_tuple()) if r.pixel_box else None,
                "bbox": list(r.bbox.as_tuple()) if r.bbox else None,
                "quantized": list(quantize(r.bbox).as_tuple()) if r.bbox else None,
            }
            for r in results
        ]
        inputs = [a.scene]
    else:
        if a.base is None or a.variant is None:
            raise InputError("extract-boxes needs --scene, or both --base and --variant")
        base, variant = raster.load_png(a.base), raster.load_png(a.variant)
        pb = raster.diff_bbox(base, variant, a.tol)
        bbox = pb.to_bbox(base.width, base.height) if pb else None
        rows = [
            {
                "layer_id": None,
                "pixel_box": list(pb.as_tuple()) if pb else None,
                "bbox": list(bbox.as_tuple()) if bbox else None,
                "quantized": list(quantize(bbox).as_tuple()) if bbox else None,
            }
        ]
        inputs = [a.base, a.variant]
    _write_jsonl(a.out, rows)
    write_manifest(a.out, "extract-boxes", config, inputs)
    return 0


def _blocks(path: Path) -> list[Block]:
    items = load_corpus(path)
    for i in items:
        if not isinstance(i, Block):
            raise InputError(f"{path}: expected only block records, found {type(i).__name__}")
    return items  # type: ignore[return-value]


def cmd_merge_layout(a: argparse.Namespace) -> int:
    keys = {"dup_iou", "dup_text_sim", "trunc_iou", "eps", "col_overlap"}
    file_cfg = _load_config(a.config, keys)
    cfg = MergeConfig.from_dict({k: _pick(getattr(a, k), file_cfg, k, getattr(MergeConfig(), k)) for k in keys})
    ordered = _blocks(a.ordered)
    unordered = _blocks(a.unordered)
    merged = merge(ordered, unordered, cfg)
    save_corpus(merged, a.out)
    write_manifest(a.out, "merge-layout", cfg.to_dict(), [a.ordered, a.unordered, a.config])
    log.info("merged %d ordered + %d unordered -> %d blocks", len(ordered), len(unordered), len(merged))
    return 0


def cmd_gen_parsing_tasks(a: argparse.Namespace) -> int:
    templates = load_templates(a.templates, section=a.task)
    pages = [i for i in load_corpus(a.pages) if isinstance(i, (PosterPage, ChartPage, PdfPage))]
    records = []
    for page in pages:
        for g in a.granularity:
            records.extend(emit_parsing_tasks(page, g, templates, a.task))
    save_corpus(records, a.out)
    config = {"granularity": [g.value for g in a.granularity], "task": a.task}
    write_manifest(a.out, "gen-parsing-tasks", config, [a.pages, a.templates])
    log.info("%d parsing records from %d pages", len(records), len(pages))
    return 0


def cmd_post_annotate(a: argparse.Namespace) -> int:
    templates = load_templates(a.templates)
    pages = _load_pages(a.pages)
    indexes: dict[str, Any] = {}
    samples = []
    totals = {"samples": 0, "located": 0, "degraded": 0, "multiline": 0, "skipped": 0}
    for k, row in enumerate(_read_jsonl(a.generated), 1):
        for key in ("id", "page_id", "question", "answer", "answer_class"):
            if not isinstance(row.get(key), str):
                raise InputError(f"{a.generated}: record {k}: missing string field {key!r}")
        page = pages.get(row["page_id"])
        if page is None:
            raise InputError(f"{a.generated}: record {k}: unknown page {row['page_id']!r}")
        if page.id not in indexes:
            indexes[page.id] = build_text_index(page)
        try:
            out = annotate_sample(
                row["id"],
                page,
                row["question"],
                row["answer"],
                row["answer_class"],
                templates=templates,
                seed=a.seed,
                index=indexes[page.id],
            )
        except MarkupError as e:
            log.warning("record %d (%s): %s; skipped", k, row["id"], e)
            totals["skipped"] += 1
            continue
        except ValueError as e:
            raise InputError(f"{a.generated}: record {k}: {e}") from None
        samples.append(out.sample)
        totals["samples"] += 1
        for part in (out.question, out.answer):
            totals["located"] += part.located
            totals["degraded"] += part.degraded
            totals["multiline"] += part.multiline
    save_corpus(samples, a.out)
    stats_path = a.stats or a.out.with_name(a.out.name + ".stats.json")
    stats_path.write_text(json.dumps(totals, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    write_manifest(a.out, "post-annotate", {"seed": a.seed}, [a.generated, a.pages, a.templates])
    log.info("post-annotate: %s", totals)
    return 0


def cmd_verify(a: argparse.Namespace) -> int:
    pages = _load_pages(a.pages)
    indexes: dict[str, Any] = {}
    accepted, rejected, plain = [], [], []
    for k, row in enumerate(_read_jsonl(a.samples), 1):
        for key in ("id", "doc_type", "question", "answer"):
            if not isinstance(row.get(key), str):
                raise InputError(f"{a.samples}: record {k}: missing string field {key!r}")
        try:
            doc_type = DocType(row["doc_type"])
        except ValueError:
            raise InputError(f"{a.samples}: record {k}: unknown doc_type {row['doc_type']!r}") from None
        page = pages.get(row.get("page_id"))
        index = None
        if page is not None:
            index = indexes.setdefault(page.id, build_text_index(page))
        verdict = validate_sample(row["question"], row["answer"], doc_type, index, strict_pdf=a.strict_pdf)
        if verdict.accepted:
            accepted.append(row)
            if a.derive_plain and row.get("task") == "Ga":
                try:
                    sample = load_corpus_record(row)
                except CorpusError as e:
                    raise InputError(f"{a.samples}: record {k}: {e}") from None
                plain.append(json.loads(dumps_item(derive_plain_qa(sample))))
        else:
            rejected.append({"id": row["id"], "verdict": verdict.to_dict(), "record": row})
    a.out_dir.mkdir(parents=True, exist_ok=True)
    _write_jsonl(a.out_dir / "accepted.jsonl", accepted)
    _write_jsonl(a.out_dir / "rejected.jsonl", rejected)
    if a.derive_plain:
        _write_jsonl(a.out_dir / "plain_qa.jsonl", plain)
    config = {"strict_pdf": a.strict_pdf, "derive_plain": a.derive_plain}
    write_manifest(a.out_dir, "verify", config, [a.samples, a.pages])
    log.info("verify: %d accepted, %d rejected", len(accepted), len(rejected))
    return 0


def load_corpus_record(row: dict) -> Sample:
    item = item_from_dict({"kind": "sample", **row})
    assert isinstance(item, Sample)
    return item


def cmd_classify(a: argparse.Namespace) -> int:
    out = []
    for k, row in enumerate(_read_jsonl(a.samples), 1):
        q = row.get("question")
        if not isinstance(q, str):
            raise InputError(f"{a.samples}: record {k}: missing string field 'question'")
        try:
            cls = AnswerClass(row.get("answer_class"))
        except ValueError:
            raise InputError(f"{a.samples}: record {k}: bad answer_class {row.get('answer_class')!r}") from None
        defects = find_defects(q, strict=False, allow_bare=True)
        if defects:
            raise InputError(f"{a.samples}: record {k}: question has markup defects {[d.to_dict() for d in defects]}")
        out.append({**row, "task": classify_task(parse(q, allow_bare=True), cls).value})
    _write_jsonl(a.out, out)
    write_manifest(a.out, "classify", {}, [a.samples])
    return 0


def cmd_evaluate(a: argparse.Namespace) -> int:
    file_cfg = _load_config(a.config, {"iou", "sweep"})
    iou = float(_pick(a.iou, file_cfg, "iou", DEFAULT_IOU))
    sweep = _pick(a.sweep, file_cfg, "sweep", None)
    gts = _samples(a.gt)
    preds = _predictions(a.pred)
    report = evaluate(preds, gts, iou)
    if sweep:
        report.sweep = threshold_sweep(preds, gts, [float(t) for t in sweep])
    if report.unknown_ids:
        log.warning("%d prediction ids not in ground truth", len(report.unknown_ids))
    table = format_table(report)
    if a.out is not None:
        a.out.write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
        a.out.with_suffix(".txt").write_text(table, encoding="utf-8")
        write_manifest(a.out, "evaluate", {"iou": iou, "sweep": sweep}, [a.pred, a.gt, a.config])
    sys.stdout.write(table)
    return 0


def cmd_sweep(a: argparse.Namespace) -> int:
    gts = _samples(a.gt)
    preds = _predictions(a.pred)
    curve = threshold_sweep(preds, gts, a.thresholds, tasks=a.tasks)
    rows = [{"iou": t, "f1_all": f} for t, f in curve]
    if a.out is not None:
        a.out.write_text(json.dumps(rows, indent=2) + "\n", encoding="utf-8")
        write_manifest(a.out, "sweep", {"thresholds": a.thresholds, "tasks": a.tasks}, [a.pred, a.gt])
    for r in rows:
        sys.stdout.write(f"{r['iou']:g}\t{r['f1_all']:.6f}\n")
    return 0


def cmd_render_synthetic(a: argparse.Namespace) -> int:
    from . import synth

    rng = random.Random(a.seed)
    out: Path = a.out_dir
    out.mkdir(parents=True, exist_ok=True)
    if a.kind == "scenes":
        extents = []
        for k in range(a.n):
            scene, ext = synth.random_scene(rng)
            name = f"scene{k:04d}"
            (out / f"{name}.json").write_text(json.dumps(raster.scene_to_dict(scene), indent=1) + "\n", encoding="utf-8")
            raster.save_png(raster.render_scene(scene), out / f"{name}.png")
            extents.append({"scene": name, "extents": {i: list(p.as_tuple()) for i, p in ext.items()}})
        _write_jsonl(out / "extents.jsonl", extents)
    elif a.kind == "bench":
        bench = synth.make_bench(a.seed)
        save_corpus(bench, out / "bench.jsonl")
        _write_jsonl(out / "gt_as_pred.jsonl", ({"id": s.id, "output": serialize(s.answer)} for s in bench))
    elif a.kind == "layouts":
        for k in range(a.n):
            page = synth.random_layout(rng, k)
            save_corpus(page.ordered, out / f"page{k:04d}.ordered.jsonl")
            save_corpus(page.unordered, out / f"page{k:04d}.unordered.jsonl")
    else:
        pages, generated = [], []
        for k in range(a.n):
            page = synth.random_pdf_page(rng, f"pdf{k:04d}")
            pages.append(page)
            generated.append(
                {
                    "id": f"gen{k:04d}",
                    "page_id": page.id,
                    "question": "What does the page say about " + rng.choice(synth.WORDS) + "?",
                    "answer": synth.random_generated_text(rng, page),
                    "answer_class": "GO",
                }
            )
        save_corpus(pages, out / "pages.jsonl")
        _write_jsonl(out / "generated.jsonl", generated)
    write_manifest(out, "render-synthetic", {"kind": a.kind, "n": a.n, "seed": a.seed}, [])
    return 0


def cmd_report(a: argparse.Namespace) -> int:
    data = json.loads(a.report.read_text(encoding="utf-8"))
    if not isinstance(data, dict) or "rows" not in data or "config" not in data:
        raise InputError(f"{a.report}: not an evaluation report")
    sys.stdout.write(format_table(data))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _granularities(text: str) -> list[ParseGranularity]:
    try:
        return [ParseGranularity(t.strip()) for t in text.split(",") if t.strip()]
    except ValueError:
        allowed = ", ".join(g.value for g in ParseGranularity)
        raise argparse.ArgumentTypeError(f"granularity must be among: {allowed}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="docground", description="Grounded document data and bench tooling.")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("extract-boxes", help="boxes from re-rendering a scene or diffing two PNGs")
    s.add_argument("--scene", type=Path)
    s.add_argument("--base", type=Path)
    s.add_argument("--variant", type=Path)
    s.add_argument("--tol", type=int, default=raster.DEFAULT_TOL)
    s.add_argument("--toggle", choices=("opacity", "color"), default="opacity")
    s.add_argument("--errors", choices=("raise", "report"), default="raise")
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_extract_boxes)

    s = sub.add_parser("merge-layout", help="merge ordered and unordered block lists")
    s.add_argument("--ordered", type=Path, required=True)
    s.add_argument("--unordered", type=Path, required=True)
    s.add_argument("--config", type=Path)
    for key in ("dup_iou", "dup_text_sim", "trunc_iou", "eps", "col_overlap"):
        s.add_argument("--" + key.replace("_", "-"), dest=key, type=float)
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_merge_layout)

    s = sub.add_parser("gen-parsing-tasks", help="emit parsing instruction/target records")
    s.add_argument("--pages", type=Path, required=True)
    s.add_argument("--granularity", type=_granularities, required=True)
    s.add_argument("--task", choices=[t.value for t in ParseTask if t is not ParseTask.FULL_PAGE], default="localization")
    s.add_argument("--templates", type=Path)
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_gen_parsing_tasks)

    s = sub.add_parser("post-annotate", help="ground generated Q&A text against page indexes")
    s.add_argument("--generated", type=Path, required=True)
    s.add_argument("--pages", type=Path, required=True)
    s.add_argument("--templates", type=Path)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--stats", type=Path)
    s.set_defaults(func=cmd_post_annotate)

    s = sub.add_parser("verify", help="split samples into accepted and rejected")
    s.add_argument("--samples", type=Path, required=True)
    s.add_argument("--pages", type=Path)
    s.add_argument("--strict-pdf", action="store_true")
    s.add_argument("--derive-plain", action="store_true", help="also write plain-answer twins of accepted Ga samples")
    s.add_argument("--out-dir", type=Path, default=Path("."))
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("classify", help="label samples with their task")
    s.add_argument("--samples", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("evaluate", help="score predictions against the bench")
    s.add_argument("--pred", type=Path, required=True)
    s.add_argument("--gt", type=Path, required=True)
    s.add_argument("--iou", type=float)
    s.add_argument("--sweep", type=_floats)
    s.add_argument("--config", type=Path)
    s.add_argument("--out", type=Path)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sweep", help="F1_all across IoU thresholds")
    s.add_argument("--pred", type=Path, required=True)
    s.add_argument("--gt", type=Path, required=True)
    s.add_argument("--thresholds", type=_floats, default=[0.1, 0.3, 0.5, 0.7, 0.9])
    s.add_argument("--tasks", type=lambda t: [x for x in t.split(",") if x])
    s.add_argument("--out", type=Path)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("render-synthetic", help="write seeded synthetic data")
    s.add_argument("--kind", choices=("scenes", "bench", "layouts", "pdf"), required=True)
    s.add_argument("--n", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", type=Path, required=True)
    s.set_defaults(func=cmd_render_synthetic)

    s = sub.add_parser("report", help="print the table of a saved evaluation report")
    s.add_argument("--report", type=Path, required=True)
    s.set_defaults(func=cmd_report)
    return p


def run(argv: Sequence[str] | None = None) -> int:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 2
    try:
        return args.func(args)
    except (InputError, CorpusError, MarkupError, OSError, ValueError, KeyError) as e:
        print(f"docground {args.command}: error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
