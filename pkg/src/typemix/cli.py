"""Command-line interface: ``infer``, ``train`` and ``bench``.

Exit codes: 0 success, 1 bad input (unreadable file, bad option, unknown
label), 2 a column failed under ``--strict``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from . import bench as _bench
from .inference import (DEFAULT_AMBIGUITY, DEFAULT_PI, DEFAULT_THRESHOLD, Column,
                        InferenceError, TypeSystem, infer_table)
from .machines import CatalogError, build_catalog, dumps_catalog, load_catalog
from .pfsm import PfsmError

logger = logging.getLogger("typemix")

REPORT_FORMAT = "typemix-report/1"
MARKERS = {"type": "OK", "missing": "MISSING", "anomaly": "ANOMALY"}

_PROB = {"type": "number", "minimum": 0, "maximum": 1}
REPORT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["format", "files"],
    "properties": {
        "format": {"const": REPORT_FORMAT},
        "files": {"type": "array", "items": {
            "type": "object",
            "required": ["path", "columns", "errors"],
            "properties": {
                "path": {"type": "string"},
                "columns": {"type": "array", "items": {
                    "type": "object",
                    "required": ["index", "name", "inferred_type", "type_posterior",
                                 "ambiguous", "row_labels", "non_type_rows", "diagnostics"],
                    "properties": {
                        "index": {"type": "integer", "minimum": 0},
                        "name": {"type": "string"},
                        "inferred_type": {"type": "string"},
                        "type_posterior": {"type": "object", "additionalProperties": _PROB},
                        "ambiguous": {"type": "boolean"},
                        "row_labels": {"type": "array", "items": {
                            "enum": ["type", "missing", "anomaly"]}},
                        "non_type_rows": {"type": "array", "items": {
                            "type": "object",
                            "required": ["row", "value", "label", "posterior"],
                            "properties": {
                                "row": {"type": "integer", "minimum": 0},
                                "value": {"type": "string"},
                                "label": {"enum": ["missing", "anomaly"]},
                                "posterior": {
                                    "type": "object",
                                    "required": ["type", "missing", "anomaly"],
                                    "additionalProperties": _PROB,
                                },
                            },
                        }},
                        "diagnostics": {"type": "array", "items": {"type": "string"}},
                    },
                }},
                "errors": {"type": "array", "items": {
                    "type": "object",
                    "required": ["index", "name", "message"],
                    "properties": {
                        "index": {"type": "integer"},
                        "name": {"type": "string"},
                        "message": {"type": "string"},
                    },
                }},
            },
        }},
    },
}


class InputError(Exception):
    pass


@dataclass
class RunConfig:
    inputs: list
    catalog: Optional[str] = None
    pi: tuple = DEFAULT_PI
    threshold: float = DEFAULT_THRESHOLD
    ambiguity: float = DEFAULT_AMBIGUITY
    strict: bool = False
    output_format: str = "human"
    header: bool = True
    all_rows: bool = False
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise InputError("threshold must lie in (0, 1)")
        if not 0.0 < self.ambiguity <= 1.0:
            raise InputError("ambiguity threshold must lie in (0, 1]")
        if self.output_format not in ("human", "json"):
            raise InputError(f"unknown format {self.output_format!r}")


def read_csv(path, header: bool = True, strict: bool = False):
    """Read a CSV file into ``(header, columns)``.

    Bytes are decoded as UTF-8 with invalid sequences replaced; cells are kept
    exactly as read.  Short rows are padded with empty strings unless
    ``strict``, in which case a ragged row is an error.
    """
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None
    text = data.decode("utf-8", errors="replace")
    if text.startswith("\ufeff"):
        text = text[1:]
    try:
        rows = list(csv.reader(io.StringIO(text, newline="")))
    except csv.Error as exc:
        raise InputError(f"{path}: malformed CSV: {exc}") from None
    if not rows:
        raise InputError(f"{path}: no rows")
    width = max(len(r) for r in rows)
    if strict:
        for i, r in enumerate(rows):
            if len(r) != width:
                raise InputError(f"{path}: row {i + 1} has {len(r)} fields, expected {width}")
    rows = [r + [""] * (width - len(r)) for r in rows]
    if header:
        names, body = rows[0], rows[1:]
    else:
        names, body = [f"column_{i}" for i in range(width)], rows
    columns = [[r[i] for r in body] for i in range(width)]
    return names, columns


def _load_system(catalog_path, pi=DEFAULT_PI):
    try:
        catalog = load_catalog(catalog_path) if catalog_path else build_catalog()
        return TypeSystem(catalog, pi)
    except OSError as exc:
        raise InputError(f"cannot read catalog {catalog_path}: {exc.strerror or exc}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"bad catalog or pi: {exc}") from None


def _parse_pi(text):
    try:
        vals = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise InputError(f"bad --pi {text!r}") from None
    if len(vals) != 3:
        raise InputError("--pi needs three comma-separated numbers")
    return vals


def build_report(config: RunConfig, system: TypeSystem):
    """Annotate every input file.  Returns ``(report dict, any column failed)``."""
    files, failed = [], False
    for path in config.inputs:
        names, cols = read_csv(path, header=config.header, strict=config.strict)
        columns = [Column(c, name=n) for n, c in zip(names, cols)]
        try:
            result = infer_table(columns, system, config.threshold, config.ambiguity,
                                 strict=config.strict)
        except InferenceError as exc:
            raise _StrictFailure(f"{path}: {exc}") from None
        entries = []
        for i, ann in enumerate(result.annotations):
            if ann is not None:
                entries.append({"index": i, **ann.to_dict()})
        errors = [{"index": i, "name": n, "message": m} for i, n, m in result.errors]
        failed |= bool(errors)
        files.append({"path": str(path), "columns": entries, "errors": errors,
                      "_annotations": result.annotations})
    return {"format": REPORT_FORMAT, "files": files}, failed


class _StrictFailure(Exception):
    pass


def _public(report):
    return {"format": report["format"],
            "files": [{k: v for k, v in f.items() if not k.startswith("_")}
                      for f in report["files"]]}


def render_json(report) -> str:
    return json.dumps(_public(report), indent=2, ensure_ascii=False) + "\n"


def render_human(report, all_rows=False) -> str:
    out = []
    for f in report["files"]:
        out.append(f"== {f['path']}")
        for ann, entry in zip((a for a in f["_annotations"] if a is not None), f["columns"]):
            p = ann.type_posterior.max()
            flag = "  [ambiguous]" if ann.ambiguous else ""
            out.append(f"-- column {entry['index']} {ann.name!r}: {ann.inferred_type} "
                       f"(p={p:.3f}){flag}")
            if ann.ambiguous:
                ranked = sorted(zip(ann.type_names, ann.type_posterior), key=lambda x: -x[1])
                out.append("   candidates: " + ", ".join(f"{n} {q:.3f}" for n, q in ranked[:3]))
            rows = range(len(ann.row_labels)) if all_rows else ann.non_type_rows()
            for i in rows:
                value = ann.unique_values[ann._inverse[i]]
                out.append(f"   {MARKERS[ann.row_labels[i]]:<8} row {i}: {value!r}")
            for d in ann.diagnostics:
                out.append(f"   note: {d}")
        for e in f["errors"]:
            out.append(f"-- column {e['index']} {e['name']!r}: error: {e['message']}")
    return "\n".join(out) + "\n"


def cmd_infer(config: RunConfig, stdout=None) -> int:
    stdout = stdout or sys.stdout
    system = _load_system(config.catalog, config.pi)
    try:
        report, failed = build_report(config, system)
    except _StrictFailure as exc:
        logger.error("%s", exc)
        return 2
    text = render_json(report) if config.output_format == "json" else \
        render_human(report, config.all_rows)
    stdout.write(text)
    return 2 if (failed and config.strict) else 0


def cmd_train(args, stdout=None) -> int:
    from .training import TrainConfig, TrainingError, load_corpus, train
    stdout = stdout or sys.stdout
    system = _load_system(args.catalog, _parse_pi(args.pi))
    try:
        batch = load_corpus(args.corpus, args.labels,
                            read_table=lambda p: read_csv(p, header=True))
        cfg = TrainConfig(max_iters=args.iters, tolerance=args.tol, params=args.params)
        result = train(batch, system, cfg)
    except TrainingError as exc:
        raise InputError(str(exc)) from None
    text = dumps_catalog(result.system.catalog)
    Path(args.out).write_text(text, encoding="utf-8")
    for i, f in enumerate(result.trace):
        stdout.write(f"iter {i:4d}  objective {f:.10g}\n")
    stdout.write(f"{result.message}; wrote {args.out}\n")
    return 0


def cmd_bench(args, stdout=None) -> int:
    stdout = stdout or sys.stdout
    backends = ("numba", "numpy") if args.backend == "both" else (args.backend,)
    grid = [int(g) for g in args.grid]
    if not grid:
        stdout.write(_bench.format_table([], {}) + "\n")
        return 0
    rows, fits = _bench.run(grid, args.length, backends, args.repeats, seed=args.seed)
    stdout.write(_bench.format_table(rows, fits) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="typemix",
                                     description="Probabilistic column-type inference for CSV data.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("infer", help="infer column types and flag missing/anomalous cells")
    p.add_argument("files", nargs="+")
    p.add_argument("--catalog", help="catalog or manifest JSON (default: shipped machines)")
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD,
                   help="non-type probability at which a cell is flagged")
    p.add_argument("--ambiguity", type=float, default=DEFAULT_AMBIGUITY,
                   help="column posterior below which the type is reported ambiguous")
    p.add_argument("--pi", default=",".join(map(str, DEFAULT_PI)),
                   help="type,missing,anomaly row weights")
    p.add_argument("--format", choices=("human", "json"), default="human")
    p.add_argument("--strict", action="store_true",
                   help="fail on ragged rows and on any column that cannot be scored")
    p.add_argument("--no-header", action="store_true")
    p.add_argument("--all-rows", action="store_true", help="list every row, not only flagged ones")

    p = sub.add_parser("train", help="fit machine parameters on a labelled corpus")
    p.add_argument("corpus", help="directory of CSV files")
    p.add_argument("labels", help="CSV with header file,column,type")
    p.add_argument("--catalog")
    p.add_argument("--pi", default=",".join(map(str, DEFAULT_PI)))
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--params", choices=("transitions", "all"), default="transitions")
    p.add_argument("--out", default="trained_catalog.json")

    p = sub.add_parser("bench", help="time inference against the number of unique values")
    p.add_argument("--grid", nargs="*", default=list(_bench.DEFAULT_GRID), type=int)
    p.add_argument("--length", type=int, default=_bench.DEFAULT_LENGTH)
    p.add_argument("--backend", choices=("numba", "numpy", "both"), default="numba")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv: Sequence[str] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        if args.command == "infer":
            config = RunConfig(inputs=args.files, catalog=args.catalog, pi=_parse_pi(args.pi),
                               threshold=args.threshold, ambiguity=args.ambiguity,
                               strict=args.strict, output_format=args.format,
                               header=not args.no_header, all_rows=args.all_rows)
            return cmd_infer(config)
        if args.command == "train":
            return cmd_train(args)
        return cmd_bench(args)
    except (InputError, CatalogError, PfsmError) as exc:
        print(f"typemix: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
