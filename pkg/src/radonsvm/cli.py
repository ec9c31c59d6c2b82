"""Command-line entry point: ``radonsvm {train,retrieve,evaluate,barcode,benchmark}``.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import pipeline
from .barcode import generate_barcode
from .imaging import ImageDecodeError, RadonConfig, extract_features, load_image
from .index import IndexBuildError, IndexFormatError, load_index, save_index
from .svm import DEFAULT_C, DEFAULT_GAMMA, ModelFormatError, TrainingError, load_model, save_model

EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_grid(text: str) -> list[tuple[int, int]]:
    """``16x8,32x16`` or ``16,32,64:8,16,32`` (sizes x projections)."""
    text = text.strip()
    if ":" in text:
        sizes, projections = text.split(":", 1)
        return [(int(s), int(p)) for s in sizes.split(",") for p in projections.split(",")]
    cells = []
    for cell in text.split(","):
        side, _, proj = cell.lower().partition("x")
        cells.append((int(side), int(proj)))
    return cells


def _run_config(args) -> pipeline.RunConfig:
    return pipeline.RunConfig(side=args.size, projections=args.projections, c=args.c, gamma=args.gamma,
                              k=args.k, workers=args.workers)


def _load_artifacts(args):
    model = load_model(args.model)
    index = load_index(args.index)
    if model.radon != index.config:
        raise pipeline.ConfigMismatch(
            f"model config (projections={getattr(model.radon, 'projections', None)}, "
            f"size={getattr(model.radon, 'side', None)}) does not match index config "
            f"(projections={index.config.projections}, size={index.config.side})")
    return model, index


def cmd_train(args) -> int:
    manifest = pipeline.read_manifest(args.manifest)
    result = pipeline.train(manifest, _run_config(args))
    save_model(result.model, args.model)
    save_index(result.index, args.index)
    print(f"classes: {result.n_classes}")
    print(f"images: {result.n_images}")
    print(f"skipped (no label): {result.skipped}")
    print(f"machines: {len(result.model.machines)}")
    print(f"wall time: {result.seconds:.2f} s")
    unconverged = sum(not m.converged for m in result.model.machines)
    if unconverged:
        print(f"warning: {unconverged} pairwise machines hit the SMO iteration limit", file=sys.stderr)
    return 0


def cmd_retrieve(args) -> int:
    model, index = _load_artifacts(args)
    started = time.perf_counter()
    predicted, ranked = pipeline.retrieve_image(model, index, args.query, args.k, args.direct)
    elapsed = 1000.0 * (time.perf_counter() - started)
    print(f"predicted class: {predicted}")
    print("search: direct (all classes)" if args.direct else f"search: within class {predicted}")
    for rank, (rid, label, dist) in enumerate(ranked.entries, start=1):
        print(f"{rank}\t{rid}\t{label}\t{dist}")
    print(f"time: {elapsed:.2f} ms")
    return 0


def cmd_evaluate(args) -> int:
    model, index = _load_artifacts(args)
    manifest = pipeline.read_manifest(args.manifest)
    result = pipeline.evaluate(model, index, manifest.rows, args.k, args.direct, args.workers)
    text = result.report.to_csv()
    if args.report:
        Path(args.report).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    # Summary goes beside the CSV, never into it.
    out = sys.stdout if args.report else sys.stderr
    print(f"queries: {len(result.report.rows)}", file=out)
    print(f"skipped (no label): {manifest.skipped}", file=out)
    print(f"accuracy: {result.report.accuracy:.2f}%", file=out)
    print(f"total error: {result.report.total_error:.2f}", file=out)
    print(f"mean latency: {result.ms_per_query:.2f} ms/query", file=out)
    return 0


def cmd_barcode(args) -> int:
    cfg = RadonConfig(args.projections, args.size)
    barcode = generate_barcode(extract_features(load_image(args.image), cfg))
    print(barcode.to_text())
    print(f"{barcode.n_bytes} bytes")
    return 0


def cmd_benchmark(args) -> int:
    if not args.grid:
        raise ValueError("--grid must list at least one cell")
    grid = parse_grid(args.grid)
    train_manifest = pipeline.read_manifest(args.manifest)
    test_manifest = pipeline.read_manifest(args.test_manifest)
    rows = pipeline.benchmark(train_manifest, test_manifest, grid, _run_config(args), args.k)
    text = pipeline.benchmark_csv(rows)
    if args.report:
        Path(args.report).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="radonsvm", description="Radon-barcode image retrieval gated by a multi-class SVM.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def radon_opts(p):
        p.add_argument("--size", type=int, default=32, help="normalized image side N (16, 32 or 64)")
        p.add_argument("--projections", type=int, default=16, help="number of projection angles")

    def svm_opts(p):
        p.add_argument("--c", type=float, default=DEFAULT_C, help="SVM penalty C")
        p.add_argument("--gamma", type=float, default=DEFAULT_GAMMA, help="RBF kernel gamma")

    p = sub.add_parser("train", help="build model and barcode index from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--index", required=True)
    radon_opts(p)
    svm_opts(p)
    p.add_argument("--k", type=int, default=5, help=argparse.SUPPRESS)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("retrieve", help="classify one image and list its nearest barcodes")
    p.add_argument("query")
    p.add_argument("--model", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--direct", action="store_true", help="search every class instead of the predicted one")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("evaluate", help="score a labeled test manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--report")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--direct", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("barcode", help="print the barcode of one image")
    p.add_argument("image")
    radon_opts(p)
    p.set_defaults(func=cmd_barcode)

    p = sub.add_parser("benchmark", help="re-train and evaluate over a (size, projections) grid")
    p.add_argument("--manifest", required=True, help="training manifest")
    p.add_argument("--test-manifest", required=True)
    p.add_argument("--grid", default="16,32,64:8,16,32")
    p.add_argument("--report")
    svm_opts(p)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_benchmark, size=32, projections=16)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    for name in ("k", "workers"):
        if getattr(args, name, 1) < 1:
            parser.error(f"--{name} must be at least 1")
    try:
        return args.func(args)
    except (pipeline.DataError, ImageDecodeError, ModelFormatError, IndexFormatError, IndexBuildError,
            TrainingError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        # ConfigurationError and bad flag values such as an unparsable --grid.
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

if __name__ == "__main__":
    sys.exit(main())
