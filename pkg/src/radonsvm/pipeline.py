"""Training and retrieval stages over manifest-described corpora."""

from __future__ import annotations

import csv
import io
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .barcode import RadonBarcode, generate_barcode
from .evaluation import (AxisAlphabets, IrmaCode, IrmaCodeError, ReportRow, RetrievalReport,
                         compute_alphabets, irma_error)
from .imaging import ImageDecodeError, RadonConfig, extract_features, load_image
from .index import BarcodeIndex, IndexedImage, RankedResult, build_index, knn_direct, knn_within_class
from .svm import MulticlassSvm, SvmHyperparams, predict_class, train_multiclass

log = logging.getLogger(__name__)

MANIFEST_HEADER = ("path", "class", "irma_code")


class DataError(Exception):
    """Bad corpus input; the CLI maps this to exit code 2."""


class ConfigMismatch(DataError):
    pass


@dataclass(frozen=True)
class ManifestRow:
    path: str
    class_label: str
    irma_code: str | None
    source: Path

    @property
    def file(self) -> Path:
        p = Path(self.path)
        return p if p.is_absolute() else self.source.parent / p


@dataclass
class Manifest:
    rows: list[ManifestRow]
    skipped: int = 0
    unlabeled: list[ManifestRow] = field(default_factory=list)

    @property
    def classes(self) -> list[str]:
        return sorted({r.class_label for r in self.rows})


@dataclass(frozen=True)
class RunConfig:
    side: int = 32
    projections: int = 16
    c: float = 16.0
    gamma: float = 0.0359
    k: int = 5
    workers: int = 1

    @property
    def radon(self) -> RadonConfig:
        return RadonConfig(self.projections, self.side)

    @property
    def hyper(self) -> SvmHyperparams:
        return SvmHyperparams(c=self.c, gamma=self.gamma)


def read_manifest(path) -> Manifest:
    """Parse ``path,class,irma_code``; rows with an empty class are set aside."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    reader = csv.DictReader(text.splitlines())
    if reader.fieldnames is None or not {"path", "class"} <= set(reader.fieldnames):
        raise DataError(f"{path}: manifest header must be {','.join(MANIFEST_HEADER)}")
    manifest = Manifest(rows=[])
    problems = []
    seen = set()
    for lineno, rec in enumerate(reader, start=2):
        img = (rec.get("path") or "").strip()
        label = (rec.get("class") or "").strip()
        raw_code = (rec.get("irma_code") or "").strip()
        if not img:
            problems.append(f"{path}:{lineno}: empty path")
            continue
        if img in seen:
            problems.append(f"{path}:{lineno}: duplicate path {img}")
            continue
        seen.add(img)
        code = None
        if raw_code:
            try:
                code = IrmaCode.parse(raw_code).characters
            except IrmaCodeError as exc:
                problems.append(f"{path}:{lineno}: {exc}")
                continue
        row = ManifestRow(img, label, code, path)
        if not row.file.is_file():
            problems.append(f"{path}:{lineno}: image not found: {row.file}")
            continue
        if not label:
            manifest.skipped += 1
            manifest.unlabeled.append(row)
            continue
        manifest.rows.append(row)
    if problems:
        raise DataError("manifest errors:\n  " + "\n  ".join(problems))
    return manifest


def _features_for(task):
    file, cfg = task
    try:
        feats = extract_features(load_image(file), cfg)
    except (ImageDecodeError, OSError) as exc:
        return None, None, f"{file}: {exc}"
    return feats.flatten(), generate_barcode(feats).bits, None


def compute_features(rows, cfg: RadonConfig, workers: int = 1):
    """Flattened normalized features and barcodes for each row, in row order."""
    tasks = [(row.file, cfg) for row in rows]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_features_for, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        results = [_features_for(t) for t in tasks]
    errors = [err for _, _, err in results if err]
    if errors:
        raise DataError("undecodable images:\n  " + "\n  ".join(errors))
    if not results:
        return np.zeros((0, cfg.n_bits)), []
    features = np.vstack([f for f, _, _ in results])
    barcodes = [RadonBarcode(cfg, bits) for _, bits, _ in results]
    return features, barcodes


@dataclass
class TrainResult:
    model: MulticlassSvm
    index: BarcodeIndex
    n_images: int
    n_classes: int
    skipped: int
    seconds: float


def train(manifest: Manifest, run: RunConfig) -> TrainResult:
    start = time.perf_counter()
    if len(manifest.classes) < 2:
        raise DataError(f"training needs at least 2 labeled classes, manifest has {len(manifest.classes)}")
    cfg = run.radon
    features, barcodes = compute_features(manifest.rows, cfg, run.workers)
    records = [IndexedImage(row.path, row.class_label, bc, row.irma_code)
               for row, bc in zip(manifest.rows, barcodes)]
    index = build_index(records, cfg)
    model = train_multiclass(features, [r.class_label for r in manifest.rows], run.hyper,
                             workers=run.workers, radon=cfg)
    return TrainResult(model, index, len(records), len(manifest.classes), manifest.skipped,
                       time.perf_counter() - start)


def check_artifacts(model: MulticlassSvm, index: BarcodeIndex) -> RadonConfig:
    if model.radon != index.config:
        raise ConfigMismatch(f"model was trained with {model.radon} but index holds {index.config}")
    return index.config


def retrieve(model: MulticlassSvm, index: BarcodeIndex, features: np.ndarray, barcode: RadonBarcode,
             k: int, direct: bool = False) -> tuple[str, RankedResult]:
    """Predict the class, then rank barcodes inside it (or everywhere when ``direct``)."""
    predicted = predict_class(model, features)
    if direct:
        return predicted, knn_direct(index, barcode, k)
    return predicted, knn_within_class(index, predicted, barcode, k)


def retrieve_image(model, index, path, k: int, direct: bool = False) -> tuple[str, RankedResult]:
    cfg = check_artifacts(model, index)
    try:
        feats = extract_features(load_image(path), cfg)
    except (ImageDecodeError, OSError) as exc:
        raise DataError(f"{path}: {exc}") from exc
    return retrieve(model, index, feats.flatten(), generate_barcode(feats), k, direct)


def index_alphabets(index: BarcodeIndex) -> AxisAlphabets | None:
    codes = [rec.irma_code for rec in index.records() if rec.irma_code]
    return compute_alphabets(codes) if codes else None


@dataclass
class Evaluation:
    report: RetrievalReport
    ms_per_query: float


_worker_state: dict = {}


def _init_worker(model, index, k, direct):
    _worker_state.update(model=model, index=index, k=k, direct=direct)


def _query(task):
    features, bits = task
    st = _worker_state
    cfg = st["index"].config
    started = time.perf_counter()
    predicted, ranked = retrieve(st["model"], st["index"], features, RadonBarcode(cfg, bits), st["k"], st["direct"])
    return predicted, ranked, time.perf_counter() - started


def evaluate(model: MulticlassSvm, index: BarcodeIndex, rows, k: int = 1, direct: bool = False,
             workers: int = 1) -> Evaluation:
    """Classify and retrieve every query; score the top-1 hit against the query's code."""
    cfg = check_artifacts(model, index)
    rows = list(rows)
    if not rows:
        raise DataError("test manifest has no labeled rows")
    started = time.perf_counter()
    features, barcodes = compute_features(rows, cfg, workers)
    tasks = [(f, bc.bits) for f, bc in zip(features, barcodes)]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(model, index, k, direct)) as pool:
            answers = list(pool.map(_query, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        _init_worker(model, index, k, direct)
        answers = [_query(t) for t in tasks]
    elapsed = time.perf_counter() - started

    codes = {rec.id: rec.irma_code for rec in index.records()}
    alphabets = index_alphabets(index)
    report_rows = []
    for row, (predicted, ranked, _) in zip(rows, answers):
        top1 = ranked.entries[0][0] if ranked.entries else None
        top1_code = codes.get(top1) if top1 else None
        error = None
        if row.irma_code and alphabets is not None:
            if top1_code:
                error = irma_error(row.irma_code, top1_code, alphabets)
            else:
                # Nothing to compare against counts as a miss at every position.
                error = alphabets.max_error()
        report_rows.append(ReportRow(row.path, row.class_label, row.irma_code, predicted, top1, top1_code, error))
    return Evaluation(RetrievalReport(tuple(report_rows)), 1000.0 * elapsed / len(rows))


@dataclass
class BenchmarkRow:
    side: int
    projections: int
    accuracy: float | None = None
    gated_total_error: float | None = None
    direct_total_error: float | None = None
    ms_per_query: float | None = None
    error: str = ""


BENCHMARK_HEADER = ("size", "projections", "accuracy", "gated_total_error", "direct_total_error",
                    "ms_per_query", "error")


def benchmark(train_manifest: Manifest, test_manifest: Manifest, grid, run: RunConfig, k: int = 1):
    """Re-train and re-evaluate for every (side, projections) cell; failures stay in their row."""
    results = []
    for side, projections in grid:
        row = BenchmarkRow(side, projections)
        try:
            cell = replace(run, side=side, projections=projections)
            trained = train(train_manifest, cell)
            gated = evaluate(trained.model, trained.index, test_manifest.rows, k, False, run.workers)
            direct = evaluate(trained.model, trained.index, test_manifest.rows, k, True, run.workers)
            row.accuracy = gated.report.accuracy
            row.gated_total_error = gated.report.total_error
            row.direct_total_error = direct.report.total_error
            row.ms_per_query = gated.ms_per_query
        except Exception as exc:  # noqa: BLE001 - recorded per cell, run continues
            log.warning("benchmark cell %dx%d failed: %s", side, projections, exc)
            row.error = f"{type(exc).__name__}: {exc}".replace("\n", " ")
        results.append(row)
    return results


def benchmark_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCHMARK_HEADER)
    for r in rows:
        w.writerow([r.side, r.projections] + ["" if v is None else repr(v) for v in
                   (r.accuracy, r.gated_total_error, r.direct_total_error, r.ms_per_query)] + [r.error])
    return buf.getvalue()
