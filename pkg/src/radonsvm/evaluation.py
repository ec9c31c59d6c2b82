"""IRMA hierarchical error score, classification accuracy and retrieval reports."""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass

CODE_POSITIONS = 13
WILDCARD = "*"
_VALID = re.compile(r"^[0-9A-Za-z*]{13}$")

REPORT_HEADER = ("query_id", "true_code", "predicted_class", "top1_id", "top1_code", "error")


class IrmaCodeError(ValueError):
    pass


@dataclass(frozen=True)
class IrmaCode:
    characters: str

    def __post_init__(self):
        if not _VALID.match(self.characters):
            raise IrmaCodeError(f"IRMA code must be {CODE_POSITIONS} alphanumeric or '*' characters "
                                f"(dashes removed), got {self.characters!r}")

    @classmethod
    def parse(cls, text: str) -> "IrmaCode":
        return cls(text.strip().replace("-", ""))

    def __str__(self):
        c = self.characters
        return f"{c[:4]}-{c[4:7]}-{c[7:10]}-{c[10:]}"


@dataclass(frozen=True)
class AxisAlphabets:
    counts: tuple[int, ...]

    def __post_init__(self):
        if len(self.counts) != CODE_POSITIONS or any(b < 1 for b in self.counts):
            raise ValueError(f"need {CODE_POSITIONS} positive alphabet sizes, got {self.counts}")

    def weights(self) -> list[float]:
        """Per-position penalty (1/b_i)(1/i), positions counted from 1."""
        return [1.0 / (b * i) for i, b in enumerate(self.counts, start=1)]

    def max_error(self) -> float:
        return sum(self.weights())


def compute_alphabets(corpus) -> AxisAlphabets:
    corpus = [c if isinstance(c, IrmaCode) else IrmaCode.parse(c) for c in corpus]
    if not corpus:
        raise ValueError("cannot derive alphabets from an empty code corpus")
    seen = [set() for _ in range(CODE_POSITIONS)]
    for code in corpus:
        for pos, ch in enumerate(code.characters):
            if ch != WILDCARD:
                seen[pos].add(ch)
    return AxisAlphabets(tuple(max(1, len(s)) for s in seen))


def irma_error(truth, predicted, alphabets: AxisAlphabets) -> float:
    """Sum of (1/b_i)(1/i) over mismatching positions; '*' in the truth matches anything."""
    truth = truth if isinstance(truth, IrmaCode) else IrmaCode.parse(truth)
    predicted = predicted if isinstance(predicted, IrmaCode) else IrmaCode.parse(predicted)
    total = 0.0
    for weight, t, p in zip(alphabets.weights(), truth.characters, predicted.characters):
        if t != WILDCARD and t != p:
            total += weight
    return total


def classification_accuracy(predicted, truth) -> float:
    predicted, truth = list(predicted), list(truth)
    if len(predicted) != len(truth):
        raise ValueError(f"length mismatch: {len(predicted)} predictions, {len(truth)} labels")
    if not truth:
        raise ValueError("accuracy of an empty test set is undefined")
    hits = sum(p == t for p, t in zip(predicted, truth))
    return 100.0 * hits / len(truth)


@dataclass(frozen=True)
class ReportRow:
    query_id: str
    true_class: str
    true_code: str | None
    predicted_class: str
    top1_id: str | None
    top1_code: str | None
    error: float | None


def total_error(rows) -> float:
    return sum(r.error for r in rows if r.error is not None)


@dataclass(frozen=True)
class RetrievalReport:
    rows: tuple[ReportRow, ...]

    @property
    def total_error(self) -> float:
        return total_error(self.rows)

    @property
    def accuracy(self) -> float:
        return classification_accuracy([r.predicted_class for r in self.rows],
                                       [r.true_class for r in self.rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for r in self.rows:
            w.writerow([r.query_id, r.true_code or "", r.predicted_class, r.top1_id or "",
                        r.top1_code or "", "" if r.error is None else repr(r.error)])
        w.writerow(["total_error", repr(self.total_error)])
        w.writerow(["accuracy", repr(self.accuracy)])
        return buf.getvalue()


def read_report(text: str) -> tuple[list[dict], dict[str, float]]:
    """Parse a report CSV back into row dicts and its summary lines."""
    rows, summary = [], {}
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != REPORT_HEADER:
        raise ValueError(f"unexpected report header {header}")
    for line in reader:
        if len(line) == 2 and line[0] in ("total_error", "accuracy"):
            summary[line[0]] = float(line[1])
        else:
            rows.append(dict(zip(REPORT_HEADER, line)))
    return rows, summary
