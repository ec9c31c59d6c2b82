"""Class-bucketed barcode store with exhaustive Hamming kNN search.

Barcodes are kept packed (MSB-first bytes, zero-padded to whole 64-bit
words) so a query is one XOR + popcount sweep over a contiguous matrix.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .barcode import RadonBarcode, packed_size
from .imaging import ContractViolation, RadonConfig

INDEX_MAGIC = b"RBCI"
INDEX_VERSION = 1
IRMA_CODE_LENGTH = 13


class IndexBuildError(ValueError):
    pass


class IndexFormatError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


@dataclass(frozen=True)
class IndexedImage:
    id: str
    class_label: str
    barcode: RadonBarcode
    irma_code: str | None = None


@dataclass(frozen=True)
class RankedResult:
    entries: tuple[tuple[str, str, int], ...]
    k_requested: int

    @property
    def ids(self) -> list[str]:
        return [e[0] for e in self.entries]

    @property
    def distances(self) -> list[int]:
        return [e[2] for e in self.entries]

    def __len__(self):
        return len(self.entries)


class _PackedBlock:
    """Packed barcodes of a run of records, viewed as uint64 words."""

    def __init__(self, records, n_bytes: int):
        words = (n_bytes + 7) // 8
        buf = np.zeros((len(records), words * 8), dtype=np.uint8)
        for r, rec in enumerate(records):
            buf[r, :n_bytes] = np.frombuffer(rec.barcode.pack(), dtype=np.uint8)
        self.words = buf.view(np.uint64)

    def distances(self, query: np.ndarray) -> np.ndarray:
        return np.bitwise_count(self.words ^ query).sum(axis=1, dtype=np.int64)


def _query_words(query: RadonBarcode) -> np.ndarray:
    n_bytes = packed_size(query.config)
    buf = np.zeros(((n_bytes + 7) // 8) * 8, dtype=np.uint8)
    buf[:n_bytes] = np.frombuffer(query.pack(), dtype=np.uint8)
    return buf.view(np.uint64)


def _top_k(distances: np.ndarray, k: int) -> np.ndarray:
    """Positions of the k smallest distances, ties kept in positional order."""
    n = distances.size
    if k >= n:
        return np.argsort(distances, kind="stable")
    kth = np.partition(distances, k - 1)[k - 1]
    candidates = np.flatnonzero(distances <= kth)
    order = np.argsort(distances[candidates], kind="stable")
    return candidates[order[:k]]


@dataclass(eq=False)
class BarcodeIndex:
    """Immutable once built; buckets are ordered by class label."""

    config: RadonConfig
    buckets: dict[str, tuple[IndexedImage, ...]]
    _blocks: dict = field(default_factory=dict, init=False, repr=False)

    @property
    def total(self) -> int:
        return sum(len(b) for b in self.buckets.values())

    @property
    def class_labels(self) -> list[str]:
        return list(self.buckets)

    def records(self):
        for bucket in self.buckets.values():
            yield from bucket

    def __eq__(self, other):
        if not isinstance(other, BarcodeIndex):
            return NotImplemented
        return (self.config == other.config and list(self.buckets) == list(other.buckets)
                and all(self.buckets[c] == other.buckets[c] for c in self.buckets))

    def _block(self, key):
        block = self._blocks.get(key)
        if block is None:
            records = list(self.records()) if key is None else self.buckets[key]
            block = _PackedBlock(records, packed_size(self.config))
            self._blocks[key] = block
        return block


def build_index(records, cfg: RadonConfig) -> BarcodeIndex:
    buckets: dict[str, list[IndexedImage]] = {}
    seen = set()
    for rec in records:
        if not rec.class_label:
            raise IndexBuildError(f"record {rec.id!r} has no class label")
        if rec.barcode.config != cfg:
            raise IndexBuildError(f"record {rec.id!r} has barcode config {rec.barcode.config}, index uses {cfg}")
        if rec.id in seen:
            raise IndexBuildError(f"duplicate record id {rec.id!r}")
        if rec.irma_code is not None and len(rec.irma_code) != IRMA_CODE_LENGTH:
            raise IndexBuildError(f"record {rec.id!r} has IRMA code {rec.irma_code!r}, "
                                  f"expected {IRMA_CODE_LENGTH} characters")
        seen.add(rec.id)
        buckets.setdefault(rec.class_label, []).append(rec)
    return BarcodeIndex(cfg, {c: tuple(buckets[c]) for c in sorted(buckets)})


def _check_query(idx: BarcodeIndex, query: RadonBarcode, k: int):
    if query.config != idx.config:
        raise ContractViolation(f"query config {query.config} does not match index config {idx.config}")
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")


def knn_within_class(idx: BarcodeIndex, class_label: str, query: RadonBarcode, k: int) -> RankedResult:
    """Top-k in one bucket.  An unknown class gives an empty result, not an error."""
    _check_query(idx, query, k)
    bucket = idx.buckets.get(class_label)
    if not bucket:
        return RankedResult((), k)
    dist = idx._block(class_label).distances(_query_words(query))
    return RankedResult(tuple((bucket[p].id, bucket[p].class_label, int(dist[p])) for p in _top_k(dist, k)), k)


def knn_direct(idx: BarcodeIndex, query: RadonBarcode, k: int) -> RankedResult:
    """Top-k over every bucket; ties go to the earlier class, then earlier insertion."""
    _check_query(idx, query, k)
    if idx.total == 0:
        return RankedResult((), k)
    records = list(idx.records())
    dist = idx._block(None).distances(_query_words(query))
    return RankedResult(tuple((records[p].id, records[p].class_label, int(dist[p])) for p in _top_k(dist, k)), k)


def dumps_index(idx: BarcodeIndex) -> bytes:
    cfg = idx.config
    parts = [INDEX_MAGIC, struct.pack("<BHHI", INDEX_VERSION, cfg.projections, cfg.side, idx.total)]
    for rec in idx.records():
        rid = rec.id.encode("utf-8")
        cls = rec.class_label.encode("utf-8")
        parts.append(struct.pack("<H", len(rid)) + rid + struct.pack("<H", len(cls)) + cls)
        if rec.irma_code is None:
            parts.append(b"\x00")
        else:
            parts.append(b"\x01" + rec.irma_code.encode("ascii"))
        parts.append(rec.barcode.pack())
    return b"".join(parts)


def loads_index(data: bytes) -> BarcodeIndex:
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(data):
            raise IndexFormatError(f"truncated while reading {what}", pos)
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    if take(4, "magic") != INDEX_MAGIC:
        raise IndexFormatError("bad magic, not an RBCI index file", 0)
    version, n_p, side, count = struct.unpack("<BHHI", take(9, "header"))
    if version != INDEX_VERSION:
        raise IndexFormatError(f"unsupported index version {version}", 4)
    cfg = RadonConfig(n_p, side)
    n_bytes = packed_size(cfg)
    records = []
    for r in range(count):
        start = pos
        try:
            rid = take(struct.unpack("<H", take(2, f"record {r} id length"))[0], f"record {r} id").decode("utf-8")
            cls = take(struct.unpack("<H", take(2, f"record {r} class length"))[0],
                       f"record {r} class").decode("utf-8")
            flag = take(1, f"record {r} code flag")[0]
            if flag not in (0, 1):
                raise IndexFormatError(f"record {r} has invalid IRMA presence flag {flag}", pos - 1)
            code = take(IRMA_CODE_LENGTH, f"record {r} IRMA code").decode("ascii") if flag else None
        except UnicodeDecodeError as exc:
            raise IndexFormatError(f"record {r} has undecodable text: {exc}", start) from exc
        barcode = RadonBarcode.unpack(cfg, take(n_bytes, f"record {r} barcode"))
        records.append(IndexedImage(rid, cls, barcode, code))
    if pos != len(data):
        raise IndexFormatError("trailing bytes after last record", pos)
    try:
        return build_index(records, cfg)
    except IndexBuildError as exc:
        raise IndexFormatError(str(exc), pos) from exc


def save_index(idx: BarcodeIndex, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps_index(idx))


def load_index(path) -> BarcodeIndex:
    with open(path, "rb") as fh:
        return loads_index(fh.read())
