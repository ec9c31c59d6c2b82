"""Radon barcodes: per-angle median thresholding and Hamming comparison."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imaging import ContractViolation, RadonConfig, RadonFeatures


@dataclass(frozen=True, eq=False)
class RadonBarcode:
    """Bit vector of length ``projections * side``, angle-major."""

    config: RadonConfig
    bits: np.ndarray

    def __post_init__(self):
        bits = np.array(self.bits, dtype=bool, copy=True).reshape(-1)
        if bits.size != self.config.n_bits:
            raise ValueError(f"barcode must have {self.config.n_bits} bits, got {bits.size}")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def n_bytes(self) -> int:
        return packed_size(self.config)

    def pack(self) -> bytes:
        """MSB-first packing; the final byte is zero-padded on the right."""
        return np.packbits(self.bits, bitorder="big").tobytes()

    @classmethod
    def unpack(cls, config: RadonConfig, payload: bytes) -> "RadonBarcode":
        if len(payload) != packed_size(config):
            raise ValueError(f"expected {packed_size(config)} packed bytes, got {len(payload)}")
        raw = np.frombuffer(payload, dtype=np.uint8)
        bits = np.unpackbits(raw, count=config.n_bits, bitorder="big")
        return cls(config, bits.astype(bool))

    def to_text(self) -> str:
        rows = self.bits.reshape(self.config.projections, self.config.side)
        return "\n".join("".join("1" if b else "0" for b in row) for row in rows)

    def __eq__(self, other):
        if not isinstance(other, RadonBarcode):
            return NotImplemented
        return self.config == other.config and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash((self.config, self.pack()))


def packed_size(config: RadonConfig) -> int:
    return (config.n_bits + 7) // 8


def threshold_projection(row) -> np.ndarray:
    """Binarize one projection at the median of its nonzero values.

    An all-zero projection has no typical value and maps to all-zero bits.
    """
    row = np.asarray(row, dtype=np.float64)
    if np.any(row < 0):
        raise ValueError("projection values must be non-negative")
    nonzero = row[row != 0]
    if nonzero.size == 0:
        return np.zeros(row.shape, dtype=bool)
    typical = np.median(nonzero)
    return row >= typical


def generate_barcode(f: RadonFeatures) -> RadonBarcode:
    bits = np.concatenate([threshold_projection(row) for row in f.values])
    return RadonBarcode(f.config, bits)


def hamming_distance(a: RadonBarcode, b: RadonBarcode) -> int:
    if a.config != b.config:
        raise ContractViolation(f"cannot compare barcodes with configs {a.config} and {b.config}")
    xa = np.frombuffer(a.pack(), dtype=np.uint8)
    xb = np.frombuffer(b.pack(), dtype=np.uint8)
    return int(np.bitwise_count(xa ^ xb).sum())
