"""Soft-margin RBF SVMs solved by SMO, combined one-against-one.

The dual solved for each binary problem is

    min  1/2 a'Qa - e'a   s.t.  0 <= a_i <= C,  y'a = 0,   Q_ij = y_i y_j k(x_i, x_j)

using the maximal-violating-pair working set: the first index is the point
with the largest KKT violation, the second maximises |E_i - E_j| among the
points that can move the other way.  All choices break ties by lowest index,
so training is reproducible bit for bit.
"""

from __future__ import annotations

import logging
import struct
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.spatial.distance import cdist

from .imaging import ContractViolation, RadonConfig

log = logging.getLogger(__name__)

DEFAULT_C = 16.0
DEFAULT_GAMMA = 0.0359
DEFAULT_TOLERANCE = 1e-3
FULL_GRAM_LIMIT = 8192
_TAU = 1e-12

MODEL_MAGIC = b"RSVM"
MODEL_VERSION = 1


class TrainingError(ValueError):
    pass


class ModelFormatError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SvmHyperparams:
    c: float = DEFAULT_C
    gamma: float = DEFAULT_GAMMA
    kkt_tolerance: float = DEFAULT_TOLERANCE
    # One pass is n pair updates; None means 10 * n passes.
    max_passes: int | None = None

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"penalty C must be positive, got {self.c}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not self.kkt_tolerance > 0:
            raise ValueError(f"kkt_tolerance must be positive, got {self.kkt_tolerance}")
        if self.max_passes is not None and self.max_passes < 1:
            raise ValueError(f"max_passes must be positive, got {self.max_passes}")

    def iteration_budget(self, n: int) -> int:
        """Pair updates allowed for an n-point problem."""
        passes = self.max_passes if self.max_passes is not None else 10 * n
        return passes * n


def _as_matrix(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x.reshape(1, -1) if x.ndim == 1 else x


def rbf_kernel(x, y, gamma: float) -> float:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise ContractViolation(f"kernel operands differ in dimension: {x.size} vs {y.size}")
    diff = x - y
    return float(np.exp(-gamma * np.dot(diff, diff)))


def rbf_gram(a, b, gamma: float) -> np.ndarray:
    a, b = _as_matrix(a), _as_matrix(b)
    if a.shape[1] != b.shape[1]:
        raise ContractViolation(f"kernel operands differ in dimension: {a.shape[1]} vs {b.shape[1]}")
    return np.exp(-gamma * cdist(a, b, "sqeuclidean"))


class _KernelColumns:
    """Gram matrix access; dense for small problems, cached columns otherwise."""

    def __init__(self, x: np.ndarray, gamma: float, cache_columns: int = 2048):
        self.x = x
        self.gamma = gamma
        self.n = x.shape[0]
        self.dense = rbf_gram(x, x, gamma) if self.n <= FULL_GRAM_LIMIT else None
        self._cache: dict[int, np.ndarray] = {}
        self._limit = cache_columns

    def diag(self) -> np.ndarray:
        # k(x, x) = 1 for the RBF kernel.
        return np.ones(self.n)

    def column(self, i: int) -> np.ndarray:
        if self.dense is not None:
            return self.dense[:, i]
        col = self._cache.get(i)
        if col is None:
            if len(self._cache) >= self._limit:
                self._cache.pop(next(iter(self._cache)))
            col = rbf_gram(self.x, self.x[i], self.gamma)[:, 0]
            self._cache[i] = col
        return col


@dataclass
class SmoState:
    """Dual iterate.  ``gradient`` (Qa - e) doubles as the error cache: the
    decision error of point t is E_t = y_t * gradient_t + bias."""

    alphas: np.ndarray
    gradient: np.ndarray
    pass_counter: int = 0
    bias: float = 0.0
    converged: bool = False
    gap: float = float("inf")


def _violation_sets(alphas, y, c):
    up = ((y > 0) & (alphas < c)) | ((y < 0) & (alphas > 0))
    low = ((y > 0) & (alphas > 0)) | ((y < 0) & (alphas < c))
    return up, low


def _bias(state: SmoState, y: np.ndarray, c: float) -> float:
    score = -y * state.gradient
    free = (state.alphas > 0) & (state.alphas < c)
    if free.any():
        return float(score[free].mean())
    up, low = _violation_sets(state.alphas, y, c)
    hi = score[up].max() if up.any() else -np.inf
    lo = score[low].min() if low.any() else np.inf
    if np.isfinite(hi) and np.isfinite(lo):
        return float((hi + lo) / 2.0)
    return float(hi if np.isfinite(hi) else lo)


def solve_dual(kernel: _KernelColumns, y: np.ndarray, c: float, tol: float, max_iter: int) -> SmoState:
    n = y.size
    state = SmoState(alphas=np.zeros(n), gradient=-np.ones(n))
    alphas, grad = state.alphas, state.gradient
    diag = kernel.diag()
    neg_inf = np.full(n, -np.inf)
    pos_inf = np.full(n, np.inf)

    while True:
        score = -y * grad
        up, low = _violation_sets(alphas, y, c)
        i = int(np.argmax(np.where(up, score, neg_inf)))
        j = int(np.argmin(np.where(low, score, pos_inf)))
        state.gap = float(score[i] - score[j]) if up[i] and low[j] else 0.0
        if state.gap <= tol:
            state.converged = True
            break
        if state.pass_counter >= max_iter:
            break

        k_i, k_j = kernel.column(i), kernel.column(j)
        curvature = max(diag[i] + diag[j] - 2.0 * k_i[j], _TAU)
        step = state.gap / curvature
        room_i = c - alphas[i] if y[i] > 0 else alphas[i]
        room_j = alphas[j] if y[j] > 0 else c - alphas[j]
        step = min(step, room_i, room_j)

        old_i, old_j = alphas[i], alphas[j]
        if step == room_i:
            alphas[i] = c if y[i] > 0 else 0.0
        else:
            alphas[i] = old_i + y[i] * step
        if step == room_j:
            alphas[j] = 0.0 if y[j] > 0 else c
        else:
            alphas[j] = old_j - y[j] * step
        d_i, d_j = alphas[i] - old_i, alphas[j] - old_j
        grad += y * (y[i] * d_i * k_i + y[j] * d_j * k_j)
        state.pass_counter += 1

    state.bias = _bias(state, y, c)
    return state


def dual_objective(alphas, y, gram) -> float:
    """Maximisation form: sum(a) - 1/2 sum_ij a_i a_j y_i y_j K_ij."""
    ay = np.asarray(alphas) * np.asarray(y)
    return float(np.sum(alphas) - 0.5 * ay @ gram @ ay)


@dataclass(frozen=True, eq=False)
class BinarySvm:
    support_vectors: np.ndarray
    coefficients: np.ndarray
    bias: float
    gamma: float
    converged: bool = True
    iterations: int = 0

    def __post_init__(self):
        sv = np.array(self.support_vectors, dtype=np.float64)
        coef = np.array(self.coefficients, dtype=np.float64).reshape(-1)
        if sv.ndim != 2 or sv.shape[0] != coef.size:
            raise ValueError("support vector and coefficient counts differ")
        sv.setflags(write=False)
        coef.setflags(write=False)
        object.__setattr__(self, "support_vectors", sv)
        object.__setattr__(self, "coefficients", coef)

    @property
    def dim(self) -> int:
        return self.support_vectors.shape[1]

    def __eq__(self, other):
        if not isinstance(other, BinarySvm):
            return NotImplemented
        return (self.bias == other.bias and self.gamma == other.gamma
                and np.array_equal(self.support_vectors, other.support_vectors)
                and np.array_equal(self.coefficients, other.coefficients))


def smo_train(samples, labels, hyper: SvmHyperparams = SvmHyperparams()) -> BinarySvm:
    x = _as_matrix(samples)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if x.shape[0] != y.size:
        raise TrainingError(f"{x.shape[0]} samples but {y.size} labels")
    if not np.all(np.abs(y) == 1):
        raise TrainingError("binary labels must be +1 or -1")
    if not ((y > 0).any() and (y < 0).any()):
        raise TrainingError("training data must contain both +1 and -1 labels")

    state = solve_dual(_KernelColumns(x, hyper.gamma), y, hyper.c, hyper.kkt_tolerance,
                       hyper.iteration_budget(y.size))
    if not state.converged:
        warnings.warn(f"SMO stopped after {state.pass_counter} updates with KKT gap {state.gap:.3g}",
                      ConvergenceWarning, stacklevel=2)
    support = state.alphas > 0
    return BinarySvm(x[support], state.alphas[support] * y[support], state.bias, hyper.gamma,
                     converged=state.converged, iterations=state.pass_counter)


def decision_values(m: BinarySvm, x) -> np.ndarray:
    x = _as_matrix(x)
    if m.coefficients.size == 0:
        return np.full(x.shape[0], m.bias)
    if x.shape[1] != m.dim:
        raise ContractViolation(f"expected {m.dim}-dimensional input, got {x.shape[1]}")
    return m.bias + rbf_gram(x, m.support_vectors, m.gamma) @ m.coefficients


def decision_value(m: BinarySvm, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ContractViolation("decision_value takes a single feature vector")
    return float(decision_values(m, x)[0])


def predict_binary(m: BinarySvm, x) -> int:
    return 1 if decision_value(m, x) >= 0 else -1


@dataclass(frozen=True, eq=False)
class MulticlassSvm:
    class_labels: tuple
    machines: tuple
    hyper: SvmHyperparams
    radon: RadonConfig | None = None
    _pool: list = field(default_factory=list, init=False, repr=False, compare=False)

    def __post_init__(self):
        k = len(self.class_labels)
        if len(self.machines) != k * (k - 1) // 2:
            raise ValueError(f"{k} classes need {k * (k - 1) // 2} machines, got {len(self.machines)}")

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return list(combinations(range(len(self.class_labels)), 2))

    @property
    def dim(self) -> int | None:
        for m in self.machines:
            if m.coefficients.size:
                return m.dim
        return None

    def __eq__(self, other):
        if not isinstance(other, MulticlassSvm):
            return NotImplemented
        return (self.class_labels == other.class_labels and self.hyper == other.hyper
                and self.radon == other.radon and self.machines == other.machines)

    def _shared_pool(self):
        # Each training point is a support vector of up to K-1 machines; evaluate
        # its kernel row once per query batch.
        if not self._pool:
            stacks = [m.support_vectors for m in self.machines if m.coefficients.size]
            if stacks:
                pool, inverse = np.unique(np.vstack(stacks), axis=0, return_inverse=True)
            else:
                pool, inverse = np.zeros((0, 0)), np.zeros(0, dtype=np.int64)
            inverse = inverse.reshape(-1)
            index, start = [], 0
            for m in self.machines:
                n = m.coefficients.size
                index.append(inverse[start:start + n])
                start += n
            self._pool.extend([pool, index])
        return self._pool

    def decision_matrix(self, x) -> np.ndarray:
        """Decision values, shape (n_machines, n_samples), in pair order."""
        x = _as_matrix(x)
        dim = self.dim
        if dim is not None and x.shape[1] != dim:
            raise ContractViolation(f"expected {dim}-dimensional input, got {x.shape[1]}")
        pool, index = self._shared_pool()
        kx = rbf_gram(x, pool, self.hyper.gamma) if pool.size else None
        out = np.empty((len(self.machines), x.shape[0]))
        for r, (m, idx) in enumerate(zip(self.machines, index)):
            out[r] = m.bias if kx is None or not idx.size else m.bias + kx[:, idx] @ m.coefficients
        return out


def _train_pair(task):
    x, y, hyper = task
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        machine = smo_train(x, y, hyper)
    return machine, [str(w.message) for w in caught]


def train_multiclass(features, class_labels, hyper: SvmHyperparams = SvmHyperparams(),
                     workers: int = 1, radon: RadonConfig | None = None) -> MulticlassSvm:
    """One machine per label pair (i < j in sorted order); +1 marks the lower label."""
    x = _as_matrix(features)
    labels = list(class_labels)
    if x.shape[0] != len(labels):
        raise TrainingError(f"{x.shape[0]} feature vectors but {len(labels)} labels")
    classes = tuple(sorted(set(labels)))
    if len(classes) < 2:
        raise TrainingError(f"need at least 2 classes, got {len(classes)}")
    codes = np.array([classes.index(lab) for lab in labels])

    tasks = []
    for i, j in combinations(range(len(classes)), 2):
        mask = (codes == i) | (codes == j)
        tasks.append((x[mask], np.where(codes[mask] == i, 1.0, -1.0), hyper))

    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_train_pair, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        results = [_train_pair(t) for t in tasks]

    machines = []
    for (i, j), (machine, messages) in zip(combinations(range(len(classes)), 2), results):
        for msg in messages:
            warnings.warn(f"pair ({classes[i]!r}, {classes[j]!r}): {msg}", ConvergenceWarning, stacklevel=2)
        machines.append(machine)
    return MulticlassSvm(classes, tuple(machines), hyper, radon)


def vote(model: MulticlassSvm, decisions: np.ndarray) -> int:
    """Index of the winning label for one column of decision values."""
    k = len(model.class_labels)
    votes = np.zeros(k, dtype=np.int64)
    strength = np.zeros(k)
    for (i, j), dv in zip(model.pairs, decisions):
        winner = i if dv >= 0 else j
        votes[winner] += 1
        strength[winner] += abs(dv)
    tied = np.flatnonzero(votes == votes.max())
    if tied.size == 1:
        return int(tied[0])
    best = strength[tied].max()
    return int(tied[strength[tied] == best][0])


def predict_classes(model: MulticlassSvm, x) -> list:
    decisions = model.decision_matrix(x)
    return [model.class_labels[vote(model, decisions[:, s])] for s in range(decisions.shape[1])]


def predict_class(model: MulticlassSvm, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ContractViolation("predict_class takes a single feature vector")
    return predict_classes(model, x)[0]


# -- model file -------------------------------------------------------------
#
# magic "RSVM", version u8, n_p u16, N u16 (0/0 when no Radon config),
# C f64, gamma f64, kkt_tolerance f64, max_passes u32 (0 = auto),
# dim u32, K u32, K labels (u16 length + UTF-8), then per machine in pair
# order: n_sv u32, bias f64, converged u8, n_sv coefficients f64,
# n_sv * dim support-vector values f64.  All little-endian.

def dumps_model(model: MulticlassSvm) -> bytes:
    dim = model.dim or 0
    hyper = model.hyper
    np_, side = (model.radon.projections, model.radon.side) if model.radon else (0, 0)
    parts = [MODEL_MAGIC, struct.pack("<BHHdddIII", MODEL_VERSION, np_, side, hyper.c, hyper.gamma,
                                      hyper.kkt_tolerance, hyper.max_passes or 0, dim,
                                      len(model.class_labels))]
    for label in model.class_labels:
        raw = str(label).encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
    for m in model.machines:
        n_sv = m.coefficients.size
        parts.append(struct.pack("<IdB", n_sv, m.bias, int(m.converged)))
        parts.append(m.coefficients.astype("<f8").tobytes())
        if n_sv:
            parts.append(np.ascontiguousarray(m.support_vectors, dtype="<f8").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes, error=ModelFormatError):
        self.data = data
        self.pos = 0
        self.error = error

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise self.error(f"truncated while reading {what}", self.pos)
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def loads_model(data: bytes) -> MulticlassSvm:
    r = _Reader(data)
    if r.take(4, "magic") != MODEL_MAGIC:
        raise ModelFormatError("bad magic, not an RSVM model file", 0)
    version, = r.unpack("<B", "version")
    if version != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {version}", 4)
    np_, side, c, gamma, tol, max_passes, dim, k = r.unpack("<HHdddIII", "header")
    hyper = SvmHyperparams(c, gamma, tol, max_passes or None)
    radon = RadonConfig(np_, side) if np_ and side else None
    labels = []
    for _ in range(k):
        n, = r.unpack("<H", "label length")
        labels.append(r.take(n, "label").decode("utf-8"))
    machines = []
    for _ in range(k * (k - 1) // 2):
        n_sv, bias, converged = r.unpack("<IdB", "machine header")
        coef = np.frombuffer(r.take(8 * n_sv, "coefficients"), dtype="<f8").astype(np.float64)
        sv = np.frombuffer(r.take(8 * n_sv * dim, "support vectors"), dtype="<f8").astype(np.float64)
        machines.append(BinarySvm(sv.reshape(n_sv, dim), coef, bias, gamma, bool(converged)))
    if r.pos != len(data):
        raise ModelFormatError("trailing bytes after last machine", r.pos)
    return MulticlassSvm(tuple(labels), tuple(machines), hyper, radon)


def save_model(model: MulticlassSvm, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps_model(model))


def load_model(path) -> MulticlassSvm:
    with open(path, "rb") as fh:
        return loads_model(fh.read())
