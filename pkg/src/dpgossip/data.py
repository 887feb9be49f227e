"""Labeled example streams: synthetic sparse generator, libsvm ingestion, normalization."""
from __future__ import annotations

import gzip
import io
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, TextIO

import numpy as np


class DataFormatError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True, eq=False)
class LabeledExample:
    """Sparse feature vector (strictly increasing indices) with a +/-1 label."""

    indices: np.ndarray
    values: np.ndarray
    y: int
    id: int

    def __post_init__(self):
        if self.y not in (-1, 1):
            raise ValueError(f"label must be -1 or +1, got {self.y!r}")
        if self.indices.shape != self.values.shape:
            raise ValueError("indices and values must have the same length")
        if self.indices.size > 1 and np.any(np.diff(self.indices) <= 0):
            raise ValueError("indices must be strictly increasing")

    def dense(self, n: int) -> np.ndarray:
        if self.indices.size and (self.indices[0] < 0 or self.indices[-1] >= n):
            raise ValueError(f"example {self.id} has indices outside [0, {n})")
        x = np.zeros(n)
        x[self.indices] = self.values
        return x

    def dot(self, w: np.ndarray) -> float:
        return float(np.dot(w[self.indices], self.values))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def __eq__(self, other):
        if not isinstance(other, LabeledExample):
            return NotImplemented
        return (
            self.y == other.y
            and self.id == other.id
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


def make_example(x: np.ndarray, y: int, id: int) -> LabeledExample:
    """Build an example from a dense vector, keeping only nonzero entries."""
    x = np.asarray(x, dtype=float)
    idx = np.flatnonzero(x)
    return LabeledExample(idx.astype(np.int64), x[idx].copy(), int(y), int(id))


@dataclass(frozen=True)
class SyntheticModel:
    """Sparse linear ground truth with label noise.

    ``w_true`` has exactly ``k`` nonzero standard-normal entries; each feature
    vector has ``k_x`` nonzero standard-normal entries at uniform indices.
    """

    n: int
    k: int
    k_x: int
    noise_rate: float = 0.0
    seed: int = 0
    w_true: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 1 <= self.k <= self.n:
            raise ValueError(f"need 1 <= k <= n, got k={self.k}, n={self.n}")
        if not 1 <= self.k_x <= self.n:
            raise ValueError(f"need 1 <= k_x <= n, got k_x={self.k_x}, n={self.n}")
        if not 0.0 <= self.noise_rate < 0.5:
            raise ValueError(f"noise_rate must lie in [0, 0.5), got {self.noise_rate}")
        rng = np.random.default_rng([self.seed, 0x5EED])
        w = np.zeros(self.n)
        support = rng.choice(self.n, size=self.k, replace=False)
        vals = rng.standard_normal(self.k)
        vals[vals == 0.0] = 1.0
        w[support] = vals
        object.__setattr__(self, "w_true", w)


def generate_stream(model: SyntheticModel, count: int, seed: int, start_id: int = 0) -> list[LabeledExample]:
    """Draw ``count`` unit-norm sparse examples labeled by ``sign(<w_true, x>)``.

    Draws with zero margin are rejected and redrawn; labels are then flipped
    independently with probability ``model.noise_rate``.
    """
    if count < 0:
        raise ValueError(f"count must be nonnegative, got {count}")
    rng = np.random.default_rng([seed, 0xDA7A])
    w = model.w_true
    out = []
    next_id = start_id
    while len(out) < count:
        idx = np.sort(rng.choice(model.n, size=model.k_x, replace=False))
        vals = rng.standard_normal(model.k_x)
        if np.any(vals == 0.0):
            continue
        vals = vals / np.linalg.norm(vals)
        score = float(np.dot(w[idx], vals))
        if score == 0.0:
            continue
        y = 1 if score > 0 else -1
        if rng.random() < model.noise_rate:
            y = -y
        out.append(LabeledExample(idx.astype(np.int64), vals, y, next_id))
        next_id += 1
    return out


def normalize(examples: Iterable[LabeledExample]) -> list[LabeledExample]:
    out = []
    for ex in examples:
        norm = ex.norm
        vals = ex.values / norm if norm > 0 else ex.values.copy()
        out.append(LabeledExample(ex.indices, vals, ex.y, ex.id))
    return out


def _open_text(path: str | Path) -> TextIO:
    path = Path(path)
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8")
    return open(path, encoding="utf-8")


def parse_libsvm(lines: Iterable[str], n: int, start_id: int = 0) -> Iterator[LabeledExample]:
    """Parse ``label idx:val ...`` lines with 1-based indices.

    Blank lines and ``#`` comments are skipped. Labels <= 0 map to -1, > 0 to +1.
    """
    next_id = start_id
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise DataFormatError(lineno, f"bad label {tokens[0]!r}") from None
        idx = np.empty(len(tokens) - 1, dtype=np.int64)
        vals = np.empty(len(tokens) - 1)
        for k, tok in enumerate(tokens[1:]):
            head, sep, tail = tok.partition(":")
            if not sep:
                raise DataFormatError(lineno, f"feature token {tok!r} lacks ':'")
            try:
                j = int(head)
                v = float(tail)
            except ValueError:
                raise DataFormatError(lineno, f"bad feature token {tok!r}") from None
            if not 1 <= j <= n:
                raise DataFormatError(lineno, f"index {j} outside [1, {n}]")
            idx[k] = j - 1
            vals[k] = v
        if idx.size > 1 and np.any(np.diff(idx) <= 0):
            raise DataFormatError(lineno, "feature indices must be strictly increasing")
        keep = vals != 0.0
        yield LabeledExample(idx[keep], vals[keep], 1 if label > 0 else -1, next_id)
        next_id += 1


def read_libsvm(path: str | Path, n: int) -> list[LabeledExample]:
    with _open_text(path) as fh:
        return list(parse_libsvm(fh, n))


def format_libsvm(ex: LabeledExample) -> str:
    label = "+1" if ex.y > 0 else "-1"
    feats = " ".join(f"{j + 1}:{v!r}" for j, v in zip(ex.indices.tolist(), ex.values.tolist()))
    return f"{label} {feats}".rstrip()


def write_libsvm(examples: Iterable[LabeledExample], fh: TextIO) -> None:
    for ex in examples:
        fh.write(format_libsvm(ex))
        fh.write("\n")


def take(stream: Iterable[LabeledExample], count: int) -> list[LabeledExample]:
    out = list(itertools.islice(stream, count))
    if len(out) < count:
        raise ValueError(f"stream exhausted: needed {count} examples, got {len(out)}")
    return out
