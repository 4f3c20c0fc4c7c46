"""Labeled real vectors over time-varying index sets and the open distance.

An :class:`OpenVector` maps agent labels to real values.  Two vectors may
live on different label sets; :func:`open_distance` compares them by
treating every missing component as zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InvalidInputError, UnknownNodeError

__all__ = [
    "OpenVector",
    "open_distance",
    "mean_and_deviation",
    "infinity_norm",
    "bounded_variation_constant",
    "as_label_array",
]


def as_label_array(labels: Iterable[int]) -> np.ndarray:
    """Return ``labels`` as a sorted, read-only int64 array.

    Raises InvalidInputError on duplicates or negative labels.
    """
    arr = np.asarray(sorted(int(v) for v in labels), dtype=np.int64)
    if arr.size and arr[0] < 0:
        raise InvalidInputError("node labels must be non-negative")
    if arr.size > 1 and np.any(arr[1:] == arr[:-1]):
        raise InvalidInputError("duplicate node labels")
    arr.setflags(write=False)
    return arr


def _frozen(a, dtype) -> np.ndarray:
    # read-only arrays are shared as is, anything else is copied first
    if isinstance(a, np.ndarray) and a.dtype == dtype and not a.flags.writeable:
        return a
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class OpenVector:
    """Finite mapping from node labels to finite floats.

    ``labels`` is strictly increasing; ``values[i]`` belongs to ``labels[i]``.
    Both arrays are made read-only on construction.
    """

    labels: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        labels = _frozen(self.labels, np.int64)
        values = _frozen(self.values, np.float64)
        if labels.ndim != 1 or values.shape != labels.shape:
            raise InvalidInputError(
                f"labels and values must be 1-d of equal length, got {labels.shape} and {values.shape}"
            )
        if labels.size > 1 and not np.all(labels[1:] > labels[:-1]):
            raise InvalidInputError("labels must be strictly increasing")
        if labels.size and labels[0] < 0:
            raise InvalidInputError("node labels must be non-negative")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("open vector entries must be finite")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_mapping(cls, mapping: Mapping[int, float]) -> "OpenVector":
        keys = sorted(mapping)
        return cls(np.asarray(keys, dtype=np.int64), np.asarray([mapping[k] for k in keys], dtype=np.float64))

    @classmethod
    def constant(cls, labels: np.ndarray, value: float) -> "OpenVector":
        return cls(labels, np.full(len(labels), float(value)))

    def to_dict(self) -> dict[int, float]:
        return {int(k): float(v) for k, v in zip(self.labels, self.values)}

    def __len__(self) -> int:
        return int(self.labels.size)

    def __contains__(self, label: object) -> bool:
        if not isinstance(label, (int, np.integer)):
            return False
        i = np.searchsorted(self.labels, label)
        return bool(i < self.labels.size and self.labels[i] == label)

    def __getitem__(self, label: int) -> float:
        i = np.searchsorted(self.labels, label)
        if i >= self.labels.size or self.labels[i] != label:
            raise UnknownNodeError(f"label {label} not in support")
        return float(self.values[i])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, OpenVector):
            return NotImplemented
        return np.array_equal(self.labels, other.labels) and np.array_equal(self.values, other.values)

    __hash__ = None  # type: ignore[assignment]

    def same_support(self, other: "OpenVector | np.ndarray") -> bool:
        labels = other.labels if isinstance(other, OpenVector) else other
        return self.labels is labels or np.array_equal(self.labels, labels)

    def __repr__(self) -> str:
        if len(self) <= 6:
            return f"OpenVector({self.to_dict()})"
        return f"OpenVector(<{len(self)} entries, labels {self.labels[0]}..{self.labels[-1]}>)"


def _sum_squares(diff: np.ndarray) -> float:
    # fsum is correctly rounded, hence independent of summation order
    return math.fsum((diff * diff).tolist())


def open_distance(x: OpenVector, y: OpenVector) -> float:
    """Distance between vectors on possibly different label sets.

    Shared labels contribute their squared difference, labels present on
    only one side contribute the square of that value.  Equivalent to the
    Euclidean distance after zero-padding both vectors to the union support.
    """
    if len(x) == 0 or len(y) == 0:
        raise InvalidInputError("open distance is undefined for empty supports")
    if x.same_support(y):
        return math.sqrt(_sum_squares(x.values - y.values))
    union = np.union1d(x.labels, y.labels)
    xb = np.zeros(union.size)
    yb = np.zeros(union.size)
    xb[np.searchsorted(union, x.labels)] = x.values
    yb[np.searchsorted(union, y.labels)] = y.values
    return math.sqrt(_sum_squares(xb - yb))


def mean_and_deviation(u: OpenVector) -> tuple[float, OpenVector]:
    """Split ``u`` into its arithmetic mean and the zero-sum deviation from it.

    Returns:
        ``(mean, deviation)`` where ``deviation`` has the support of ``u``.
    """
    if len(u) == 0:
        raise InvalidInputError("mean of an empty open vector")
    mean = math.fsum(u.values.tolist()) / len(u)
    return mean, OpenVector(u.labels, u.values - mean)


def infinity_norm(x: OpenVector) -> float:
    if len(x) == 0:
        raise InvalidInputError("infinity norm of an empty open vector")
    return float(np.max(np.abs(x.values)))


def bounded_variation_constant(seq: Sequence[OpenVector]) -> float:
    """Smallest B with ``d(y[k+1], y[k]) <= sqrt(|V[k+1]|) * B`` on ``seq``."""
    if len(seq) < 2:
        raise InvalidInputError("bounded variation needs at least two terms")
    best = 0.0
    for prev, cur in zip(seq[:-1], seq[1:]):
        if len(cur) == 0:
            raise InvalidInputError("empty support in open sequence")
        best = max(best, open_distance(cur, prev) / math.sqrt(len(cur)))
    return best
