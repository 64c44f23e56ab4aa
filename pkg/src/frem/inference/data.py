"""Observation intervals: consecutive pairs of observed states, pooled across paths."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np


class Interval(NamedTuple):
    s: float
    t: float
    x_s: tuple[int, ...]
    x_t: tuple[int, ...]


@dataclass
class ObservedPath:
    path_id: str
    times: np.ndarray
    states: np.ndarray  # (n, d)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64).reshape(-1)
        self.states = np.asarray(self.states, dtype=np.int64).reshape(len(self.times), -1)


@dataclass
class DataSet:
    intervals: list[Interval]
    #: (path_id, index of the interval within its path), one per interval
    provenance: list[tuple[str, int]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.intervals)

    @property
    def lengths(self) -> np.ndarray:
        return np.array([iv.t - iv.s for iv in self.intervals])


class DataError(ValueError):
    pass


def extract_intervals(paths: Sequence[ObservedPath]) -> DataSet:
    """One interval per consecutive observation pair; repeated intervals are kept."""
    intervals, prov = [], []
    for path in paths:
        t, X = path.times, path.states
        if len(t) < 2:
            raise DataError(f"path {path.path_id!r} needs at least two observations")
        bad = np.nonzero(np.diff(t) <= 0)[0]
        if bad.size:
            i = int(bad[0])
            raise DataError(f"path {path.path_id!r}: times not increasing at rows {i} and {i + 1} "
                            f"({t[i]} then {t[i + 1]})")
        if np.any(X < 0):
            raise DataError(f"path {path.path_id!r}: negative counts")
        for k in range(len(t) - 1):
            intervals.append(Interval(float(t[k]), float(t[k + 1]),
                                      tuple(int(v) for v in X[k]), tuple(int(v) for v in X[k + 1])))
            prov.append((str(path.path_id), k))
    return DataSet(intervals, prov)
