"""Ride traces -> fixed-length segment feature vectors, plus label utilities.

Each segment is summarised by seven statistics of each of three signals,
signal-major, giving 21 values named ``<signal>_<stat>``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

SIGNALS = ("speed", "accel", "jerk")
STATS = ("mean", "median", "std", "min", "max", "p25", "p75")
FEATURE_NAMES = tuple(f"{sig}_{stat}" for sig in SIGNALS for stat in STATS)
N_FEATURES = len(FEATURE_NAMES)

SIGMA_FLOOR = 1e-9


@dataclass(frozen=True, eq=False)
class RideTrace:
    timestamps: np.ndarray
    speed: np.ndarray
    accel: np.ndarray
    jerk: np.ndarray
    sample_rate: float = 10.0

    def __post_init__(self):
        arrays = [np.asarray(getattr(self, k), dtype=float) for k in ("timestamps", "speed", "accel", "jerk")]
        n = arrays[0].size
        if any(a.ndim != 1 or a.size != n for a in arrays):
            raise ValueError("trace series must be 1-d and equal length")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if n > 1 and np.any(np.diff(arrays[0]) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        for k, a in zip(("timestamps", "speed", "accel", "jerk"), arrays):
            a.setflags(write=False)
            object.__setattr__(self, k, a)

    def __len__(self):
        return self.timestamps.size

    def signals(self) -> np.ndarray:
        """``(3, n)`` array in canonical signal order."""
        return np.stack([self.speed, self.accel, self.jerk])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "speed", "accel", "jerk"])
            for row in zip(self.timestamps, self.speed, self.accel, self.jerk):
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path, sample_rate: Optional[float] = None) -> "RideTrace":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = {"t", "speed", "accel", "jerk"} - set(reader.fieldnames or ())
            if missing:
                raise ValueError(f"{path}: missing columns {sorted(missing)}")
            rows = [(float(r["t"]), float(r["speed"]), float(r["accel"]), float(r["jerk"])) for r in reader]
        data = np.array(rows, dtype=float).reshape(-1, 4)
        if sample_rate is None:
            sample_rate = 1.0 / float(np.median(np.diff(data[:, 0]))) if len(data) > 1 else 10.0
        return cls(data[:, 0], data[:, 1], data[:, 2], data[:, 3], sample_rate)


@dataclass(frozen=True, eq=False)
class SegmentFeatures:
    values: np.ndarray
    label: Optional[int] = None
    segment_index: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.size != N_FEATURES:
            raise ValueError(f"expected {N_FEATURES} feature values, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise ValueError("feature values must be finite")
        if self.label not in (None, 0, 1):
            raise ValueError(f"label must be 0, 1 or None, got {self.label!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def block(self, signal: str) -> dict[str, float]:
        i = SIGNALS.index(signal) * len(STATS)
        return dict(zip(STATS, self.values[i : i + len(STATS)].tolist()))


@dataclass(frozen=True)
class LabeledDataset:
    rows: tuple[SegmentFeatures, ...]
    passenger_id: str = ""

    def __post_init__(self):
        rows = tuple(self.rows)
        if any(r.label is None for r in rows):
            raise ValueError("every row of a LabeledDataset needs a label")
        object.__setattr__(self, "rows", rows)

    def __len__(self):
        return len(self.rows)

    @property
    def X(self) -> np.ndarray:
        if not self.rows:
            return np.empty((0, N_FEATURES))
        return np.stack([r.values for r in self.rows])

    @property
    def y(self) -> np.ndarray:
        return np.array([r.label for r in self.rows], dtype=int)

    def with_labels(self, labels: Sequence[int]) -> "LabeledDataset":
        rows = tuple(replace(r, label=int(l)) for r, l in zip(self.rows, labels, strict=True))
        return LabeledDataset(rows, self.passenger_id)

    def subset(self, idx: Sequence[int]) -> "LabeledDataset":
        return LabeledDataset(tuple(self.rows[i] for i in idx), self.passenger_id)

    @classmethod
    def from_arrays(cls, X: np.ndarray, y: Sequence[int], passenger_id: str = "") -> "LabeledDataset":
        rows = tuple(SegmentFeatures(x, int(l), k) for k, (x, l) in enumerate(zip(X, y, strict=True)))
        return cls(rows, passenger_id)


def segment(trace: RideTrace, window_seconds: float = 10.0) -> list[range]:
    """Split a trace into consecutive windows; a trailing window shorter than half is dropped."""
    if window_seconds <= 0:
        raise ValueError("window_seconds must be positive")
    n = len(trace)
    width = max(1, int(round(window_seconds * trace.sample_rate)))
    out = [range(s, s + width) for s in range(0, n - width + 1, width)]
    start = len(out) * width
    if n - start > 0 and 2 * (n - start) >= width:
        out.append(range(start, n))
    return out


def _block_stats(x: np.ndarray) -> list[float]:
    p25, median, p75 = np.percentile(x, [25, 50, 75])
    return [float(x.mean()), float(median), float(x.std()), float(x.min()), float(x.max()), float(p25), float(p75)]


def extract_features(trace: RideTrace, rng: range, segment_index: int = 0) -> SegmentFeatures:
    """21 statistics over ``rng``; population std, linearly interpolated percentiles."""
    if len(rng) == 0:
        raise ValueError("empty segment range")
    if rng.step != 1 or rng.start < 0 or rng.stop > len(trace):
        raise IndexError(f"range {rng} out of bounds for trace of length {len(trace)}")
    sl = slice(rng.start, rng.stop)
    values = []
    for sig in (trace.speed, trace.accel, trace.jerk):
        values.extend(_block_stats(sig[sl]))
    return SegmentFeatures(np.array(values), None, segment_index)


def trace_features(trace: RideTrace, window_seconds: float = 10.0) -> list[SegmentFeatures]:
    return [extract_features(trace, r, k) for k, r in enumerate(segment(trace, window_seconds))]


def _require_both_classes(y: np.ndarray) -> None:
    if y.size == 0 or np.all(y == y[0]):
        raise ValueError("need at least one row of each class")


def gnb_log_likelihoods(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-class ``log N(x; mu_c, sigma_c) + log prior_c`` under feature independence, shape ``(n, 2)``."""
    out = np.empty((len(X), 2))
    for c in (0, 1):
        Xc = X[y == c]
        mu = Xc.mean(axis=0)
        sigma = np.maximum(Xc.std(axis=0), SIGMA_FLOOR)
        z = (X - mu) / sigma
        out[:, c] = (
            -0.5 * np.sum(z * z, axis=1)
            - np.sum(np.log(sigma))
            - 0.5 * X.shape[1] * math.log(2 * math.pi)
            + math.log(len(Xc) / len(X))
        )
    return out


def gnb_label_correction(data: LabeledDataset) -> LabeledDataset:
    """Relabel every row to the class with the larger Gaussian log-likelihood.

    Class means, stds and priors come from the current labels. Exact ties
    keep the original label. Single pass; the input is not modified.
    """
    X, y = data.X, data.y
    _require_both_classes(y)
    ll = gnb_log_likelihoods(X, y)
    new = np.where(ll[:, 1] > ll[:, 0], 1, np.where(ll[:, 0] > ll[:, 1], 0, y))
    return data.with_labels(new)


def class_weights(data: LabeledDataset | Sequence[int]) -> tuple[float, float]:
    """Inverse-frequency weights ``K / (2 * count_c)``; balanced data gives ``(1, 1)``."""
    y = data.y if isinstance(data, LabeledDataset) else np.asarray(data, dtype=int)
    _require_both_classes(y)
    k = y.size
    n1 = int(np.count_nonzero(y))
    n0 = k - n1
    return k / (2 * n0), k / (2 * n1)


def urgency_score(labels: Sequence[int]) -> float:
    if len(labels) == 0:
        raise ValueError("urgency score of an empty session")
    return float(np.mean(labels))


def write_segments_csv(path, rows: Sequence[SegmentFeatures]) -> None:
    """Feature columns in canonical order plus ``label`` (blank when unlabeled)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*FEATURE_NAMES, "label"])
        for r in rows:
            w.writerow([*(repr(float(v)) for v in r.values), "" if r.label is None else r.label])


def read_segments_csv(path) -> list[SegmentFeatures]:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(FEATURE_NAMES) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing feature columns {sorted(missing)}")
        rows = []
        for k, rec in enumerate(reader):
            label = rec.get("label", "")
            rows.append(
                SegmentFeatures(
                    np.array([float(rec[n]) for n in FEATURE_NAMES]),
                    None if label in ("", None) else int(label),
                    k,
                )
            )
    return rows
