"""Comfort/distance trade-off assignment between passengers and drivers.

Utility of a pair is ``alpha * A[i, j] - (1 - alpha) * D[i, j]`` with ``A`` the
compatibility matrix and ``D`` distances scaled into [0, 1]. ``solve``
maximizes total utility over one-to-one matchings that cover the smaller
side.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .hungarian import lexicographic_refine, solve_min

SWEEP_COLUMNS = ("alpha", "jaccard_vs_distance", "jaccard_vs_comfort", "total_distance", "total_compatibility")


def normalize_distances(D_raw) -> np.ndarray:
    """Divide by the global maximum; an all-zero matrix stays zero."""
    D = np.array(D_raw, dtype=float)
    if not np.all(np.isfinite(D)):
        raise ValueError("distances must be finite")
    if np.any(D < 0):
        raise ValueError("distances must be non-negative")
    top = D.max() if D.size else 0.0
    return D / top if top > 0 else np.zeros_like(D)


def euclidean_distances(passenger_xy, driver_xy) -> np.ndarray:
    P = np.asarray(passenger_xy, dtype=float).reshape(-1, 2)
    Q = np.asarray(driver_xy, dtype=float).reshape(-1, 2)
    return np.sqrt(((P[:, None, :] - Q[None, :, :]) ** 2).sum(axis=-1))


@dataclass(frozen=True, eq=False)
class MatchInstance:
    """Passengers and drivers with positions, compatibility ``A`` and normalized distances ``D``."""

    A: np.ndarray
    D: np.ndarray
    passenger_ids: tuple[str, ...] = ()
    driver_ids: tuple[str, ...] = ()
    passenger_xy: Optional[np.ndarray] = None
    driver_xy: Optional[np.ndarray] = None

    def __post_init__(self):
        A = np.array(self.A, dtype=float, ndmin=2)
        D = np.array(self.D, dtype=float, ndmin=2)
        if A.shape != D.shape:
            raise ValueError(f"A {A.shape} and D {D.shape} shapes differ")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(D))):
            raise ValueError("A and D must be finite")
        if np.any(A < 0) or np.any(A > 1):
            raise ValueError("compatibility scores must lie in [0, 1]")
        n_p, n_d = A.shape
        pids = tuple(self.passenger_ids) or tuple(f"p{i}" for i in range(n_p))
        dids = tuple(self.driver_ids) or tuple(f"d{j}" for j in range(n_d))
        if len(pids) != n_p or len(dids) != n_d:
            raise ValueError("id lists do not match matrix shape")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "passenger_ids", pids)
        object.__setattr__(self, "driver_ids", dids)

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    def utility(self, alpha: float) -> np.ndarray:
        return alpha * self.A - (1.0 - alpha) * self.D

    @classmethod
    def from_positions(cls, passenger_xy, driver_xy, A, passenger_ids=(), driver_ids=()) -> "MatchInstance":
        D = normalize_distances(euclidean_distances(passenger_xy, driver_xy))
        return cls(A, D, tuple(passenger_ids), tuple(driver_ids),
                   np.asarray(passenger_xy, dtype=float), np.asarray(driver_xy, dtype=float))

    @classmethod
    def from_json(cls, doc: dict, A=None) -> "MatchInstance":
        """Instance file: ``passengers``/``drivers`` lists of ``{id, x, y}``, optional ``A`` and ``D``.

        An explicit ``D`` is treated as raw distances and normalized. ``A``
        given as an argument overrides the file.
        """
        pids = [str(p["id"]) for p in doc["passengers"]]
        dids = [str(d["id"]) for d in doc["drivers"]]
        pxy = np.array([[p["x"], p["y"]] for p in doc["passengers"]], dtype=float).reshape(-1, 2)
        dxy = np.array([[d["x"], d["y"]] for d in doc["drivers"]], dtype=float).reshape(-1, 2)
        if A is None:
            if "A" not in doc:
                raise ValueError("instance has no compatibility matrix A")
            A = doc["A"]
        D_raw = doc["D"] if "D" in doc else euclidean_distances(pxy, dxy)
        return cls(np.array(A, dtype=float).reshape(len(pids), len(dids)),
                   normalize_distances(np.array(D_raw, dtype=float).reshape(len(pids), len(dids))),
                   tuple(pids), tuple(dids), pxy, dxy)


@dataclass(frozen=True)
class Assignment:
    pairs: tuple[tuple[int, int], ...]
    objective_value: float
    alpha: float
    total_distance: float = 0.0
    total_compatibility: float = 0.0

    def __post_init__(self):
        pairs = tuple(sorted((int(i), int(j)) for i, j in self.pairs))
        rows = [i for i, _ in pairs]
        cols = [j for _, j in pairs]
        if len(set(rows)) != len(rows) or len(set(cols)) != len(cols):
            raise ValueError("assignment is not one-to-one")
        object.__setattr__(self, "pairs", pairs)

    def pair_set(self) -> frozenset:
        return frozenset(self.pairs)

    def to_dict(self, instance: Optional[MatchInstance] = None) -> dict:
        d = {
            "alpha": self.alpha,
            "objective_value": self.objective_value,
            "total_distance": self.total_distance,
            "total_compatibility": self.total_compatibility,
            "pairs": [list(p) for p in self.pairs],
        }
        if instance is not None:
            d["matches"] = [
                {"passenger": instance.passenger_ids[i], "driver": instance.driver_ids[j]} for i, j in self.pairs
            ]
        return d


def pair_total(M: np.ndarray, pairs: Iterable[tuple[int, int]]) -> float:
    """Left-to-right sum of ``M`` over ``pairs`` taken in ascending passenger order."""
    total = 0.0
    for i, j in sorted(pairs):
        total += float(M[i, j])
    return total


def solve(instance: MatchInstance, alpha: float, tie_tol: float = 1e-10) -> Assignment:
    """Utility-maximizing one-to-one assignment covering ``min(|P|, |D|)`` pairs.

    Optimal assignments that tie on utility are resolved towards the
    lexicographically smallest pair list (taken over the smaller side).
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    n_p, n_d = instance.shape
    if n_p == 0 or n_d == 0:
        return Assignment((), 0.0, alpha)
    U = instance.utility(alpha)
    transpose = n_p > n_d
    cost = -(U.T if transpose else U)
    col, u, v = solve_min(cost)
    scale = max(1.0, float(np.abs(cost).max()))
    col = lexicographic_refine(cost, col, u, v, tie_tol * scale)
    pairs = [(j, i) if transpose else (i, j) for i, j in enumerate(col)]
    return Assignment(
        tuple(pairs),
        pair_total(U, pairs),
        alpha,
        total_distance=pair_total(instance.D, pairs),
        total_compatibility=pair_total(instance.A, pairs),
    )


def jaccard(m1: Assignment, m2: Assignment) -> float:
    s1, s2 = m1.pair_set(), m2.pair_set()
    union = s1 | s2
    if not union:
        return 1.0
    return len(s1 & s2) / len(union)


@dataclass(frozen=True)
class SweepRecord:
    alpha: float
    assignment: Assignment
    jaccard_vs_distance: float
    jaccard_vs_comfort: float

    @property
    def total_distance(self) -> float:
        return self.assignment.total_distance

    @property
    def total_compatibility(self) -> float:
        return self.assignment.total_compatibility

    def row(self) -> tuple:
        return (self.alpha, self.jaccard_vs_distance, self.jaccard_vs_comfort,
                self.total_distance, self.total_compatibility)


def alpha_sweep(instance: MatchInstance, grid: Sequence[float]) -> list[SweepRecord]:
    """Solve at every alpha in ``grid`` and compare against the alpha=0 and alpha=1 matchings."""
    grid = [float(a) for a in grid]
    if not grid:
        return []
    bad = [a for a in grid if not 0.0 <= a <= 1.0]
    if bad:
        raise ValueError(f"alpha values outside [0, 1]: {bad}")
    by_distance = solve(instance, 0.0)
    by_comfort = solve(instance, 1.0)
    out = []
    for a in grid:
        m = by_distance if a == 0.0 else by_comfort if a == 1.0 else solve(instance, a)
        out.append(SweepRecord(a, m, jaccard(m, by_distance), jaccard(m, by_comfort)))
    return out


def alpha_grid(step: float = 0.1) -> list[float]:
    n = int(round(1.0 / step))
    return [round(k / n, 12) for k in range(n + 1)]


def write_sweep_csv(path, records: Sequence[SweepRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in records:
            w.writerow([repr(float(x)) for x in r.row()])
