"""Axis-aligned hyperrectangles, disjoint unions of them, and their volumes.

Exact volumes are closed form. The Monte Carlo estimator handles regions that
are only available as a point-membership predicate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

MemberFn = Callable[[np.ndarray], np.ndarray]


class DimensionMismatch(ValueError):
    pass


def _as_bounds(values: Iterable[float]) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class HyperRect:
    """Closed box ``prod_d [lo[d], hi[d]]``. Zero-width dimensions are allowed."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo, hi = _as_bounds(self.lo), _as_bounds(self.hi)
        if lo.size == 0 or lo.shape != hi.shape:
            raise ValueError(f"lo/hi must be non-empty and equal length, got {lo.size} and {hi.size}")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise ValueError("NaN bound")
        if np.any(lo > hi):
            bad = int(np.argmax(lo > hi))
            raise ValueError(f"lo > hi in dimension {bad}: {lo[bad]} > {hi[bad]}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    def volume(self) -> float:
        return volume(self)

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.all((pts >= self.lo) & (pts <= self.hi), axis=1)

    def clip(self, other: "HyperRect") -> "HyperRect":
        """Intersection with ``other``; collapses to a degenerate box when they are disjoint."""
        _check_dims(self, other)
        lo = np.maximum(self.lo, other.lo)
        hi = np.minimum(self.hi, other.hi)
        return HyperRect(lo, np.maximum(lo, hi))

    def __eq__(self, other):
        if not isinstance(other, HyperRect):
            return NotImplemented
        return np.array_equal(self.lo, other.lo) and np.array_equal(self.hi, other.hi)

    def __hash__(self):
        return hash((self.lo.tobytes(), self.hi.tobytes()))

    def __repr__(self):
        return f"HyperRect(lo={self.lo.tolist()}, hi={self.hi.tolist()})"

    def to_dict(self) -> dict:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "HyperRect":
        return cls(d["lo"], d["hi"])


@dataclass(frozen=True)
class RegionUnion:
    """Union of pairwise interior-disjoint boxes.

    Disjointness is the caller's responsibility (``comfort.extract_region``
    guarantees it); overlapping boxes make ``union_intersect_volume`` an
    over-count.
    """

    dimension: int
    boxes: tuple[HyperRect, ...] = field(default_factory=tuple)

    def __post_init__(self):
        boxes = tuple(self.boxes)
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        for b in boxes:
            if b.dim != self.dimension:
                raise DimensionMismatch(f"box of dimension {b.dim} in a {self.dimension}-d region")
        object.__setattr__(self, "boxes", boxes)

    def __len__(self):
        return len(self.boxes)

    def __iter__(self):
        return iter(self.boxes)

    def volume(self) -> float:
        return float(sum(volume(b) for b in self.boxes))

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        hit = np.zeros(len(pts), dtype=bool)
        for b in self.boxes:
            hit |= b.contains(pts)
        return hit

    def to_dict(self) -> dict:
        return {"dimension": self.dimension, "boxes": [b.to_dict() for b in self.boxes]}

    @classmethod
    def from_dict(cls, d: dict) -> "RegionUnion":
        return cls(int(d["dimension"]), tuple(HyperRect.from_dict(b) for b in d["boxes"]))


@dataclass(frozen=True)
class BoundingDomain:
    """Box covering the feature space of interest; every width must be positive."""

    bounds: HyperRect

    def __post_init__(self):
        if np.any(self.bounds.widths <= 0):
            raise ValueError("bounding domain needs strictly positive width in every dimension")

    @property
    def dim(self) -> int:
        return self.bounds.dim

    @classmethod
    def around(cls, points: np.ndarray, pad: float = 0.01, min_width: float = 1e-6) -> "BoundingDomain":
        """Smallest box containing ``points``, widened by ``pad`` of its width on each side."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        width = np.maximum(hi - lo, min_width)
        return cls(HyperRect(lo - pad * width, lo + (1 + pad) * width))

    def to_dict(self) -> dict:
        return self.bounds.to_dict()

    @classmethod
    def from_dict(cls, d: dict) -> "BoundingDomain":
        return cls(HyperRect.from_dict(d))


def _check_dims(a: HyperRect, b: HyperRect) -> None:
    if a.dim != b.dim:
        raise DimensionMismatch(f"dimension mismatch: {a.dim} vs {b.dim}")


def volume(r: HyperRect) -> float:
    return float(np.prod(r.hi - r.lo))


def intersect_volume(a: HyperRect, b: HyperRect) -> float:
    _check_dims(a, b)
    overlap = np.minimum(a.hi, b.hi) - np.maximum(a.lo, b.lo)
    return float(np.prod(np.maximum(overlap, 0.0)))


def union_intersect_volume(region: RegionUnion, zone: HyperRect) -> float:
    """Measure of ``(union of region boxes) & zone``; exact because the boxes are disjoint."""
    if region.dimension != zone.dim:
        raise DimensionMismatch(f"dimension mismatch: region {region.dimension} vs zone {zone.dim}")
    if not region.boxes:
        return 0.0
    lo = np.stack([b.lo for b in region.boxes])
    hi = np.stack([b.hi for b in region.boxes])
    overlap = np.maximum(np.minimum(hi, zone.hi) - np.maximum(lo, zone.lo), 0.0)
    return float(np.sum(np.prod(overlap, axis=1)))


def mc_region_intersect_volume(
    member: MemberFn,
    zone: HyperRect,
    domain: BoundingDomain,
    samples: int,
    seed: int,
    batch: int = 65536,
) -> tuple[float, float]:
    """Estimate the volume of ``{x in zone : member(x)}`` by uniform sampling inside the zone.

    ``member`` receives an ``(n, N)`` array and returns a boolean mask. The
    zone is clipped to the domain first. Returns ``(estimate, std_error)``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    _check_dims(zone, domain.bounds)
    zone = zone.clip(domain.bounds)
    vol = volume(zone)
    if vol <= 0.0:
        return 0.0, 0.0
    rng = np.random.default_rng(seed)
    hits = 0
    remaining = samples
    while remaining > 0:
        n = min(batch, remaining)
        pts = zone.lo + rng.random((n, zone.dim)) * zone.widths
        hits += int(np.count_nonzero(member(pts)))
        remaining -= n
    p = hits / samples
    return vol * p, vol * float(np.sqrt(p * (1.0 - p) / samples))
