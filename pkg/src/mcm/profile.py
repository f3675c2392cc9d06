"""Driver operating zones: per-feature quantile boxes over historical segments."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .features import FEATURE_NAMES, SegmentFeatures
from .geometry import HyperRect


@dataclass(frozen=True)
class DriverProfile:
    driver_id: str
    zone: HyperRect
    quantile_lo: float = 0.05
    quantile_hi: float = 0.95
    sample_count: int = 0

    def __post_init__(self):
        if not 0 <= self.quantile_lo < self.quantile_hi <= 1:
            raise ValueError(f"need 0 <= q_lo < q_hi <= 1, got ({self.quantile_lo}, {self.quantile_hi})")

    def to_dict(self) -> dict:
        names = FEATURE_NAMES if self.zone.dim == len(FEATURE_NAMES) else [f"x{d}" for d in range(self.zone.dim)]
        return {
            "driver_id": self.driver_id,
            "quantiles": [self.quantile_lo, self.quantile_hi],
            "feature_names": list(names),
            "lo": self.zone.lo.tolist(),
            "hi": self.zone.hi.tolist(),
            "sample_count": self.sample_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DriverProfile":
        q_lo, q_hi = d["quantiles"]
        return cls(str(d["driver_id"]), HyperRect(d["lo"], d["hi"]), float(q_lo), float(q_hi), int(d["sample_count"]))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "DriverProfile":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def build_profile(
    samples: Union[Sequence[SegmentFeatures], np.ndarray],
    q_lo: float = 0.05,
    q_hi: float = 0.95,
    driver_id: str = "",
) -> DriverProfile:
    """Zone ``prod_d [Q_d(q_lo), Q_d(q_hi)]`` with linearly interpolated quantiles."""
    if isinstance(samples, np.ndarray):
        X = np.atleast_2d(samples).astype(float)
    else:
        X = np.array([s.values for s in samples], dtype=float)
    if X.size == 0:
        raise ValueError("cannot build a driver profile from zero samples")
    if not 0 <= q_lo < q_hi <= 1:
        raise ValueError(f"need 0 <= q_lo < q_hi <= 1, got ({q_lo}, {q_hi})")
    lo, hi = np.quantile(X, [q_lo, q_hi], axis=0)
    # interpolation can put lo a hair above hi when a column is constant
    hi = np.maximum(lo, hi)
    return DriverProfile(driver_id, HyperRect(lo, hi), q_lo, q_hi, len(X))
