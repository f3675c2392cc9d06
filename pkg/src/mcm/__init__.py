"""Comfort-aware passenger/driver matching.

Passenger comfort zones come from boosted tree classifiers, driver operating
zones from quantile boxes, compatibility from the volume of their overlap,
and assignments from an alpha-weighted comfort/distance objective.
"""

from .comfort import BoostedModel, ComfortRegion, Hyperparameters, compatibility, extract_region, train
from .features import LabeledDataset, RideTrace, SegmentFeatures, extract_features, segment
from .geometry import BoundingDomain, HyperRect, RegionUnion, intersect_volume, union_intersect_volume, volume
from .matching import Assignment, MatchInstance, alpha_sweep, jaccard, solve
from .profile import DriverProfile, build_profile

__version__ = "0.1.0"

__all__ = [
    "Assignment", "BoostedModel", "BoundingDomain", "ComfortRegion", "DriverProfile", "HyperRect",
    "Hyperparameters", "LabeledDataset", "MatchInstance", "RegionUnion", "RideTrace", "SegmentFeatures",
    "alpha_sweep", "build_profile", "compatibility", "extract_features", "extract_region", "intersect_volume",
    "jaccard", "segment", "solve", "train", "union_intersect_volume", "volume",
]
