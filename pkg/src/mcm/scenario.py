"""Synthetic drivers, passengers, traces and labels with known ground truth.

Drivers produce kinematic traces; the traces go through the real feature
extractor; each passenger's comfort truth is a union of boxes in feature
space and labels are that membership with seeded flips.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .features import FEATURE_NAMES, LabeledDataset, RideTrace, SegmentFeatures, trace_features
from .geometry import HyperRect, RegionUnion

# time constants of the trace generator, seconds
JERK_TAU = 2.0
TARGET_TAU = 30.0
ACCEL_TAU = 1.0
SPEED_GAIN = 0.5  # 1/s, speed error -> desired acceleration


@dataclass(frozen=True)
class DriverStyle:
    base_speed: float
    speed_var: float
    accel_scale: float
    jerk_scale: float
    seed: int = 0

    def __post_init__(self):
        if min(self.base_speed, self.speed_var, self.accel_scale, self.jerk_scale) < 0:
            raise ValueError("driver style scales must be non-negative")


@dataclass(frozen=True)
class GroundTruthComfort:
    true_region: RegionUnion
    label_noise: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.label_noise < 0.5:
            raise ValueError("label_noise must be in [0, 0.5)")


def _ou(rng: np.random.Generator, n: int, dt: float, tau: float) -> np.ndarray:
    """Unit-variance Ornstein-Uhlenbeck path of length n."""
    a = math.exp(-dt / tau)
    s = math.sqrt(1.0 - a * a)
    z = rng.standard_normal(n)
    out = np.empty(n)
    x = z[0]
    for k in range(n):
        if k:
            x = a * x + s * z[k]
        out[k] = x
    return out


def gen_trace(style: DriverStyle, duration_s: float, rate_hz: float = 10.0) -> RideTrace:
    """Bounded-jerk kinematics sampled at ``rate_hz``.

    A bounded random walk (tanh of an OU process) times ``jerk_scale`` drives
    the jerk, together with a pull towards the acceleration that tracks a
    slowly wandering target speed ``base_speed +- speed_var``. Acceleration
    is clipped to ``+-accel_scale`` and speed at zero. Stored acceleration
    and jerk are the forward differences of stored speed and acceleration,
    so the series are mutually consistent.
    """
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    if rate_hz <= 0:
        raise ValueError("rate must be positive")
    dt = 1.0 / rate_hz
    n = max(1, int(round(duration_s * rate_hz)))
    rng = np.random.default_rng(style.seed)
    walk = np.tanh(_ou(rng, n + 1, dt, JERK_TAU))
    target = style.base_speed + style.speed_var * np.tanh(_ou(rng, n + 1, dt, TARGET_TAU))

    speed = np.empty(n + 2)
    speed[0] = style.base_speed
    a = 0.0
    amax, js = style.accel_scale, style.jerk_scale
    for k in range(n + 1):
        desired = min(max(SPEED_GAIN * (target[k] - speed[k]), -amax), amax)
        jerk_cmd = js * walk[k] + (desired - a) / ACCEL_TAU
        speed[k + 1] = max(0.0, speed[k] + a * dt)
        a = min(max(a + jerk_cmd * dt, -amax), amax)

    accel = np.diff(speed) / dt
    jerk = np.diff(accel) / dt
    t = np.arange(n) * dt
    return RideTrace(t, speed[:n], accel[:n], jerk[:n], rate_hz)


def gen_labels(truth: GroundTruthComfort, features: Sequence[SegmentFeatures], seed: int,
               passenger_id: str = "") -> LabeledDataset:
    """Label 0 inside the true comfort region, 1 outside, then flip each with probability ``label_noise``."""
    X = np.array([f.values for f in features], dtype=float).reshape(len(features), -1)
    if len(features) and X.shape[1] != truth.true_region.dimension:
        raise ValueError(f"features have {X.shape[1]} dims, truth region {truth.true_region.dimension}")
    y = np.where(truth.true_region.contains(X), 0, 1) if len(features) else np.zeros(0, dtype=int)
    rng = np.random.default_rng(seed)
    flip = rng.random(len(y)) < truth.label_noise
    y = np.where(flip, 1 - y, y)
    rows = tuple(SegmentFeatures(f.values, int(l), f.segment_index) for f, l in zip(features, y))
    return LabeledDataset(rows, passenger_id)


def uniform_positions(n: int, extent: float, rng: np.random.Generator) -> np.ndarray:
    return rng.random((n, 2)) * extent


# --- scenario configuration ------------------------------------------------


@dataclass
class DriverSpec:
    id: str
    base_speed: float
    speed_var: float
    accel_scale: float
    jerk_scale: float


@dataclass
class PassengerSpec:
    """``truth`` is a list of boxes, each a mapping feature name -> ``[lo, hi]``.

    A bound may be a number, ``null`` (unbounded) or ``{"q": p}``, meaning
    the p-quantile of that feature over all generated segments.
    """

    id: str
    truth: list
    epsilon: float = 0.5
    label_noise: float = 0.05


@dataclass
class ScenarioConfig:
    drivers: list
    passengers: list
    seed: int = 0
    rate_hz: float = 10.0
    window_seconds: float = 10.0
    sessions_per_driver: int = 5
    session_seconds: float = 300.0
    map_extent: float = 10.0

    def validate(self) -> None:
        if not self.drivers:
            raise ValueError("scenario needs at least one driver")
        if not self.passengers:
            raise ValueError("scenario needs at least one passenger")
        for name in ("rate_hz", "window_seconds", "session_seconds", "map_extent"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.sessions_per_driver < 1:
            raise ValueError("sessions_per_driver must be >= 1")
        ids = [d.id for d in self.drivers] + [p.id for p in self.passengers]
        if len(set(ids)) != len(ids):
            raise ValueError("driver and passenger ids must be unique")
        for p in self.passengers:
            if not 0 < p.epsilon < 1:
                raise ValueError(f"passenger {p.id}: epsilon must be in (0, 1)")
            if not 0 <= p.label_noise < 0.5:
                raise ValueError(f"passenger {p.id}: label_noise must be in [0, 0.5)")
            for box in p.truth:
                unknown = set(box) - set(FEATURE_NAMES)
                if unknown:
                    raise ValueError(f"passenger {p.id}: unknown truth features {sorted(unknown)}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        drivers = [DriverSpec(**x) for x in d.pop("drivers", [])]
        passengers = [PassengerSpec(**x) for x in d.pop("passengers", [])]
        cfg = cls(drivers=drivers, passengers=passengers, **d)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def default_config(n_drivers: int = 5, n_passengers: int = 13, seed: int = 2024) -> ScenarioConfig:
    """Demo scenario: drivers from calm to aggressive, passengers with one- or two-feature comfort boxes."""
    rng = np.random.default_rng(seed)
    drivers = []
    for j in range(n_drivers):
        level = j / max(1, n_drivers - 1)
        drivers.append(DriverSpec(
            id=f"d{j}",
            base_speed=round(8.0 + 8.0 * level + rng.uniform(-1, 1), 3),
            speed_var=round(2.0 + 3.0 * level, 3),
            accel_scale=round(1.0 + 2.0 * level, 3),
            jerk_scale=round(0.6 + 1.6 * level, 3),
        ))
    candidates = ["speed_max", "accel_std", "jerk_p75", "accel_max", "jerk_mean", "speed_mean", "jerk_std"]
    passengers = []
    for i in range(n_passengers):
        feats = rng.choice(candidates, size=1 + int(rng.random() < 0.5), replace=False)
        q = 0.5 if len(feats) == 1 else 0.7
        box = {str(f): [None, {"q": round(q + rng.uniform(-0.08, 0.08), 3)}] for f in feats}
        passengers.append(PassengerSpec(id=f"p{i}", truth=[box], epsilon=0.5, label_noise=0.05))
    cfg = ScenarioConfig(drivers=drivers, passengers=passengers, seed=seed)
    cfg.validate()
    return cfg


def resolve_truth(spec: PassengerSpec, X: np.ndarray) -> RegionUnion:
    """Turn a truth spec into absolute boxes, resolving quantile bounds against ``X``."""
    boxes = []
    for box in spec.truth:
        lo = np.full(len(FEATURE_NAMES), -np.inf)
        hi = np.full(len(FEATURE_NAMES), np.inf)
        for name, (b_lo, b_hi) in box.items():
            d = FEATURE_NAMES.index(name)
            for bound, arr in ((b_lo, lo), (b_hi, hi)):
                if bound is None:
                    continue
                arr[d] = float(np.quantile(X[:, d], bound["q"])) if isinstance(bound, dict) else float(bound)
        boxes.append(HyperRect(lo, hi))
    return RegionUnion(len(FEATURE_NAMES), tuple(boxes))


@dataclass
class Session:
    driver_id: str
    index: int
    trace: RideTrace
    segments: list = field(default_factory=list)

    @property
    def name(self) -> str:
        return f"{self.driver_id}_s{self.index}"


@dataclass
class Scenario:
    config: ScenarioConfig
    sessions: list
    truths: dict
    labels: dict  # passenger id -> LabeledDataset over the pooled segments, session order
    passenger_xy: np.ndarray
    driver_xy: np.ndarray

    def pooled_segments(self) -> list:
        return [s for sess in self.sessions for s in sess.segments]

    def driver_segments(self, driver_id: str) -> list:
        return [s for sess in self.sessions if sess.driver_id == driver_id for s in sess.segments]


def _sub_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


def generate(config: ScenarioConfig) -> Scenario:
    """Every output is a pure function of ``config`` (including its seed)."""
    config.validate()
    sessions = []
    for j, d in enumerate(config.drivers):
        for k in range(config.sessions_per_driver):
            style = DriverStyle(d.base_speed, d.speed_var, d.accel_scale, d.jerk_scale, _sub_seed(config.seed, 1, j, k))
            trace = gen_trace(style, config.session_seconds, config.rate_hz)
            sessions.append(Session(d.id, k, trace, trace_features(trace, config.window_seconds)))
    pooled = [s for sess in sessions for s in sess.segments]
    X = np.array([s.values for s in pooled])
    truths, labels = {}, {}
    for i, p in enumerate(config.passengers):
        truth = GroundTruthComfort(resolve_truth(p, X), p.label_noise)
        truths[p.id] = truth
        labels[p.id] = gen_labels(truth, pooled, _sub_seed(config.seed, 2, i), p.id)
    pos_rng = np.random.default_rng(_sub_seed(config.seed, 3))
    passenger_xy = uniform_positions(len(config.passengers), config.map_extent, pos_rng)
    driver_xy = uniform_positions(len(config.drivers), config.map_extent, pos_rng)
    return Scenario(config, sessions, truths, labels, passenger_xy, driver_xy)
