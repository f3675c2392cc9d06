"""Command-line pipeline: gen -> features -> train -> profile -> score -> match / sweep.

All commands share one run directory (``--out``). ``gen`` writes the
resolved run configuration to ``<out>/config.json``; later commands read it
unless ``--config`` points elsewhere. Exit codes: 0 success, 1 validation
error, 2 runtime or data error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import comfort, features, matching, profile, scenario
from .geometry import BoundingDomain

log = logging.getLogger("mcm")

DEFAULT_TRAIN = {"test_fraction": 0.2, "gnb_correction": False, "hyperparameters": {}}
DEFAULT_SCORE = {"mode": "auto", "mc_samples": 20000, "cell_budget": comfort.DEFAULT_CELL_BUDGET}
REPORT_COLUMNS = ("passenger", "row", "precision", "recall", "f1", "support")


class ValidationError(Exception):
    """Bad arguments or configuration; exit code 1."""


class DataError(Exception):
    """Missing or unusable artifacts; exit code 2."""


# --- helpers ---------------------------------------------------------------


def _dump_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _load_json(path: Path):
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _finite_or_none(values) -> list:
    return [float(v) if np.isfinite(v) else None for v in values]


def _parse_floats(text: str, name: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ValidationError(f"{name}: expected comma-separated numbers, got {text!r}") from None


def _run_config(args) -> dict:
    path = Path(args.config) if args.config else Path(args.out) / "config.json"
    if not path.is_file():
        if args.config:
            raise ValidationError(f"config file not found: {path}")
        return {}
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise ValidationError(f"{path}: invalid JSON ({e})") from None
    # a bare scenario config is accepted too
    if "drivers" in doc and "scenario" not in doc:
        doc = {"scenario": doc}
    return doc


def _section(cfg: dict, name: str, defaults: dict) -> dict:
    out = dict(defaults)
    out.update(cfg.get(name, {}))
    return out


def _seed(args, cfg: dict) -> int:
    if args.seed is not None:
        return args.seed
    return int(cfg.get("seed", cfg.get("scenario", {}).get("seed", 0)))


def _ids(out: Path) -> tuple[list[str], list[str]]:
    doc = _load_json(out / "positions.json")
    return [str(p["id"]) for p in doc["passengers"]], [str(d["id"]) for d in doc["drivers"]]


def _sub_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


# --- gen ------------------------------------------------------------------


def cmd_gen(args) -> None:
    out = Path(args.out)
    cfg = _run_config(args) if args.config else {}
    if "scenario" in cfg:
        scen_doc = dict(cfg["scenario"])
        if args.seed is not None:
            scen_doc["seed"] = args.seed
        try:
            scen_cfg = scenario.ScenarioConfig.from_dict(scen_doc)
        except (TypeError, ValueError) as e:
            raise ValidationError(f"scenario config: {e}") from None
    else:
        scen_cfg = scenario.default_config(seed=args.seed if args.seed is not None else 2024)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "traces").mkdir(exist_ok=True)
        (out / "labels").mkdir(exist_ok=True)
    except OSError as e:
        raise DataError(f"cannot write to {out}: {e}") from None

    scen = scenario.generate(scen_cfg)
    run_cfg = dict(cfg)
    run_cfg["scenario"] = scen_cfg.to_dict()
    run_cfg.setdefault("seed", scen_cfg.seed)
    _dump_json(out / "config.json", run_cfg)

    for sess in scen.sessions:
        sess.trace.to_csv(out / "traces" / f"{sess.name}.csv")
    seg_refs = [(sess.name, k) for sess in scen.sessions for k in range(len(sess.segments))]
    for pid, ds in scen.labels.items():
        with open(out / "labels" / f"{pid}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["trace", "segment_index", "label"])
            for (name, k), y in zip(seg_refs, ds.y):
                w.writerow([name, k, int(y)])
    _dump_json(out / "truth.json", {
        pid: {"label_noise": t.label_noise,
              "boxes": [{"lo": _finite_or_none(b.lo), "hi": _finite_or_none(b.hi)} for b in t.true_region]}
        for pid, t in scen.truths.items()
    })
    _dump_json(out / "positions.json", {
        "passengers": [{"id": p.id, "x": float(x), "y": float(y)}
                       for p, (x, y) in zip(scen_cfg.passengers, scen.passenger_xy)],
        "drivers": [{"id": d.id, "x": float(x), "y": float(y)}
                    for d, (x, y) in zip(scen_cfg.drivers, scen.driver_xy)],
    })
    log.info("generated %d sessions, %d passengers, %d drivers in %s",
             len(scen.sessions), len(scen_cfg.passengers), len(scen_cfg.drivers), out)


# --- features -------------------------------------------------------------


def _scenario_cfg(cfg: dict) -> scenario.ScenarioConfig:
    if "scenario" not in cfg:
        raise DataError("run config has no scenario section; run `gen` first")
    return scenario.ScenarioConfig.from_dict(cfg["scenario"])


def cmd_features(args) -> None:
    out = Path(args.out)
    scen_cfg = _scenario_cfg(_run_config(args))
    trace_dir = out / "traces"
    per_trace: dict[str, list] = {}
    for d in scen_cfg.drivers:
        rows = []
        for k in range(scen_cfg.sessions_per_driver):
            name = f"{d.id}_s{k}"
            path = trace_dir / f"{name}.csv"
            if not path.is_file():
                raise DataError(f"missing trace file: {path}")
            segs = features.trace_features(features.RideTrace.from_csv(path, scen_cfg.rate_hz), scen_cfg.window_seconds)
            per_trace[name] = segs
            rows.extend(segs)
        (out / "segments" / "drivers").mkdir(parents=True, exist_ok=True)
        features.write_segments_csv(out / "segments" / "drivers" / f"{d.id}.csv", rows)

    (out / "segments" / "passengers").mkdir(parents=True, exist_ok=True)
    for p in scen_cfg.passengers:
        path = out / "labels" / f"{p.id}.csv"
        if not path.is_file():
            raise DataError(f"missing label file: {path}")
        rows = []
        with open(path, newline="", encoding="utf-8") as fh:
            for rec in csv.DictReader(fh):
                segs = per_trace.get(rec["trace"])
                k = int(rec["segment_index"])
                if segs is None or k >= len(segs):
                    raise DataError(f"{path}: label refers to unknown segment {rec['trace']}#{k}")
                rows.append(features.SegmentFeatures(segs[k].values, int(rec["label"]), len(rows)))
        features.write_segments_csv(out / "segments" / "passengers" / f"{p.id}.csv", rows)


# --- train ----------------------------------------------------------------


def classification_report(y_true: np.ndarray, y_pred: np.ndarray) -> list[tuple[str, float, float, float, int]]:
    """Per-class precision/recall/F1, accuracy, macro and support-weighted averages."""
    rows = []
    for c in (0, 1):
        tp = int(np.sum((y_pred == c) & (y_true == c)))
        n_pred, n_true = int(np.sum(y_pred == c)), int(np.sum(y_true == c))
        p = tp / n_pred if n_pred else 0.0
        r = tp / n_true if n_true else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        rows.append((str(c), p, r, f, n_true))
    n = len(y_true)
    acc = float(np.mean(y_true == y_pred)) if n else 0.0
    rows.append(("accuracy", acc, acc, acc, n))
    per = np.array([r[1:4] for r in rows[:2]])
    support = np.array([r[4] for r in rows[:2]], dtype=float)
    macro = per.mean(axis=0)
    weighted = (per * support[:, None]).sum(axis=0) / support.sum() if support.sum() else np.zeros(3)
    rows.append(("macro avg", *map(float, macro), n))
    rows.append(("weighted avg", *map(float, weighted), n))
    return rows


def split_indices(n: int, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    n_test = int(round(test_fraction * n))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def cmd_train(args) -> None:
    out = Path(args.out)
    cfg = _run_config(args)
    scen_cfg = _scenario_cfg(cfg)
    tcfg = _section(cfg, "train", DEFAULT_TRAIN)
    if not 0 <= tcfg["test_fraction"] < 1:
        raise ValidationError("train.test_fraction must be in [0, 1)")
    try:
        hyper = comfort.Hyperparameters(**tcfg["hyperparameters"])
    except (TypeError, ValueError) as e:
        raise ValidationError(f"train.hyperparameters: {e}") from None
    seed = _seed(args, cfg)
    (out / "models").mkdir(parents=True, exist_ok=True)

    report_rows = []
    trained = 0
    for i, p in enumerate(scen_cfg.passengers):
        path = out / "segments" / "passengers" / f"{p.id}.csv"
        if not path.is_file():
            raise DataError(f"missing segment file: {path}")
        data = features.LabeledDataset(tuple(features.read_segments_csv(path)), p.id)
        train_idx, test_idx = split_indices(len(data), tcfg["test_fraction"], _sub_seed(seed, 4, i))
        train_set = data.subset(train_idx)
        try:
            if tcfg["gnb_correction"]:
                train_set = features.gnb_label_correction(train_set)
            model = comfort.train(train_set, hyper, epsilon=p.epsilon)
        except ValueError as e:
            log.warning("skipping passenger %s: %s", p.id, e)
            continue
        model.save(out / "models" / f"{p.id}.json")
        trained += 1
        eval_set = data.subset(test_idx) if len(test_idx) else train_set
        pred = model.classify(eval_set.X)
        for row in classification_report(eval_set.y, pred):
            report_rows.append((p.id, *row))

    with open(out / "report.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for pid, name, pr, rc, f1, sup in report_rows:
            w.writerow([pid, name, repr(float(pr)), repr(float(rc)), repr(float(f1)), sup])
    if trained == 0:
        raise DataError("no passenger had trainable (two-class) data")


# --- profile --------------------------------------------------------------


def _quantiles(args, cfg: dict) -> tuple[float, float]:
    if args.quantiles:
        q = _parse_floats(args.quantiles, "--quantiles")
    else:
        q = cfg.get("profile", {}).get("quantiles", [0.05, 0.95])
    if len(q) != 2 or not 0 <= q[0] < q[1] <= 1:
        raise ValidationError(f"quantiles must be two numbers 0 <= lo < hi <= 1, got {q}")
    return float(q[0]), float(q[1])


def cmd_profile(args) -> None:
    out = Path(args.out)
    cfg = _run_config(args)
    q_lo, q_hi = _quantiles(args, cfg)
    _, driver_ids = _ids(out)
    (out / "profiles").mkdir(parents=True, exist_ok=True)
    for did in driver_ids:
        path = out / "segments" / "drivers" / f"{did}.csv"
        if not path.is_file():
            raise DataError(f"missing segment file: {path}")
        rows = features.read_segments_csv(path)
        if not rows:
            raise DataError(f"{path}: no segments")
        profile.build_profile(rows, q_lo, q_hi, did).save(out / "profiles" / f"{did}.json")


# --- score ----------------------------------------------------------------


def _score_params(args, cfg: dict) -> dict:
    sc = _section(cfg, "score", DEFAULT_SCORE)
    if args.mc_samples is not None:
        sc["mc_samples"] = args.mc_samples
    if args.cell_budget is not None:
        sc["cell_budget"] = args.cell_budget
    if getattr(args, "mode", None):
        sc["mode"] = args.mode
    if sc["mode"] not in ("auto", "exact", "mc"):
        raise ValidationError(f"score mode must be auto, exact or mc, got {sc['mode']!r}")
    if int(sc["mc_samples"]) < 1 or int(sc["cell_budget"]) < 1:
        raise ValidationError("--mc-samples and --cell-budget must be positive")
    return sc


def feature_domain(out: Path, passenger_ids, driver_ids) -> BoundingDomain:
    """Padded bounding box of every passenger and driver segment in the run."""
    paths = [out / "segments" / "passengers" / f"{p}.csv" for p in passenger_ids]
    paths += [out / "segments" / "drivers" / f"{d}.csv" for d in driver_ids]
    X = []
    for path in paths:
        if not path.is_file():
            raise DataError(f"missing segment file: {path}")
        X.extend(r.values for r in features.read_segments_csv(path))
    return BoundingDomain.around(np.array(X))


def compute_compatibility(out: Path, sc: dict, seed: int) -> dict:
    """A matrix for every (passenger, driver) pair, cached per pair under ``<out>/cache``."""
    passenger_ids, driver_ids = _ids(out)
    domain = feature_domain(out, passenger_ids, driver_ids)
    cache_dir = out / "cache"
    cache_dir.mkdir(parents=True, exist_ok=True)
    A = np.zeros((len(passenger_ids), len(driver_ids)))
    se = np.zeros_like(A)
    modes = []
    domain_key = json.dumps(domain.to_dict(), sort_keys=True)
    profiles = {}
    for did in driver_ids:
        path = out / "profiles" / f"{did}.json"
        if not path.is_file():
            raise DataError(f"missing profile file: {path}")
        profiles[did] = (profile.DriverProfile.load(path), hashlib.sha256(path.read_bytes()).hexdigest())
    for i, pid in enumerate(passenger_ids):
        mpath = out / "models" / f"{pid}.json"
        if not mpath.is_file():
            raise DataError(f"missing model file: {mpath}")
        model = comfort.BoostedModel.load(mpath)
        model_hash = hashlib.sha256(mpath.read_bytes()).hexdigest()
        mode = sc["mode"]
        if mode == "auto":
            mode = "exact" if comfort.cell_count(model, domain) <= sc["cell_budget"] else "mc"
        region = None
        row_modes = []
        for j, did in enumerate(driver_ids):
            prof, prof_hash = profiles[did]
            pair_seed = _sub_seed(seed, 5, i, j)
            key_src = json.dumps([model_hash, prof_hash, mode, pair_seed, int(sc["mc_samples"]), domain_key])
            key = hashlib.sha256(key_src.encode()).hexdigest()[:32]
            cpath = cache_dir / f"{key}.json"
            if cpath.is_file():
                hit = _load_json(cpath)
                A[i, j], se[i, j] = hit["value"], hit["std_error"]
            else:
                if mode == "exact" and region is None:
                    region = comfort.extract_region(model, domain, int(sc["cell_budget"]))
                res = comfort.compatibility(region if mode == "exact" else model, prof.zone, domain, mode,
                                            int(sc["mc_samples"]), pair_seed, int(sc["cell_budget"]))
                A[i, j], se[i, j] = res.value, res.std_error
                _dump_json(cpath, {"value": res.value, "std_error": res.std_error, "mode": mode})
            row_modes.append(mode)
        modes.append(row_modes)
    return {
        "passenger_ids": passenger_ids,
        "driver_ids": driver_ids,
        "A": A.tolist(),
        "std_error": se.tolist(),
        "mode": modes,
        "mc_samples": int(sc["mc_samples"]),
        "seed": seed,
        "domain": domain.to_dict(),
    }


def cmd_score(args) -> dict:
    out = Path(args.out)
    cfg = _run_config(args)
    doc = compute_compatibility(out, _score_params(args, cfg), _seed(args, cfg))
    _dump_json(out / "compat.json", doc)
    return doc


# --- match / sweep --------------------------------------------------------


def _instance(args, cfg: dict) -> matching.MatchInstance:
    if args.instance:
        doc = _load_json(Path(args.instance))
        if "A" in doc:
            return matching.MatchInstance.from_json(doc)
        raise ValidationError(f"{args.instance}: instance file has no A matrix")
    out = Path(args.out)
    compat = cmd_score(args)
    return matching.MatchInstance.from_json(_load_json(out / "positions.json"), A=compat["A"])


def _alphas(args, cfg: dict, default: Sequence[float]) -> list[float]:
    alphas = _parse_floats(args.alpha, "--alpha") if args.alpha else list(cfg.get("match", {}).get("alpha", default))
    bad = [a for a in alphas if not 0 <= a <= 1]
    if bad or not alphas:
        raise ValidationError(f"alpha values must be in [0, 1], got {alphas}")
    return alphas


def cmd_match(args) -> None:
    out = Path(args.out)
    cfg = _run_config(args)
    alphas = _alphas(args, cfg, [0.5])
    inst = _instance(args, cfg)
    records = matching.alpha_sweep(inst, alphas)
    _dump_json(out / "assignments.json", {
        "passenger_ids": list(inst.passenger_ids),
        "driver_ids": list(inst.driver_ids),
        "assignments": [r.assignment.to_dict(inst) for r in records],
    })
    matching.write_sweep_csv(out / "sweep.csv", records)


def cmd_sweep(args) -> None:
    out = Path(args.out)
    cfg = _run_config(args)
    alphas = _alphas(args, cfg, matching.alpha_grid(0.1)) if args.alpha else matching.alpha_grid(0.1)
    inst = _instance(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    matching.write_sweep_csv(out / "sweep.csv", matching.alpha_sweep(inst, alphas))


COMMANDS = {
    "gen": cmd_gen,
    "features": cmd_features,
    "train": cmd_train,
    "profile": cmd_profile,
    "score": cmd_score,
    "match": cmd_match,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcm", description="Comfort-aware passenger/driver matching pipeline.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--out", required=True, help="run directory")
        p.add_argument("--config", help="run configuration JSON (default: <out>/config.json)")
        p.add_argument("--seed", type=int)
        if name in ("match", "sweep"):
            p.add_argument("--alpha", help="comma-separated alpha values")
            p.add_argument("--instance", help="instance JSON with explicit A (skips scoring)")
        if name == "profile":
            p.add_argument("--quantiles", help="lo,hi quantiles (default 0.05,0.95)")
        if name in ("score", "match", "sweep"):
            p.add_argument("--mc-samples", type=int)
            p.add_argument("--cell-budget", type=int)
            p.add_argument("--mode", choices=("auto", "exact", "mc"))
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 1
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    if args.seed is not None and args.seed < 0:
        log.error("--seed must be non-negative")
        return 1
    try:
        COMMANDS[args.command](args)
    except ValidationError as e:
        log.error("%s", e)
        return 1
    except (DataError, OSError, ValueError, KeyError) as e:
        log.error("%s", e)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
