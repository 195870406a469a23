"""Alternating dual-model training loop and the visual-only baseline.

One run = initial per-camera training of the visual model, then rounds of
relabelling and fine-tuning.  In each wireless round the visual labels
(mutual NN on visual features) train the graph network, whose fused
features yield multimodal labels that in turn fine-tune the visual model.
The baseline fine-tunes on visual labels directly.  Whenever the
wireless path cannot run (no trajectories, no fragments, too few classes)
the round falls back to the baseline step and records a notice.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .association import nna
from .graph import MmgnConfig, MmgnHyper, MmgnModel, build_graph_inputs, mmgn_train
from .metrics import MetricError, ami, cmc_map, labeling_ami
from .mmda import EstimationError, cluster_count_deviation, run_mmda
from .scenario import GenerationParams, Scenario, generate_scenario, load_scenario
from .sensing import sense
from .visual import (
    InitialHyper,
    TripletHyper,
    VisualConfig,
    VisualModel,
    extract_features,
    initial_train,
    triplet_finetune,
)

log = logging.getLogger(__name__)

REPORT_VERSION = 1
METRIC_COLUMNS = (
    "round", "mAP", "r1", "r5", "r10", "ami_visual", "ami_multimodal",
    "coverage_visual", "coverage_multimodal", "ami_mmda_clusters",
)
SWEEP_AXES = ("lambda", "radius", "trajectory_fraction", "heads")

# Stream tags for per-round seeds; baseline and wireless runs share them so
# that a run without wireless data reproduces the baseline exactly.
_STREAM_INIT, _STREAM_MMGN, _STREAM_TRIPLET, _STREAM_KMEANS, _STREAM_SUBSET = range(5)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    scenario_path: str | None = None
    scenario_seed: int = 1
    generation: GenerationParams = field(default_factory=GenerationParams)
    seed: int = 0
    lam: float = 7.0
    sensing_radius_m: float = 25.0
    trajectory_fraction: float = 1.0
    epochs_stage1: int = 80
    epochs_stage2: int = 80
    relabel_period: int = 5
    mmgn_epochs: int = 80
    heads: int = 6
    bins: int = 32
    d_mid: int = 64
    d_feat: int = 32
    d_hid: int = 16
    lr_stage1: float = 3e-4
    lr_stage2: float = 1e-2
    lr_mmgn: float = 1e-2
    momentum: float = 0.9
    weight_decay: float = 5e-4
    margin: float = 0.4
    batch_size_stage1: int = 576
    p_classes: int = 8
    k_samples: int = 4
    mmgn_triplet: bool = False

    def validate(self) -> None:
        if self.relabel_period <= 0 or self.epochs_stage2 % self.relabel_period:
            raise ConfigError("relabel_period must divide epochs_stage2")
        for name in ("lr_stage1", "lr_stage2", "lr_mmgn", "lam", "sensing_radius_m"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if not 0.0 <= self.trajectory_fraction <= 1.0:
            raise ConfigError("trajectory_fraction must lie in [0, 1]")
        for name in ("heads", "bins", "d_mid", "d_feat", "d_hid", "p_classes", "k_samples"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.bins < 2:
            raise ConfigError("bins must be >= 2")

    @property
    def rounds(self) -> int:
        return self.epochs_stage2 // self.relabel_period

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["generation"] = dataclasses.asdict(self.generation)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        gen = d.pop("generation", None)
        cfg = cls(**d)
        if gen is not None:
            cfg.generation = gen if isinstance(gen, GenerationParams) else GenerationParams.from_dict(gen)
        return cfg


def _seed(config: RunConfig, *keys: int) -> int:
    return int(np.random.SeedSequence([config.seed, *keys]).generate_state(1)[0])


def load_run_scenario(config: RunConfig) -> Scenario:
    if config.scenario_path:
        return load_scenario(config.scenario_path)
    return generate_scenario(config.generation, config.scenario_seed)


def select_trajectories(scenario: Scenario, config: RunConfig) -> Scenario:
    """Keep ``floor(fraction * M)`` trajectories chosen by the run seed."""
    M = len(scenario.trajectories)
    keep_n = math.floor(config.trajectory_fraction * M + 1e-9)
    if keep_n == M:
        return scenario
    rng = np.random.default_rng(_seed(config, _STREAM_SUBSET))
    keep = sorted(rng.choice(M, size=keep_n, replace=False).tolist())
    return scenario.with_trajectories(keep)


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{x:.6f}"


@dataclass
class RunReport:
    mode: str
    config: dict
    rounds: list[dict]
    notices: list[str]
    wireless: dict | None = None
    features: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def final(self) -> dict:
        return self.rounds[-1]

    def metric_rows(self) -> list[dict]:
        return [{k: r.get(k) for k in METRIC_COLUMNS} for r in self.rounds]

    def metrics_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for row in self.metric_rows():
            w.writerow([_fmt(row[k]) for k in METRIC_COLUMNS])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "format_version": REPORT_VERSION,
            "mode": self.mode,
            "config": self.config,
            "notices": self.notices,
            "rounds": self.rounds,
            "wireless": self.wireless,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True, default=_json_default) + "\n"

    def write(self, out_dir, stem: str | None = None) -> tuple[Path, Path]:
        """Report JSON, metrics CSV and (if present) the final feature dump as ``.npy``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = stem or self.mode
        rp, mp = out / f"{stem}_report.json", out / f"{stem}_metrics.csv"
        rp.write_text(self.to_json())
        mp.write_text(self.metrics_csv())
        if self.features is not None:
            np.save(out / f"{stem}_features.npy", self.features)
        return rp, mp


def _json_default(x):
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    raise TypeError(f"not JSON serialisable: {type(x).__name__}")


def _clean(x):
    """NaN -> None so reports stay valid JSON."""
    if isinstance(x, float) and math.isnan(x):
        return None
    return x


class _Evaluator:
    def __init__(self, scenario: Scenario):
        self.cams = scenario.camera_ids()
        self.ids = scenario.video_identities() if scenario.has_ground_truth else None

    def retrieval(self, features) -> dict:
        if self.ids is None:
            return {"mAP": None, "r1": None, "r5": None, "r10": None}
        try:
            sc = cmc_map(features, self.cams, self.ids)
        except MetricError:
            return {"mAP": None, "r1": None, "r5": None, "r10": None}
        return {"mAP": sc.mAP, "r1": sc.cmc[1], "r5": sc.cmc[5], "r10": sc.cmc[10]}

    def labels(self, labels) -> float | None:
        if self.ids is None:
            return None
        return _clean(labeling_ami(labels, self.ids))

    def clusters(self, cluster_sets) -> float | None:
        """Pooled AMI of per-trajectory clusterings against (trajectory, identity)."""
        if self.ids is None or not cluster_sets:
            return None
        pred, true = [], []
        for cs in cluster_sets:
            for k, (ids, _) in enumerate(cs.clusters):
                for v in ids:
                    pred.append(cs.trajectory_id * 100003 + k)
                    true.append(cs.trajectory_id * 100003 + int(self.ids[v]))
        return ami(np.asarray(pred), np.asarray(true))


def _run(config: RunConfig, scenario: Scenario | None, wireless: bool) -> RunReport:
    config.validate()
    if scenario is None:
        scenario = load_run_scenario(config)
    notices: list[str] = []
    ev = _Evaluator(scenario)
    D = scenario.descriptors()
    cams = scenario.camera_ids()
    vcfg = VisualConfig(D.shape[1], config.d_mid, config.d_feat)
    model = VisualModel.from_descriptors(vcfg, D, seed=_seed(config, _STREAM_INIT))
    initial_train(
        model, D, cams,
        InitialHyper(config.epochs_stage1, config.lr_stage1, config.weight_decay, config.batch_size_stage1),
        seed=_seed(config, _STREAM_INIT, 1),
    )
    X = extract_features(model, D)
    rounds = [{"round": 0, **ev.retrieval(X)}]

    sensing = None
    wireless_info = None
    if wireless:
        scenario = select_trajectories(scenario, config)
        if not scenario.trajectories:
            notices.append("no wireless trajectories: every round runs the baseline step")
        else:
            sensing = sense(scenario, config.sensing_radius_m)
            if sum(sensing.fragment_counts()) == 0:
                notices.append("no wireless fragments sensed: every round runs the baseline step")
                sensing = None
        wireless_info = {
            "n_trajectories": len(scenario.trajectories),
            "fragments": [f.to_dict() for fs in (sensing.fragments if sensing else ()) for f in fs],
        }
        if sensing is not None and ev.ids is not None:
            dev, mean_true = cluster_count_deviation(sensing, config.lam, ev.ids)
            wireless_info["k_deviation"] = _clean(dev)
            wireless_info["mean_true_count"] = _clean(mean_true)

    thyper = TripletHyper(
        config.relabel_period, config.lr_stage2, config.weight_decay, config.momentum,
        config.margin, config.p_classes, config.k_samples,
    )
    for r in range(1, config.rounds + 1):
        row: dict = {"round": r}
        visual = nna(X, cams)
        row["ami_visual"] = ev.labels(visual.labels)
        row["coverage_visual"] = visual.coverage
        train_labels = visual.labels
        if sensing is not None:
            fused = _wireless_round(config, r, X, cams, sensing, visual.labels, ev, row, notices)
            if fused is not None:
                train_labels = fused
        hist = triplet_finetune(model, D, train_labels, thyper, seed=_seed(config, _STREAM_TRIPLET, r))
        if not hist:
            notices.append(f"round {r}: too few pseudo classes, visual model not updated")
        X = extract_features(model, D)
        row.update(ev.retrieval(X))
        rounds.append(row)
    return RunReport("umtf" if wireless else "baseline", config.to_dict(), rounds, notices, wireless_info, X)


def _wireless_round(config, r, X, cams, sensing, visual_labels, ev, row, notices):
    try:
        cluster_sets, tensor = run_mmda(X, sensing, config.lam, _seed(config, _STREAM_KMEANS, r))
    except EstimationError as exc:
        notices.append(f"round {r}: {exc}; baseline step used")
        return None
    row["ami_mmda_clusters"] = ev.clusters(cluster_sets)
    row["mean_k"] = float(np.mean([cs.k for cs in cluster_sets])) if cluster_sets else None
    n_classes = int(visual_labels.max()) + 1
    if n_classes < 2:
        notices.append(f"round {r}: fewer than 2 visual pseudo classes; baseline step used")
        return None
    g = build_graph_inputs(tensor, config.bins)
    gcfg = MmgnConfig(X.shape[1], config.d_hid, config.heads, config.bins, n_classes)
    gmodel = MmgnModel(gcfg, seed=_seed(config, _STREAM_MMGN, r))
    losses = mmgn_train(
        gmodel, X, g, visual_labels,
        MmgnHyper(config.mmgn_epochs, config.lr_mmgn, config.weight_decay, config.mmgn_triplet, config.margin),
    )
    row["mmgn_loss"] = [losses[0], losses[-1]] if losses else None
    Z, _, _ = gmodel.forward(X, g)
    fused = nna(Z, cams)
    row["ami_multimodal"] = ev.labels(fused.labels)
    row["coverage_multimodal"] = fused.coverage
    row["mmgn_mAP"] = ev.retrieval(Z)["mAP"]
    return fused.labels


def run_umtf(config: RunConfig, scenario: Scenario | None = None) -> RunReport:
    return _run(config, scenario, wireless=True)


def run_baseline(config: RunConfig, scenario: Scenario | None = None) -> RunReport:
    return _run(config, scenario, wireless=False)


def _sweep_value(config: RunConfig, axis: str, value, scenario: Scenario) -> dict:
    field_name = {"lambda": "lam", "radius": "sensing_radius_m",
                  "trajectory_fraction": "trajectory_fraction", "heads": "heads"}[axis]
    row = {"axis": axis, "value": value}
    try:
        cfg = dataclasses.replace(config, **{field_name: int(value) if axis == "heads" else float(value)})
        rep = run_umtf(cfg, scenario)
    except Exception as exc:  # noqa: BLE001 - recorded per value
        row["status"] = f"error: {exc}"
        return row
    fin = rep.final
    row.update(
        status="ok", mAP=fin.get("mAP"), r1=fin.get("r1"), r5=fin.get("r5"), r10=fin.get("r10"),
        ami_visual=fin.get("ami_visual"), ami_multimodal=fin.get("ami_multimodal"),
        k_deviation=(rep.wireless or {}).get("k_deviation"),
        mean_true_count=(rep.wireless or {}).get("mean_true_count"),
    )
    return row


def ablation_sweep(config: RunConfig, axis: str, values, scenario: Scenario | None = None,
                   jobs: int = 1) -> list[dict]:
    """One wireless run per value on a shared scenario and seed.

    Failures become rows with ``status`` set to the error message.  With
    ``jobs > 1`` values run in worker processes; rows keep input order.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {', '.join(SWEEP_AXES)}")
    values = list(values)
    if not values:
        raise ConfigError("sweep needs at least one value")
    if scenario is None:
        scenario = load_run_scenario(config)
    if jobs <= 1 or len(values) == 1:
        return [_sweep_value(config, axis, v, scenario) for v in values]
    with ProcessPoolExecutor(max_workers=min(jobs, len(values))) as pool:
        futures = [pool.submit(_sweep_value, config, axis, v, scenario) for v in values]
        return [f.result() for f in futures]


SWEEP_COLUMNS = ("axis", "value", "status", "mAP", "r1", "r5", "r10", "ami_visual",
                 "ami_multimodal", "k_deviation", "mean_true_count")


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for row in rows:
        w.writerow([row["value"] if k == "value" else _fmt(row.get(k)) if k not in ("axis", "status")
                    else row.get(k, "") for k in SWEEP_COLUMNS])
    return buf.getvalue()


def lambda_deviation_curve(scenario: Scenario, sensing_radius_m: float, lambdas) -> list[tuple[float, float, float]]:
    """(lambda, mean |K_m - true count|, mean true count) without any training."""
    sensing = sense(scenario, sensing_radius_m)
    ids = scenario.video_identities()
    return [(float(l), *cluster_count_deviation(sensing, l, ids)) for l in lambdas]
