"""Synthetic multi-camera worlds and their on-disk JSON format.

A world has cameras at known positions, pedestrians walking waypoint paths
through camera neighbourhoods, one video sequence per stay inside a
camera's view disc, and noisy wireless positioning trajectories for the
pedestrians that carry a phone.  Ground truth lives apart from the
observable data (``eval_only`` on disk) so the pipeline can run without it.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels

FORMAT_VERSION = 1
# Dense time step used to decide when a pedestrian stands inside a view disc.
_PATH_DT = 0.2


class ParameterError(ValueError):
    """Invalid generation parameter; the message names the field."""


class ScenarioFormatError(ValueError):
    """Malformed scenario document."""


class ScenarioIntegrityError(ValueError):
    """Scenario document references something that does not exist."""


@dataclass(frozen=True)
class GenerationParams:
    n_cameras: int = 6
    n_identities: int = 40
    world_size: float = 200.0
    min_camera_spacing: float = 50.0
    view_radius: float = 15.0
    visits_per_identity: int = 6
    walk_speed: float = 1.3
    dwell_max: float = 10.0
    start_spread: float = 300.0
    sample_period: float = 1.0
    pos_noise: float = 2.0
    d_raw: int = 48
    app_noise: float = 0.15
    camera_bias: float = 0.05
    corrupt_prob: float = 0.1
    corrupt_alpha: float = 0.5
    corrupt_noise: float = 0.3
    phone_fraction: float = 0.8
    # Noise levels (app_noise, camera_bias, corrupt_noise) are per-coordinate
    # standard deviations; prototypes have unit norm.

    def validate(self) -> None:
        positive = (
            "n_cameras", "n_identities", "world_size", "view_radius",
            "visits_per_identity", "walk_speed", "sample_period", "d_raw",
        )
        for name in positive:
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be > 0, got {getattr(self, name)!r}")
        nonneg = (
            "min_camera_spacing", "dwell_max", "start_spread", "pos_noise",
            "app_noise", "camera_bias", "corrupt_alpha", "corrupt_noise",
        )
        for name in nonneg:
            if not getattr(self, name) >= 0:
                raise ParameterError(f"{name} must be >= 0, got {getattr(self, name)!r}")
        for name in ("phone_fraction", "corrupt_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ParameterError(f"{name} must lie in [0, 1], got {v!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "GenerationParams":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ParameterError(f"unknown generation parameter(s): {', '.join(sorted(unknown))}")
        return cls(**d)


@dataclass(frozen=True)
class Camera:
    id: int
    position: tuple[float, float]
    view_radius: float


@dataclass(frozen=True)
class VideoSequence:
    id: int
    camera_id: int
    interval: tuple[float, float]
    descriptor: tuple[float, ...]
    gt_identity: int | None = None


@dataclass(frozen=True)
class WirelessTrajectory:
    id: int
    signal_id: str
    samples: tuple[tuple[float, float, float], ...]

    def arrays(self):
        a = np.asarray(self.samples, dtype=np.float64)
        return a[:, 0], a[:, 1], a[:, 2]


@dataclass(frozen=True)
class Scenario:
    cameras: tuple[Camera, ...]
    videos: tuple[VideoSequence, ...]
    trajectories: tuple[WirelessTrajectory, ...]
    gt_identity_of_trajectory: dict[int, int] | None = None
    seed: int | None = None
    params: GenerationParams | None = None

    @property
    def has_ground_truth(self) -> bool:
        return all(v.gt_identity is not None for v in self.videos)

    def descriptors(self) -> np.ndarray:
        return np.asarray([v.descriptor for v in self.videos], dtype=np.float64)

    def camera_ids(self) -> np.ndarray:
        return np.asarray([v.camera_id for v in self.videos], dtype=np.int64)

    def video_identities(self) -> np.ndarray:
        if not self.has_ground_truth:
            raise ValueError("scenario carries no ground-truth identities")
        return np.asarray([v.gt_identity for v in self.videos], dtype=np.int64)

    def strip_ground_truth(self) -> "Scenario":
        videos = tuple(dataclasses.replace(v, gt_identity=None) for v in self.videos)
        return dataclasses.replace(self, videos=videos, gt_identity_of_trajectory=None)

    def with_trajectories(self, keep: list[int]) -> "Scenario":
        """Keep only the listed trajectories, renumbered densely in the given order."""
        trajs = tuple(
            dataclasses.replace(self.trajectories[m], id=new) for new, m in enumerate(keep)
        )
        gt = None
        if self.gt_identity_of_trajectory is not None:
            gt = {new: self.gt_identity_of_trajectory[m] for new, m in enumerate(keep)}
        return dataclasses.replace(self, trajectories=trajs, gt_identity_of_trajectory=gt)


def _q(x: float) -> float:
    """Round to 9 significant digits so geometry round-trips through JSON exactly."""
    return float(f"{x:.9g}")


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _place_cameras(rng, p: GenerationParams) -> np.ndarray:
    pts: list[np.ndarray] = []
    for _ in range(10000 * p.n_cameras):
        cand = rng.uniform(0.0, p.world_size, size=2)
        if all(np.hypot(*(cand - q)) >= p.min_camera_spacing for q in pts):
            pts.append(cand)
            if len(pts) == p.n_cameras:
                return np.asarray(pts)
    raise ParameterError(
        f"min_camera_spacing={p.min_camera_spacing} too large to place "
        f"{p.n_cameras} cameras in a {p.world_size} m square"
    )


def _walk(rng, p: GenerationParams, cams: np.ndarray):
    """Waypoint path for one pedestrian -> (knot_times, knot_xy)."""
    # Visits are drawn tour by tour: each tour is a random permutation of
    # the cameras, so a pedestrian sees every camera before repeating one.
    seq: list[int] = []
    while len(seq) < p.visits_per_identity:
        tour = rng.permutation(p.n_cameras).tolist()
        if seq and tour[0] == seq[-1] and p.n_cameras > 1:
            tour.append(tour.pop(0))
        seq.extend(tour)
    seq = seq[: p.visits_per_identity]
    pts = [rng.uniform(0.0, p.world_size, size=2)]
    dwell = [0.0]
    for c in seq:
        ang = rng.uniform(0.0, 2 * math.pi)
        rad = p.view_radius * 0.6 * math.sqrt(rng.uniform())
        pts.append(cams[c] + rad * np.array([math.cos(ang), math.sin(ang)]))
        dwell.append(rng.uniform(0.0, p.dwell_max))
    pts.append(rng.uniform(0.0, p.world_size, size=2))
    dwell.append(0.0)

    t = rng.uniform(0.0, p.start_spread)
    times, xy = [t], [pts[0]]
    for k in range(1, len(pts)):
        t += np.hypot(*(pts[k] - pts[k - 1])) / p.walk_speed
        times.append(t)
        xy.append(pts[k])
        if dwell[k] > 0:
            t += dwell[k]
            times.append(t)
            xy.append(pts[k])
    return np.asarray(times), np.asarray(xy)


def _positions(times, knot_t, knot_xy):
    return np.interp(times, knot_t, knot_xy[:, 0]), np.interp(times, knot_t, knot_xy[:, 1])


def generate_scenario(params: GenerationParams, seed: int) -> Scenario:
    params.validate()
    p = params
    rng = np.random.default_rng(seed)
    cams = _place_cameras(rng, p)
    cameras = tuple(
        Camera(c, (_q(cams[c, 0]), _q(cams[c, 1])), _q(p.view_radius)) for c in range(p.n_cameras)
    )
    protos = np.array([_unit(rng.standard_normal(p.d_raw)) for _ in range(p.n_identities)])
    biases = p.camera_bias * rng.standard_normal((p.n_cameras, p.d_raw))
    paths = [_walk(rng, p, cams) for _ in range(p.n_identities)]

    raw = []  # (start, end, camera, identity)
    for ident, (kt, kxy) in enumerate(paths):
        ts = np.arange(kt[0], kt[-1] + 1e-9, _PATH_DT)
        xs, ys = _positions(ts, kt, kxy)
        for c in range(p.n_cameras):
            starts, ends = kernels.disc_runs(xs, ys, cams[c, 0], cams[c, 1], p.view_radius)
            for s, e in zip(starts, ends):
                raw.append((_q(ts[s]), _q(ts[e]), c, ident))
    raw.sort()

    videos = []
    for vid, (s, e, c, ident) in enumerate(raw):
        clean = protos[ident] + biases[c] + p.app_noise * rng.standard_normal(p.d_raw)
        corrupted = rng.uniform() < p.corrupt_prob
        alt = p.corrupt_alpha * protos[ident] + p.corrupt_noise * rng.standard_normal(p.d_raw)
        desc = _unit(alt if corrupted else clean)
        videos.append(VideoSequence(vid, c, (s, e), tuple(desc.tolist()), ident))

    n_phones = math.floor(p.phone_fraction * p.n_identities)
    owners = sorted(rng.choice(p.n_identities, size=n_phones, replace=False).tolist())
    trajectories = []
    gt_traj = {}
    for m, ident in enumerate(owners):
        kt, kxy = paths[ident]
        ts = kt[0] + p.sample_period * np.arange(int((kt[-1] - kt[0]) // p.sample_period) + 1)
        if len(ts) < 2:
            ts = np.array([kt[0], kt[0] + p.sample_period])
        xs, ys = _positions(ts, kt, kxy)
        xs = xs + p.pos_noise * rng.standard_normal(len(ts))
        ys = ys + p.pos_noise * rng.standard_normal(len(ts))
        mac = ":".join(f"{b:02x}" for b in [2, *rng.integers(0, 256, size=5).tolist()])
        samples = tuple((_q(t), _q(x), _q(y)) for t, x, y in zip(ts, xs, ys))
        trajectories.append(WirelessTrajectory(m, mac, samples))
        gt_traj[m] = ident
    return Scenario(cameras, tuple(videos), tuple(trajectories), gt_traj, seed, params)


# ---------------------------------------------------------------- JSON I/O


def _dump(obj) -> str:
    return json.dumps(obj, separators=(",", ":"))


def scenario_to_json(s: Scenario) -> str:
    lines = ["{", f'"format_version":{FORMAT_VERSION},', f'"seed":{_dump(s.seed)},']
    lines.append(f'"params":{_dump(dataclasses.asdict(s.params) if s.params else None)},')

    def block(key, items, last=False):
        lines.append(f'"{key}":[')
        for k, it in enumerate(items):
            lines.append(_dump(it) + ("," if k < len(items) - 1 else ""))
        lines.append("]" + ("" if last else ","))

    block("cameras", [
        {"id": c.id, "position": list(c.position), "view_radius": c.view_radius} for c in s.cameras
    ])
    block("videos", [
        {"id": v.id, "camera_id": v.camera_id, "interval": list(v.interval),
         "descriptor": list(v.descriptor)} for v in s.videos
    ])
    block("trajectories", [
        {"id": t.id, "signal_id": t.signal_id, "samples": [list(x) for x in t.samples]}
        for t in s.trajectories
    ])
    if s.has_ground_truth and s.videos:
        eval_only = {
            "video_identity": [v.gt_identity for v in s.videos],
            "trajectory_identity": {
                str(k): v for k, v in sorted((s.gt_identity_of_trajectory or {}).items())
            },
        }
    else:
        eval_only = None
    lines.append(f'"eval_only":{_dump(eval_only)}')
    lines.append("}")
    return "\n".join(lines) + "\n"


def save_scenario(s: Scenario, path) -> None:
    Path(path).write_text(scenario_to_json(s))


def _field(d, key, where):
    try:
        return d[key]
    except (KeyError, TypeError):
        raise ScenarioFormatError(f"{where}: missing field {key!r}") from None


def scenario_from_json(text: str, source: str = "<string>") -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ScenarioFormatError(f"{source}: top level must be an object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ScenarioFormatError(f"{source}: unsupported format_version {version!r}")
    try:
        cameras = tuple(
            Camera(int(_field(c, "id", f"cameras[{k}]")),
                   tuple(float(x) for x in _field(c, "position", f"cameras[{k}]")),
                   float(_field(c, "view_radius", f"cameras[{k}]")))
            for k, c in enumerate(_field(doc, "cameras", source))
        )
        gt = (doc.get("eval_only") or {}).get("video_identity")
        raw_videos = _field(doc, "videos", source)
        if gt is not None and len(gt) != len(raw_videos):
            raise ScenarioFormatError(f"{source}: eval_only.video_identity length mismatch")
        videos = tuple(
            VideoSequence(
                int(_field(v, "id", f"videos[{k}]")),
                int(_field(v, "camera_id", f"videos[{k}]")),
                tuple(float(x) for x in _field(v, "interval", f"videos[{k}]")),
                tuple(float(x) for x in _field(v, "descriptor", f"videos[{k}]")),
                None if gt is None else int(gt[k]),
            )
            for k, v in enumerate(raw_videos)
        )
        trajectories = tuple(
            WirelessTrajectory(
                int(_field(t, "id", f"trajectories[{k}]")),
                str(_field(t, "signal_id", f"trajectories[{k}]")),
                tuple(tuple(float(x) for x in smp) for smp in _field(t, "samples", f"trajectories[{k}]")),
            )
            for k, t in enumerate(_field(doc, "trajectories", source))
        )
        tgt = (doc.get("eval_only") or {}).get("trajectory_identity")
        tgt = None if tgt is None else {int(k): int(v) for k, v in tgt.items()}
        params = doc.get("params")
        params = None if params is None else GenerationParams.from_dict(params)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, (ScenarioFormatError, ParameterError)):
            raise
        raise ScenarioFormatError(f"{source}: {exc}") from None
    s = Scenario(cameras, videos, trajectories, tgt, doc.get("seed"), params)
    validate_scenario(s, source)
    return s


def load_scenario(path) -> Scenario:
    return scenario_from_json(Path(path).read_text(), str(path))


def validate_scenario(s: Scenario, source: str = "<scenario>") -> None:
    for k, c in enumerate(s.cameras):
        if c.id != k:
            raise ScenarioFormatError(f"{source}: cameras[{k}].id={c.id}, ids must be dense 0..C-1")
        if len(c.position) != 2 or not c.view_radius > 0:
            raise ScenarioFormatError(f"{source}: cameras[{k}] needs a 2-D position and view_radius > 0")
    dims = {len(v.descriptor) for v in s.videos}
    if len(dims) > 1:
        raise ScenarioFormatError(f"{source}: descriptors have mixed dimensions {sorted(dims)}")
    for k, v in enumerate(s.videos):
        if v.id != k:
            raise ScenarioFormatError(f"{source}: videos[{k}].id={v.id}, ids must be dense 0..N-1")
        if not 0 <= v.camera_id < len(s.cameras):
            raise ScenarioIntegrityError(f"{source}: videos[{k}].camera_id={v.camera_id} names no camera")
        if len(v.interval) != 2 or v.interval[0] > v.interval[1]:
            raise ScenarioFormatError(f"{source}: videos[{k}].interval must be (start <= end)")
        if abs(math.hypot(*v.descriptor) - 1.0) > 1e-6:
            raise ScenarioFormatError(f"{source}: videos[{k}].descriptor must have unit norm")
    for k, t in enumerate(s.trajectories):
        if t.id != k:
            raise ScenarioFormatError(f"{source}: trajectories[{k}].id={t.id}, ids must be dense 0..M-1")
        if len(t.samples) < 2:
            raise ScenarioFormatError(f"{source}: trajectories[{k}] needs at least 2 samples")
        if any(len(smp) != 3 for smp in t.samples):
            raise ScenarioFormatError(f"{source}: trajectories[{k}].samples must be (t, x, y) triples")
        ts = [smp[0] for smp in t.samples]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ScenarioFormatError(f"{source}: trajectories[{k}] sample times must strictly increase")
    if s.gt_identity_of_trajectory is not None:
        for m in s.gt_identity_of_trajectory:
            if not 0 <= m < len(s.trajectories):
                raise ScenarioIntegrityError(f"{source}: eval_only names unknown trajectory {m}")
        owners = list(s.gt_identity_of_trajectory.values())
        if len(owners) != len(set(owners)):
            raise ScenarioIntegrityError(f"{source}: an identity owns more than one trajectory")
