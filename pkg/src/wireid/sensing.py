"""Wireless fragment extraction and related-video lookup."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .scenario import Scenario, VideoSequence, WirelessTrajectory


@dataclass(frozen=True)
class WirelessFragment:
    trajectory_id: int
    fragment_index: int
    camera_id: int
    interval: tuple[float, float]
    visit_key: tuple[int, int]  # (camera_id, visitation ordinal)
    sample_range: tuple[int, int]  # inclusive sample indices

    def to_dict(self) -> dict:
        return {
            "trajectory_id": self.trajectory_id,
            "fragment_index": self.fragment_index,
            "camera_id": self.camera_id,
            "interval": list(self.interval),
            "visit_key": list(self.visit_key),
        }


@dataclass(frozen=True)
class RelatedVideoSet:
    fragment: WirelessFragment
    video_ids: tuple[int, ...]


def extract_fragments(
    trajectory: WirelessTrajectory, cameras, sensing_radius_m: float
) -> list[WirelessFragment]:
    """Split a trajectory into per-visit fragments inside each camera's sensing disc.

    Every maximal run of consecutive samples strictly inside a disc is one
    fragment; leaving and re-entering the same disc opens a new fragment
    with the next visitation ordinal.  Discs may overlap, in which case the
    same samples feed a fragment for each camera.
    """
    if not sensing_radius_m > 0:
        raise ValueError(f"sensing_radius_m must be > 0, got {sensing_radius_m!r}")
    ts, xs, ys = trajectory.arrays()
    runs = []
    for cam in cameras:
        starts, ends = kernels.disc_runs(xs, ys, cam.position[0], cam.position[1], sensing_radius_m)
        for ordinal, (s, e) in enumerate(zip(starts.tolist(), ends.tolist())):
            runs.append((ts[s], cam.id, ordinal, s, e))
    runs.sort()
    return [
        WirelessFragment(
            trajectory.id, r, cam_id, (float(ts[s]), float(ts[e])), (cam_id, ordinal), (s, e)
        )
        for r, (_, cam_id, ordinal, s, e) in enumerate(runs)
    ]


def related_videos(fragment: WirelessFragment, videos) -> RelatedVideoSet:
    """Videos at the fragment's camera whose interval overlaps the fragment's (closed intervals)."""
    lo, hi = fragment.interval
    ids = tuple(
        v.id
        for v in videos
        if v.camera_id == fragment.camera_id and max(lo, v.interval[0]) <= min(hi, v.interval[1])
    )
    return RelatedVideoSet(fragment, ids)


class VideoIndex:
    """Per-camera interval arrays for fast overlap queries over many fragments."""

    def __init__(self, videos: "list[VideoSequence] | tuple[VideoSequence, ...]"):
        self._by_cam: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        groups: dict[int, list[VideoSequence]] = {}
        for v in videos:
            groups.setdefault(v.camera_id, []).append(v)
        for cam, vs in groups.items():
            self._by_cam[cam] = (
                np.array([v.id for v in vs], dtype=np.int64),
                np.array([v.interval[0] for v in vs]),
                np.array([v.interval[1] for v in vs]),
            )

    def related(self, fragment: WirelessFragment) -> RelatedVideoSet:
        if fragment.camera_id not in self._by_cam:
            return RelatedVideoSet(fragment, ())
        ids, starts, ends = self._by_cam[fragment.camera_id]
        lo, hi = fragment.interval
        hit = np.maximum(starts, lo) <= np.minimum(ends, hi)
        return RelatedVideoSet(fragment, tuple(ids[hit].tolist()))


@dataclass(frozen=True)
class SensingResult:
    """Fragments and related-video sets for every trajectory, indexed by trajectory id."""

    fragments: tuple[tuple[WirelessFragment, ...], ...]
    related: tuple[tuple[RelatedVideoSet, ...], ...]

    @property
    def n_trajectories(self) -> int:
        return len(self.fragments)

    def fragment_counts(self) -> list[int]:
        return [len(f) for f in self.fragments]


def sense(scenario: Scenario, sensing_radius_m: float) -> SensingResult:
    index = VideoIndex(scenario.videos)
    frags, rel = [], []
    for traj in scenario.trajectories:
        fs = extract_fragments(traj, scenario.cameras, sensing_radius_m)
        frags.append(tuple(fs))
        rel.append(tuple(index.related(f) for f in fs))
    return SensingResult(tuple(frags), tuple(rel))
