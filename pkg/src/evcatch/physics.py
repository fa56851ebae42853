"""Closed-form bouncing-ball simulation and dataset generation.

The ball is a point mass for flight dynamics (the radius only matters for
event rendering and the interception threshold). Each flight segment between
bounces follows p(t) = p0 + v0*t - 0.5*g*t^2 exactly; bounce instants are
solved analytically, so dense samples are evaluated from the closed form
rather than integrated numerically.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DistributionInfeasibleError,
    InvalidInputError,
    NonTerminatingTrajectoryError,
)

DATASET_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class CameraModel:
    """Affine pinhole mapping between world metres and pixel coordinates.

    ``origin`` is the world (x, y) position of pixel (0, 0), the top-left
    corner; pixel rows grow downwards as world height decreases.
    """

    width_px: int = 304
    height_px: int = 240
    meters_per_pixel: float = 1.5 / 304
    origin: tuple[float, float] = (0.0, 1.15)

    def __post_init__(self):
        if self.width_px <= 0 or self.height_px <= 0:
            raise InvalidInputError("pixel dimensions must be positive")
        if self.meters_per_pixel <= 0:
            raise InvalidInputError("meters_per_pixel must be positive")

    def project(self, pos):
        """World (x, y) in metres -> fractional pixel (col, row)."""
        px = (pos[0] - self.origin[0]) / self.meters_per_pixel
        py = (self.origin[1] - pos[1]) / self.meters_per_pixel
        return px, py

    def unproject(self, px, py):
        """Fractional pixel (col, row) -> world (x, y) in metres."""
        x = self.origin[0] + px * self.meters_per_pixel
        y = self.origin[1] - py * self.meters_per_pixel
        return x, y

    def row_to_height(self, row):
        return self.origin[1] - row * self.meters_per_pixel

    def height_to_row(self, y_m):
        return (self.origin[1] - y_m) / self.meters_per_pixel

    def in_view(self, px, py):
        return 0.0 <= px < self.width_px and 0.0 <= py < self.height_px


@dataclass(frozen=True)
class BallParams:
    launch_pos: tuple[float, float]
    launch_vel: tuple[float, float]
    radius: float = 0.025
    restitution: float = 0.8
    gravity: float = 9.81

    def __post_init__(self):
        if self.radius <= 0:
            raise InvalidInputError("radius must be positive")
        if not 0 < self.restitution <= 1:
            raise InvalidInputError("restitution must be in (0, 1]")
        if self.gravity < 0:
            raise InvalidInputError("gravity must be non-negative")


@dataclass
class DenseTrajectory:
    times: np.ndarray          # (N,) strictly increasing, step 1/sample_rate
    positions: np.ndarray      # (N, 2) world metres
    sample_rate: float

    def __len__(self):
        return len(self.times)


@dataclass
class GroundTruth:
    y_F_px: float   # pixel row of the last in-view sample
    y_F_m: float    # same height in metres
    t_F: float      # timestamp of the last in-view sample
    exit_side: str  # "left" | "right" | "top" | "bottom" | "end"

    def to_dict(self):
        return {
            "y_F_px": self.y_F_px,
            "y_F_m": self.y_F_m,
            "t_F": self.t_F,
            "exit_side": self.exit_side,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["y_F_px"], d["y_F_m"], d["t_F"], d["exit_side"])


@dataclass(frozen=True)
class TrajectoryDistribution:
    """Launch-parameter ranges for rejection sampling.

    Accepted trajectories must stay in view for a duration inside
    ``duration_window``; the ranges below are stand-ins for the unreported
    source statistics and are fully config-exposed.
    """

    x_range: tuple[float, float] = (0.01, 0.05)
    y_range: tuple[float, float] = (0.35, 0.95)
    speed_range: tuple[float, float] = (1.3, 3.0)
    angle_range_deg: tuple[float, float] = (-25.0, 30.0)
    restitution_range: tuple[float, float] = (0.7, 0.9)
    duration_window: tuple[float, float] = (0.5, 1.1)
    min_acceptance_rate: float = 0.01

    def to_dict(self):
        return {
            "x_range": list(self.x_range),
            "y_range": list(self.y_range),
            "speed_range": list(self.speed_range),
            "angle_range_deg": list(self.angle_range_deg),
            "restitution_range": list(self.restitution_range),
            "duration_window": list(self.duration_window),
            "min_acceptance_rate": self.min_acceptance_rate,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            x_range=tuple(d["x_range"]),
            y_range=tuple(d["y_range"]),
            speed_range=tuple(d["speed_range"]),
            angle_range_deg=tuple(d["angle_range_deg"]),
            restitution_range=tuple(d["restitution_range"]),
            duration_window=tuple(d["duration_window"]),
            min_acceptance_rate=d.get("min_acceptance_rate", 0.01),
        )


@dataclass
class _Segment:
    t0: float
    pos: tuple[float, float]
    vel: tuple[float, float]
    t_end: float  # bounce instant ending this segment (inf if none)


def _segment_position(seg: _Segment, g: float, t: float):
    dt = t - seg.t0
    x = seg.pos[0] + seg.vel[0] * dt
    y = seg.pos[1] + seg.vel[1] * dt - 0.5 * g * dt * dt
    return x, y


def _bounce_time(y0, vy, g, table_height):
    """Time until the descending ball reaches the table, or inf."""
    h = y0 - table_height
    if g == 0.0:
        if vy >= 0.0:
            return math.inf
        return h / -vy
    # y0 + vy*t - g/2 t^2 = table  ->  take the positive (descending) root
    disc = vy * vy + 2.0 * g * h
    if disc < 0.0:
        return math.inf
    return (vy + math.sqrt(disc)) / g


def _build_segments(params: BallParams, table_height: float, t_max: float):
    segs = []
    t0 = 0.0
    pos = tuple(params.launch_pos)
    vel = tuple(params.launch_vel)
    g = params.gravity
    while t0 <= t_max:
        dt_hit = _bounce_time(pos[1], vel[1], g, table_height)
        if dt_hit <= 1e-12:
            # resting contact: stop subdividing, extend the last segment
            segs.append(_Segment(t0, pos, (vel[0], 0.0), math.inf))
            break
        t_end = t0 + dt_hit
        segs.append(_Segment(t0, pos, vel, t_end))
        if not math.isfinite(t_end):
            break
        x_hit = pos[0] + vel[0] * dt_hit
        vy_hit = vel[1] - g * dt_hit
        pos = (x_hit, table_height)
        vel = (vel[0], -params.restitution * vy_hit)
        t0 = t_end
    return segs


def position_at(params: BallParams, table_height: float, t: float,
                segments=None):
    """Closed-form ball position at time t (independent per-segment oracle)."""
    if segments is None:
        segments = _build_segments(params, table_height, t)
    for seg in segments:
        if t < seg.t_end:
            return _segment_position(seg, params.gravity, t)
    return _segment_position(segments[-1], params.gravity, t)


def bounce_times(params: BallParams, table_height: float, t_max: float):
    segs = _build_segments(params, table_height, t_max)
    return [s.t_end for s in segs if math.isfinite(s.t_end) and s.t_end <= t_max]


def simulate_trajectory(params: BallParams, camera: CameraModel,
                        table_height: float = 0.0, sample_rate: float = 500.0,
                        max_duration: float = 10.0):
    """Simulate until the ball centre leaves the field of view.

    Returns the in-view dense trajectory and its ground truth (the last
    visible sample). Raises if the start is out of view or the ball never
    exits within ``max_duration``.
    """
    if sample_rate <= 0:
        raise InvalidInputError("sample_rate must be positive")
    px0 = camera.project(params.launch_pos)
    if not camera.in_view(*px0):
        raise InvalidInputError("launch position outside the field of view")
    if params.launch_pos[1] <= table_height:
        raise InvalidInputError("launch position must be above the table")

    segments = _build_segments(params, table_height, max_duration)
    dt = 1.0 / sample_rate
    times = []
    positions = []
    exit_side = None
    seg_idx = 0
    k = 0
    while True:
        t = k * dt
        if t > max_duration:
            raise NonTerminatingTrajectoryError(
                f"ball still in view after {max_duration} s")
        while seg_idx + 1 < len(segments) and t >= segments[seg_idx].t_end:
            seg_idx += 1
        pos = _segment_position(segments[seg_idx], params.gravity, t)
        px, py = camera.project(pos)
        if not camera.in_view(px, py):
            if px < 0:
                exit_side = "left"
            elif px >= camera.width_px:
                exit_side = "right"
            elif py < 0:
                exit_side = "top"
            else:
                exit_side = "bottom"
            break
        times.append(t)
        positions.append(pos)
        k += 1

    traj = DenseTrajectory(np.asarray(times), np.asarray(positions),
                           sample_rate)
    gt = exit_point(traj, camera)
    gt.exit_side = exit_side
    return traj, gt


def exit_point(traj: DenseTrajectory, camera: CameraModel) -> GroundTruth:
    """Ground truth from the last sample projecting inside the pixel bounds."""
    last = None
    for i in range(len(traj) - 1, -1, -1):
        px, py = camera.project(traj.positions[i])
        if camera.in_view(px, py):
            last = i
            break
    if last is None:
        raise InvalidInputError("trajectory has no in-view sample")
    px, py = camera.project(traj.positions[last])
    return GroundTruth(y_F_px=py, y_F_m=float(traj.positions[last][1]),
                       t_F=float(traj.times[last]), exit_side="end")


def sample_params(dist: TrajectoryDistribution, rng: np.random.Generator):
    x = rng.uniform(*dist.x_range)
    y = rng.uniform(*dist.y_range)
    speed = rng.uniform(*dist.speed_range)
    angle = math.radians(rng.uniform(*dist.angle_range_deg))
    e = rng.uniform(*dist.restitution_range)
    return BallParams(
        launch_pos=(x, y),
        launch_vel=(speed * math.cos(angle), speed * math.sin(angle)),
        restitution=e,
    )


def _trajectory_record(idx, params, traj, gt):
    return {
        "id": idx,
        "params": {
            "launch_pos": list(params.launch_pos),
            "launch_vel": list(params.launch_vel),
            "radius": params.radius,
            "restitution": params.restitution,
            "gravity": params.gravity,
        },
        "samples": [[float(t), float(p[0]), float(p[1])]
                    for t, p in zip(traj.times, traj.positions)],
        "gt": gt.to_dict(),
    }


def record_to_trajectory(rec):
    arr = np.asarray(rec["samples"])
    n = len(arr)
    rate = (n - 1) / (arr[-1, 0] - arr[0, 0]) if n > 1 else 500.0
    traj = DenseTrajectory(arr[:, 0], arr[:, 1:3], float(round(rate)))
    p = rec["params"]
    params = BallParams(tuple(p["launch_pos"]), tuple(p["launch_vel"]),
                        p["radius"], p["restitution"], p["gravity"])
    return params, traj, GroundTruth.from_dict(rec["gt"])


def generate_dataset(dist: TrajectoryDistribution, counts, seed: int,
                     out_dir, camera: CameraModel | None = None,
                     table_height: float = 0.0, sample_rate: float = 500.0):
    """Rejection-sample trajectories into train/val/test JSON-lines files.

    Output is byte-identical across runs with the same seed. A manifest JSON
    records the seed, counts, distribution and schema version.
    """
    from pathlib import Path

    camera = camera or CameraModel()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    split_names = ("train", "val", "test")
    if len(counts) != 3 or any(c < 0 for c in counts):
        raise InvalidInputError("counts must be three non-negative integers")

    rng = np.random.default_rng(seed)
    lo, hi = dist.duration_window
    paths = {}
    attempts = 0
    accepted_total = 0
    for name, count in zip(split_names, counts):
        path = out_dir / f"{name}.jsonl"
        paths[name] = path
        with open(path, "w") as fh:
            accepted = 0
            while accepted < count:
                attempts += 1
                if attempts > 200 and accepted_total / attempts < dist.min_acceptance_rate:
                    raise DistributionInfeasibleError(
                        f"acceptance rate {accepted_total / attempts:.4f} below "
                        f"floor {dist.min_acceptance_rate}")
                params = sample_params(dist, rng)
                try:
                    traj, gt = simulate_trajectory(
                        params, camera, table_height, sample_rate)
                except (InvalidInputError, NonTerminatingTrajectoryError):
                    continue
                if not lo <= gt.t_F <= hi:
                    continue
                rec = _trajectory_record(accepted, params, traj, gt)
                fh.write(json.dumps(rec) + "\n")
                accepted += 1
                accepted_total += 1

    manifest = {
        "schema_version": DATASET_SCHEMA_VERSION,
        "seed": seed,
        "counts": {n: c for n, c in zip(split_names, counts)},
        "distribution": dist.to_dict(),
        "camera": {
            "width_px": camera.width_px,
            "height_px": camera.height_px,
            "meters_per_pixel": camera.meters_per_pixel,
            "origin": list(camera.origin),
        },
        "table_height": table_height,
        "sample_rate": sample_rate,
    }
    manifest_path = out_dir / "manifest.json"
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths, manifest_path


def load_split(path):
    """Yield (params, DenseTrajectory, GroundTruth) per JSONL record."""
    with open(path) as fh:
        for line in fh:
            yield record_to_trajectory(json.loads(line))


def camera_from_manifest(manifest):
    cam = manifest["camera"]
    return CameraModel(cam["width_px"], cam["height_px"],
                       cam["meters_per_pixel"], tuple(cam["origin"]))
