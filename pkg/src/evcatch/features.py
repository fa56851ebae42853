"""Dataset -> per-strategy input sequences for the predictor.

For each dense trajectory the full visual pipeline runs once (event
synthesis, ROI tracking), then the full-resolution track is resampled under
every requested strategy. Results are cached as JSON-lines next to the
output directory so training and evaluation share one preprocessing pass.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .events import synthesize_events
from .model import Normalization
from .physics import CameraModel, load_split
from .tracker import (
    Temporal,
    TemporalWithBlur,
    TrackerConfig,
    resample,
    strategy_from_dict,
    track,
)

CLEAN_SUFFIX = "__clean"


def training_key(name: str, strategy_cfg: dict) -> str:
    """Track key used for training a strategy's model.

    Blur-limited strategies drop samples that moved too far during the
    exposure, which would starve the model of exactly the fast segments it
    must learn. Their models train on the blur-free companion track at the
    same rate and only inference sees the blurred stream.
    """
    if strategy_cfg.get("kind") == "temporal_blur":
        return name + CLEAN_SUFFIX
    return name


def tracker_config_for(camera: CameraModel, ball_radius: float) -> TrackerConfig:
    r_px = ball_radius / camera.meters_per_pixel
    return TrackerConfig(roi_halfwidth=1.5 * r_px, projected_radius=r_px)


def extract_tracks(dataset_path, camera: CameraModel, ball_radius: float,
                   strategies: dict, noise_rate: float = 0.0):
    """Yield per-trajectory dicts with resampled tracks for every strategy."""
    cfg = tracker_config_for(camera, ball_radius)
    parsed = {}
    for name, d in strategies.items():
        strat = strategy_from_dict(d)
        parsed[name] = strat
        if isinstance(strat, TemporalWithBlur):
            parsed[name + CLEAN_SUFFIX] = Temporal(strat.rate)
    for idx, (params, traj, gt) in enumerate(load_split(dataset_path)):
        stream = synthesize_events(traj, camera, params.radius,
                                   noise_rate=noise_rate, seed=idx)
        full = track(stream, cfg)
        rec = {"id": idx, "y_F_px": gt.y_F_px, "y_F_m": gt.y_F_m,
               "t_F": gt.t_F, "tracks": {}}
        for name, strat in parsed.items():
            rec["tracks"][name] = resample(full, strat)
        yield rec


def cache_features(dataset_path, out_path, camera: CameraModel,
                   ball_radius: float, strategies: dict,
                   noise_rate: float = 0.0):
    """Write the per-strategy tracks of a split to a JSONL cache file."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w") as fh:
        for rec in extract_tracks(dataset_path, camera, ball_radius,
                                  strategies, noise_rate):
            row = {
                "id": rec["id"],
                "y_F_px": rec["y_F_px"],
                "y_F_m": rec["y_F_m"],
                "t_F": rec["t_F"],
                "tracks": {k: np.asarray(v).tolist()
                           for k, v in rec["tracks"].items()},
            }
            fh.write(json.dumps(row) + "\n")
    return out_path


def load_features(path):
    """Load a cached split; tracks come back as (N, 3) float arrays."""
    out = []
    with open(path) as fh:
        for line in fh:
            row = json.loads(line)
            row["tracks"] = {k: np.asarray(v).reshape(-1, 3)
                             for k, v in row["tracks"].items()}
            out.append(row)
    return out


def sequences_for_strategy(records, strategy_name: str, norm: Normalization,
                           min_len: int = 2):
    """(features, targets) pairs for training, skipping degenerate tracks."""
    seqs = []
    for rec in records:
        arr = rec["tracks"][strategy_name]
        if len(arr) < min_len:
            continue
        X = norm.features(arr)
        T = norm.targets(arr[:, 0], rec["y_F_px"], rec["t_F"])
        seqs.append((X, T))
    return seqs
