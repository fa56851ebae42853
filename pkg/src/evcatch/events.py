"""Simplified event synthesis from dense trajectories.

The sensor model is a binary disk-membership difference: between two dense
samples, pixels entering the projected ball disk emit on-events and pixels
leaving it emit off-events. This preserves the motion-driven sampling
property (no motion, no events) without modelling contrast thresholds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .physics import CameraModel, DenseTrajectory


@dataclass
class EventStream:
    t: np.ndarray   # (N,) seconds, non-decreasing
    x: np.ndarray   # (N,) int pixel column
    y: np.ndarray   # (N,) int pixel row
    p: np.ndarray   # (N,) +1 on / -1 off

    def __len__(self):
        return len(self.t)

    @classmethod
    def empty(cls):
        return cls(np.empty(0), np.empty(0, dtype=np.int64),
                   np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))


def disk_pixels(cx, cy, r_px, width, height):
    """Integer pixels whose centre lies within r_px of (cx, cy), in view."""
    x_lo = max(0, int(np.floor(cx - r_px)))
    x_hi = min(width - 1, int(np.ceil(cx + r_px)))
    y_lo = max(0, int(np.floor(cy - r_px)))
    y_hi = min(height - 1, int(np.ceil(cy + r_px)))
    if x_lo > x_hi or y_lo > y_hi:
        return np.empty((0, 2), dtype=np.int64)
    xs = np.arange(x_lo, x_hi + 1)
    ys = np.arange(y_lo, y_hi + 1)
    gx, gy = np.meshgrid(xs, ys)
    mask = (gx - cx) ** 2 + (gy - cy) ** 2 <= r_px * r_px
    return np.stack([gx[mask], gy[mask]], axis=1)


def _pack(pix, width):
    return pix[:, 1] * width + pix[:, 0]


def _crossing_fraction(qx, qy, c0, d, r_px):
    """Fraction of the interval at which pixel (qx, qy) crosses the disk
    boundary as the centre moves linearly from c0 by d."""
    rel = np.asarray([qx, qy], dtype=float) - c0
    a = float(d @ d)
    if a == 0.0:
        return 0.5
    bq = -2.0 * float(rel @ d)
    cq = float(rel @ rel) - r_px * r_px
    disc = bq * bq - 4.0 * a * cq
    if disc < 0.0:
        return 0.5
    sq = np.sqrt(disc)
    roots = [(-bq - sq) / (2.0 * a), (-bq + sq) / (2.0 * a)]
    in_range = [r for r in roots if 0.0 <= r <= 1.0]
    if not in_range:
        return 0.5
    return in_range[0]


def synthesize_events(traj: DenseTrajectory, camera: CameraModel,
                      ball_radius: float, noise_rate: float = 0.0,
                      seed: int = 0) -> EventStream:
    """Disk-edge event stream for a dense trajectory.

    Each changed pixel is timestamped by the fraction of the interval at
    which it crosses the moving disk boundary (linear centre motion within
    the interval). Background noise, when enabled, is uniform in space and
    time at ``noise_rate`` events per second.
    """
    r_px = ball_radius / camera.meters_per_pixel
    w, h = camera.width_px, camera.height_px

    ts, xs, ys, ps = [], [], [], []
    prev_set: set | None = None
    prev_center = None
    for i in range(len(traj)):
        cx, cy = camera.project(traj.positions[i])
        pix = disk_pixels(cx, cy, r_px, w, h)
        cur = set(_pack(pix, w).tolist())
        if prev_set is not None:
            t0, t1 = traj.times[i - 1], traj.times[i]
            changed = ([(k, 1) for k in sorted(cur - prev_set)]
                       + [(k, -1) for k in sorted(prev_set - cur)])
            if changed:
                c0 = np.asarray(prev_center)
                d = np.asarray([cx, cy]) - c0
                batch = []
                for k, pol in changed:
                    qx, qy = k % w, k // w
                    alpha = _crossing_fraction(qx, qy, c0, d, r_px)
                    batch.append((t0 + alpha * (t1 - t0), k, qx, qy, pol))
                batch.sort(key=lambda e: (e[0], e[1]))
                for t_ev, _, qx, qy, pol in batch:
                    ts.append(t_ev)
                    xs.append(qx)
                    ys.append(qy)
                    ps.append(pol)
        prev_set = cur
        prev_center = (cx, cy)

    stream = EventStream(np.asarray(ts, dtype=float),
                         np.asarray(xs, dtype=np.int64),
                         np.asarray(ys, dtype=np.int64),
                         np.asarray(ps, dtype=np.int64))

    if noise_rate > 0.0 and len(traj) > 1:
        rng = np.random.default_rng(seed)
        duration = float(traj.times[-1] - traj.times[0])
        n_noise = rng.poisson(noise_rate * duration)
        nt = rng.uniform(traj.times[0], traj.times[-1], n_noise)
        nx = rng.integers(0, w, n_noise)
        ny = rng.integers(0, h, n_noise)
        npol = rng.choice([-1, 1], n_noise)
        t_all = np.concatenate([stream.t, nt])
        order = np.argsort(t_all, kind="stable")
        stream = EventStream(
            t_all[order],
            np.concatenate([stream.x, nx])[order],
            np.concatenate([stream.y, ny])[order],
            np.concatenate([stream.p, npol])[order],
        )
    return stream
