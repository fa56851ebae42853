"""ROI centre-of-mass tracker and trajectory resampling strategies.

Tracks are (N, 3) float arrays with columns (t, x, y); x/y are fractional
pixel coordinates of the tracked centre of mass.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .events import EventStream


@dataclass(frozen=True)
class TrackerConfig:
    n_roi: int = 40
    roi_halfwidth: float = 12.0      # px; default ~1.5x projected ball radius
    init_window: float = 0.005       # s
    init_count: int = 30
    init_std_factor: float = 1.5     # multiple of projected radius
    projected_radius: float = 8.0    # px


def track(stream: EventStream, cfg: TrackerConfig = TrackerConfig()):
    """Centre-of-mass track from a time-ordered event stream.

    Initialization requires ``init_count`` events within a sliding
    ``init_window`` whose spatial standard deviation stays below
    ``init_std_factor`` times the projected ball radius. After that the
    centre of mass is the mean of the last ``n_roi`` events falling inside
    the ROI, re-centred on every update; a sample is emitted whenever the
    centre of mass changes, timestamped at the mean event time of the
    buffer (the instant the estimate refers to). Never initializing yields
    an empty track.
    """
    n = len(stream)
    out_t, out_x, out_y = [], [], []
    std_limit = cfg.init_std_factor * cfg.projected_radius

    window: deque = deque()
    buf: deque = deque()
    sx = sy = st = 0.0
    initialized = False
    com_x = com_y = None
    last_emit_t = -np.inf

    for i in range(n):
        t = stream.t[i]
        ex = float(stream.x[i])
        ey = float(stream.y[i])

        if not initialized:
            window.append((t, ex, ey))
            while window and t - window[0][0] > cfg.init_window:
                window.popleft()
            if len(window) >= cfg.init_count:
                arr = np.asarray([(w[1], w[2]) for w in window])
                std = float(np.sqrt(arr[:, 0].var() + arr[:, 1].var()))
                if std < std_limit:
                    initialized = True
                    for wt, wx, wy in list(window)[-cfg.n_roi:]:
                        buf.append((wt, wx, wy))
                        sx += wx
                        sy += wy
                        st += wt
                    com_x = sx / len(buf)
                    com_y = sy / len(buf)
                    last_emit_t = st / len(buf)
                    out_t.append(last_emit_t)
                    out_x.append(com_x)
                    out_y.append(com_y)
            continue

        if abs(ex - com_x) > cfg.roi_halfwidth or abs(ey - com_y) > cfg.roi_halfwidth:
            continue
        buf.append((t, ex, ey))
        sx += ex
        sy += ey
        st += t
        if len(buf) > cfg.n_roi:
            ot, ox, oy = buf.popleft()
            sx -= ox
            sy -= oy
            st -= ot
        new_x = sx / len(buf)
        new_y = sy / len(buf)
        t_mean = st / len(buf)
        if (new_x != com_x or new_y != com_y) and t_mean > last_emit_t:
            com_x, com_y = new_x, new_y
            last_emit_t = t_mean
            out_t.append(t_mean)
            out_x.append(com_x)
            out_y.append(com_y)
        else:
            com_x, com_y = new_x, new_y

    if not out_t:
        return np.empty((0, 3))
    return np.column_stack([out_t, out_x, out_y])


@dataclass(frozen=True)
class Spatial:
    min_displacement: float = 2.0

    def __post_init__(self):
        if self.min_displacement <= 0:
            raise InvalidInputError("min_displacement must be positive")


@dataclass(frozen=True)
class Temporal:
    rate: float

    def __post_init__(self):
        if self.rate <= 0:
            raise InvalidInputError("rate must be positive")


@dataclass(frozen=True)
class TemporalWithBlur:
    rate: float
    exposure: float
    blur_limit: float

    def __post_init__(self):
        if self.rate <= 0 or self.exposure <= 0 or self.blur_limit <= 0:
            raise InvalidInputError("rate, exposure and blur_limit must be positive")


SamplingStrategy = Spatial | Temporal | TemporalWithBlur


def strategy_from_dict(d: dict) -> SamplingStrategy:
    kind = d["kind"]
    if kind == "spatial":
        return Spatial(d.get("min_displacement", 2.0))
    if kind == "temporal":
        return Temporal(d["rate"])
    if kind == "temporal_blur":
        return TemporalWithBlur(d["rate"], d["exposure"], d["blur_limit"])
    raise InvalidInputError(f"unknown sampling strategy kind {kind!r}")


def _position_before(track_arr, t):
    """Index of the latest sample with timestamp <= t, or -1."""
    return int(np.searchsorted(track_arr[:, 0], t, side="right")) - 1


def resample(track_arr: np.ndarray, strategy: SamplingStrategy) -> np.ndarray:
    """Subsample a full-resolution track under a sampling strategy.

    Spatial: emit the first sample, then every sample at least
    ``min_displacement`` pixels (Euclidean, inclusive) from the last emitted.
    Temporal: at each tick k/rate emit the latest sample at or before the
    tick, timestamped on the tick grid; ticks with no new sample are skipped.
    TemporalWithBlur: as Temporal, but a tick is dropped when the track moved
    more than ``blur_limit`` pixels during the exposure preceding it.
    """
    if len(track_arr) == 0:
        return np.empty((0, 3))

    if isinstance(strategy, Spatial):
        d2 = strategy.min_displacement ** 2
        out = [0]
        lx, ly = track_arr[0, 1], track_arr[0, 2]
        for i in range(1, len(track_arr)):
            dx = track_arr[i, 1] - lx
            dy = track_arr[i, 2] - ly
            if dx * dx + dy * dy >= d2:
                out.append(i)
                lx, ly = track_arr[i, 1], track_arr[i, 2]
        return track_arr[out]

    rate = strategy.rate
    t_end = track_arr[-1, 0]
    n_ticks = int(np.floor(t_end * rate)) + 1
    rows = []
    last_idx = -1
    for k in range(n_ticks):
        tick = k / rate
        idx = _position_before(track_arr, tick)
        if idx < 0 or idx == last_idx:
            continue
        if isinstance(strategy, TemporalWithBlur):
            j = _position_before(track_arr, tick - strategy.exposure)
            if j >= 0:
                dx = track_arr[idx, 1] - track_arr[j, 1]
                dy = track_arr[idx, 2] - track_arr[j, 2]
                if dx * dx + dy * dy > strategy.blur_limit ** 2:
                    last_idx = idx
                    continue
        rows.append((tick, track_arr[idx, 1], track_arr[idx, 2]))
        last_idx = idx
    if not rows:
        return np.empty((0, 3))
    return np.asarray(rows)
