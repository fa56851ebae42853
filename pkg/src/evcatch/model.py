"""Stateful LSTM end-point predictor.

3 inputs (normalized x, y, dt), one hidden layer, 2 outputs: the final
pixel row of the target and the normalized time remaining until it leaves
the view. The hidden/cell state persists across calls and is reset when no
input has arrived for ``RESET_GAP`` seconds.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, asdict

import numpy as np

from . import kernels
from .errors import CheckpointError, InvalidInputError

RESET_GAP = 2.0
CHECKPOINT_MAGIC = b"EVCK"
CHECKPOINT_SCHEMA_VERSION = 1

# order of parameter blocks in the checkpoint payload
_BLOCKS = ("Wx", "Wh", "b", "Wo", "bo")


@dataclass
class ModelParams:
    Wx: np.ndarray   # (4H, 3) input -> gates
    Wh: np.ndarray   # (4H, H) hidden -> gates
    b: np.ndarray    # (4H,) gate biases, order (input, forget, candidate, output)
    Wo: np.ndarray   # (2, H) readout weights
    bo: np.ndarray   # (2,) readout biases

    @property
    def hidden(self) -> int:
        return self.Wh.shape[1]

    def copy(self):
        return ModelParams(self.Wx.copy(), self.Wh.copy(), self.b.copy(),
                           self.Wo.copy(), self.bo.copy())

    def blocks(self):
        return {name: getattr(self, name) for name in _BLOCKS}


@dataclass
class ModelState:
    h: np.ndarray
    c: np.ndarray
    last_input_time: float | None = None

    @classmethod
    def zeros(cls, hidden: int):
        return cls(np.zeros(hidden), np.zeros(hidden), None)


@dataclass(frozen=True)
class Normalization:
    """Feature/target scaling constants, stored in every checkpoint."""

    width_px: int = 304
    height_px: int = 240
    dt_max: float = 0.2
    t_scale: float = 1.5

    def features(self, track_arr: np.ndarray) -> np.ndarray:
        """(N, 3) track with columns (t, x, y) -> (N, 3) normalized inputs."""
        t = track_arr[:, 0]
        dt = np.empty_like(t)
        dt[0] = 0.0
        dt[1:] = np.diff(t)
        x_n = np.clip(track_arr[:, 1] / self.width_px, 0.0, 1.0)
        y_n = np.clip(track_arr[:, 2] / self.height_px, 0.0, 1.0)
        dt_n = np.clip(dt, 0.0, self.dt_max) / self.dt_max
        return np.column_stack([x_n, y_n, dt_n])

    def targets(self, times: np.ndarray, y_F_px: float, t_F: float) -> np.ndarray:
        y_n = np.full(len(times), y_F_px / self.height_px)
        rem = np.clip(t_F - times, 0.0, None) / self.t_scale
        return np.column_stack([y_n, rem])

    def denormalize(self, out: np.ndarray, t_now: float):
        """Readout -> (predicted final pixel row, predicted absolute exit time)."""
        return out[0] * self.height_px, t_now + out[1] * self.t_scale

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class Prediction:
    y_F_px: float
    t_F: float
    emitted_at: float


def init_params(hidden: int, seed: int) -> ModelParams:
    """Uniform weights in [-1/sqrt(H), 1/sqrt(H)]; forget-gate bias +1."""
    if hidden < 1:
        raise InvalidInputError("hidden size must be >= 1")
    rng = np.random.default_rng(seed)
    lim = 1.0 / np.sqrt(hidden)
    Wx = rng.uniform(-lim, lim, (4 * hidden, 3))
    Wh = rng.uniform(-lim, lim, (4 * hidden, hidden))
    Wo = rng.uniform(-lim, lim, (2, hidden))
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = 1.0
    bo = np.zeros(2)
    return ModelParams(Wx, Wh, b, Wo, bo)


def reset(state: ModelState) -> ModelState:
    return ModelState.zeros(len(state.h))


def step(params: ModelParams, state: ModelState, features: np.ndarray,
         t_now: float, norm: Normalization,
         auto_reset: bool = True) -> tuple[ModelState, Prediction]:
    """One stateful update from a single normalized input sample."""
    features = np.asarray(features, dtype=float)
    if features.shape != (3,) or not np.all(np.isfinite(features)):
        raise InvalidInputError("features must be 3 finite values")
    if state.last_input_time is not None and t_now - state.last_input_time > RESET_GAP:
        if not auto_reset:
            raise InvalidInputError(
                f"input gap exceeds {RESET_GAP} s; reset the state first")
        state = reset(state)

    Y, cache = kernels.lstm_forward(params.Wx, params.Wh, params.b,
                                    params.Wo, params.bo,
                                    features[None, :], state.h, state.c)
    new_state = ModelState(cache["Hs"][0].copy(), cache["C"][0].copy(), t_now)
    y_px, t_F = norm.denormalize(Y[0], t_now)
    return new_state, Prediction(float(y_px), float(t_F), t_now)


def forward_sequence(params: ModelParams, X: np.ndarray,
                     state: ModelState | None = None):
    """Run a whole feature sequence from a fresh (or given) state."""
    if state is None:
        state = ModelState.zeros(params.hidden)
    X = np.ascontiguousarray(X, dtype=float)
    Y, cache = kernels.lstm_forward(params.Wx, params.Wh, params.b,
                                    params.Wo, params.bo, X,
                                    state.h, state.c)
    return Y, cache


def sequence_loss(params: ModelParams, X: np.ndarray, targets: np.ndarray,
                  w_y: float = 1.0, w_t: float = 1.0):
    """Mean per-step weighted squared error over a sequence."""
    if len(X) == 0:
        raise InvalidInputError("empty sequence")
    Y, cache = forward_sequence(params, X)
    diff = Y - targets
    loss = float(np.mean(w_y * diff[:, 0] ** 2 + w_t * diff[:, 1] ** 2))
    return loss, Y, cache


def backward(params: ModelParams, X: np.ndarray, targets: np.ndarray,
             w_y: float = 1.0, w_t: float = 1.0):
    """Loss and full-BPTT gradients for one sequence."""
    loss, Y, cache = sequence_loss(params, X, targets, w_y, w_t)
    T = len(X)
    dY = (2.0 / T) * (Y - targets) * np.array([w_y, w_t])
    X = np.ascontiguousarray(X, dtype=float)
    dY = np.ascontiguousarray(dY)
    grads = kernels.lstm_backward(params.Wx, params.Wh, params.Wo, X, cache, dY)
    return loss, grads


def predict_sequence(params: ModelParams, track_arr: np.ndarray,
                     norm: Normalization):
    """Per-sample stateful predictions over a (t, x, y) track.

    Returns (times, y_F_px predictions, t_F predictions).
    """
    X = norm.features(track_arr)
    Y, _ = forward_sequence(params, X)
    times = track_arr[:, 0]
    y_px = Y[:, 0] * norm.height_px
    t_F = times + Y[:, 1] * norm.t_scale
    return times, y_px, t_F


def save_checkpoint(path, params: ModelParams, meta: dict | None = None,
                    norm: Normalization | None = None):
    """Binary checkpoint: magic, JSON header, float64-LE parameter payload."""
    header = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "hidden": params.hidden,
        "blocks": [{"name": n, "shape": list(getattr(params, n).shape)}
                   for n in _BLOCKS],
        "dtype": "<f8",
        "normalization": (norm or Normalization()).to_dict(),
        "meta": meta or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for name in _BLOCKS:
            fh.write(np.ascontiguousarray(
                getattr(params, name), dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns (ModelParams, Normalization, meta). Round-trip is bit-exact."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError("not an evcatch checkpoint")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen))
        if header.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint schema {header.get('schema_version')}")
        arrays = {}
        for blk in header["blocks"]:
            shape = tuple(blk["shape"])
            count = int(np.prod(shape))
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise CheckpointError("truncated checkpoint payload")
            arrays[blk["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    params = ModelParams(**{n: arrays[n] for n in _BLOCKS})
    expected_h = header["hidden"]
    if params.hidden != expected_h:
        raise CheckpointError("hidden size mismatch in checkpoint")
    norm = Normalization.from_dict(header["normalization"])
    return params, norm, header["meta"]
