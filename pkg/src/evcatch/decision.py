"""Convergence detection and open-loop action timing.

gamma(i) is the mean absolute rate of change of the last n_conv end-point
estimates; the prediction has converged at the first sample where it drops
below the threshold. The latest viable action time follows from the robot's
average speed and the predicted exit height and time.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateIntervalError, InvalidInputError


@dataclass(frozen=True)
class ConvergenceConfig:
    n_conv: int = 15
    gamma_star: float = 100.0  # px/s

    def __post_init__(self):
        if self.n_conv < 1:
            raise InvalidInputError("n_conv must be >= 1")
        if self.gamma_star <= 0:
            raise InvalidInputError("gamma_star must be positive")


@dataclass(frozen=True)
class RobotEnvelope:
    y_start_m: float = 0.60
    v_robot: float = 0.60 / 1.1  # m/s, full range over the reference time


class Policy(enum.Enum):
    MOVE_AT_CONV = "move_at_conv"
    MOVE_AT_DEC = "move_at_dec"


@dataclass
class Decision:
    action_time: float
    index: int          # prediction index whose estimate is acted upon
    y_target_px: float
    y_target_m: float
    t_F_hat: float


def gamma_series(y_hat: np.ndarray, times: np.ndarray, n_conv: int) -> np.ndarray:
    """gamma at sample indices n_conv .. M-1 (length M - n_conv).

    gamma(i) averages |y_hat(j) - y_hat(j-1)| / (t(j) - t(j-1)) over the
    n_conv differences ending at sample i.
    """
    y_hat = np.asarray(y_hat, dtype=float)
    times = np.asarray(times, dtype=float)
    m = len(y_hat)
    if m <= n_conv:
        return np.empty(0)
    dt = np.diff(times)
    if np.any(dt <= 0):
        raise DegenerateIntervalError("timestamps must be strictly increasing")
    rates = np.abs(np.diff(y_hat)) / dt
    kernel = np.ones(n_conv) / n_conv
    return np.convolve(rates, kernel, mode="valid")


def gamma(y_hat, times, i: int, n_conv: int) -> float:
    """gamma at a single sample index i (i >= n_conv)."""
    if i < n_conv:
        raise InvalidInputError("i must be >= n_conv")
    return float(gamma_series(y_hat[:i + 1], times[:i + 1], n_conv)[-1])


def find_t_conv(y_hat, times, cfg: ConvergenceConfig):
    """(t_conv, sample index) of the first gamma below threshold, or None."""
    g = gamma_series(y_hat, times, cfg.n_conv)
    below = np.nonzero(g < cfg.gamma_star)[0]
    if len(below) == 0:
        return None
    idx = int(below[0]) + cfg.n_conv
    return float(times[idx]), idx


def t_dec(t_F_hat: float, y_F_hat_m: float, robot: RobotEnvelope) -> float:
    """Latest start time that still reaches the predicted end point in time.

    Uses the absolute travel distance: the gripper may sit above or below
    the predicted exit height. A negative result marks an unreachable target.
    """
    if robot.v_robot <= 0:
        raise InvalidInputError("v_robot must be positive")
    return t_F_hat - abs(robot.y_start_m - y_F_hat_m) / robot.v_robot


def decide(times, y_hat_px, t_F_hat, cfg: ConvergenceConfig,
           robot: RobotEnvelope, px_to_m, policy: Policy):
    """Open-loop action choice over a finalized per-sample prediction trace.

    MOVE_AT_CONV acts at t_conv with the prediction current there.
    MOVE_AT_DEC acts at the latest sample i with t(i) <= t_dec(i) (computed
    from sample i's own prediction) that has converged at or before i.
    Returns None when no valid action time exists. Predictions after the
    action time never influence the result (single open-loop attempt).
    """
    times = np.asarray(times, dtype=float)
    y_hat_px = np.asarray(y_hat_px, dtype=float)
    t_F_hat = np.asarray(t_F_hat, dtype=float)
    conv = find_t_conv(y_hat_px, times, cfg)
    if conv is None:
        return None
    t_conv, i_conv = conv

    if policy is Policy.MOVE_AT_CONV:
        i = i_conv
        return Decision(t_conv, i, float(y_hat_px[i]),
                        float(px_to_m(y_hat_px[i])), float(t_F_hat[i]))

    best = None
    for i in range(i_conv, len(times)):
        td = t_dec(float(t_F_hat[i]), float(px_to_m(y_hat_px[i])), robot)
        if times[i] <= td:
            best = i
    if best is None:
        return None
    return Decision(float(times[best]), best, float(y_hat_px[best]),
                    float(px_to_m(y_hat_px[best])), float(t_F_hat[best]))
