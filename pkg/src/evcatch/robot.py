"""Vertical interception motion, pixel-to-height calibration, trial scoring.

Motion between two heights follows the quintic (minimum-jerk) profile
s(tau) = 10 tau^3 - 15 tau^4 + 6 tau^5, which has zero velocity and
acceleration at both endpoints, peak velocity 1.875 |dy| / T and peak
acceleration 5.7735 |dy| / T^2.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, OutOfEnvelopeError, RankDeficientError

QUINTIC_PEAK_VEL = 1.875
QUINTIC_PEAK_ACC = 5.7735

_REF_RANGE = 0.60
_REF_TIME = 1.1


@dataclass(frozen=True)
class RobotConfig:
    y_start: float = 0.60
    # limits derived so the 60 cm reference move takes exactly 1.1 s
    v_max: float = QUINTIC_PEAK_VEL * _REF_RANGE / _REF_TIME
    a_max: float = QUINTIC_PEAK_ACC * _REF_RANGE / (_REF_TIME * _REF_TIME)
    range: float = _REF_RANGE
    T_ref: float = _REF_TIME
    gripper_height: float = 0.02

    def __post_init__(self):
        if min(self.v_max, self.a_max, self.range, self.T_ref,
               self.gripper_height) <= 0:
            raise InvalidInputError("robot config values must be positive")
        if QUINTIC_PEAK_VEL * self.range / self.T_ref > self.v_max * (1 + 1e-9):
            raise InvalidInputError("v_max too low for the reference motion")
        if QUINTIC_PEAK_ACC * self.range / self.T_ref ** 2 > self.a_max * (1 + 1e-9):
            raise InvalidInputError("a_max too low for the reference motion")

    @property
    def v_average(self) -> float:
        return self.range / self.T_ref


@dataclass
class MotionPlan:
    y0: float
    yf: float
    t_start: float
    duration: float


@dataclass
class Calibration:
    """Quadratic map from pixel row to Cartesian height: a*p^2 + b*p + c."""

    a: float
    b: float
    c: float
    residual_rms: float = 0.0
    pixel_range: tuple[float, float] = (0.0, 0.0)

    def apply(self, row: float) -> float:
        return self.a * row * row + self.b * row + self.c

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump({"a": self.a, "b": self.b, "c": self.c,
                       "residual_rms": self.residual_rms,
                       "pixel_range": list(self.pixel_range)},
                      fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            d = json.load(fh)
        return cls(d["a"], d["b"], d["c"], d["residual_rms"],
                   tuple(d["pixel_range"]))


@dataclass
class TrialOutcome:
    hit: bool
    miss_distance: float
    action_time: float | None
    gripper_at_tF: float
    policy: str = ""
    strategy: str = ""


def fit_calibration(pairs) -> Calibration:
    """Least-squares quadratic fit of (pixel row, height m) pairs."""
    pairs = np.asarray(pairs, dtype=float)
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise InvalidInputError("pairs must be (N, 2)")
    rows = pairs[:, 0]
    heights = pairs[:, 1]
    if len(np.unique(rows)) < 3:
        raise RankDeficientError("need at least 3 distinct pixel rows")
    coeffs = np.polyfit(rows, heights, 2)
    resid = heights - np.polyval(coeffs, rows)
    return Calibration(float(coeffs[0]), float(coeffs[1]), float(coeffs[2]),
                       residual_rms=float(np.sqrt(np.mean(resid ** 2))),
                       pixel_range=(float(rows.min()), float(rows.max())))


def min_duration(dy: float, cfg: RobotConfig) -> float:
    """Shortest quintic duration satisfying both actuation limits."""
    dy = abs(dy)
    if dy == 0.0:
        return 0.0
    return max(QUINTIC_PEAK_VEL * dy / cfg.v_max,
               np.sqrt(QUINTIC_PEAK_ACC * dy / cfg.a_max))


def plan_motion(y0: float, yf: float, t_start: float,
                cfg: RobotConfig, duration: float | None = None) -> MotionPlan:
    dy = abs(yf - y0)
    if dy > cfg.range * (1 + 1e-9):
        raise OutOfEnvelopeError(
            f"displacement {dy:.3f} m exceeds range {cfg.range} m")
    if duration is None:
        duration = min_duration(dy, cfg)
    return MotionPlan(y0, yf, t_start, duration)


def position_at(plan: MotionPlan, t: float) -> float:
    if t <= plan.t_start or plan.duration == 0.0:
        return plan.y0 if t <= plan.t_start else plan.yf
    if t >= plan.t_start + plan.duration:
        return plan.yf
    tau = (t - plan.t_start) / plan.duration
    s = tau ** 3 * (10.0 - 15.0 * tau + 6.0 * tau * tau)
    return plan.y0 + (plan.yf - plan.y0) * s


def run_trial(y_F_m: float, t_F: float, decision, calib: Calibration,
              cfg: RobotConfig, ball_radius: float = 0.025,
              policy: str = "", strategy: str = "") -> TrialOutcome:
    """Score one interception attempt against the ground-truth exit point.

    ``decision`` is a decision.Decision or None. Without a decision the
    gripper never closes, so the trial is an unconditional miss even if the
    resting position happens to line up with the ball. Targets beyond the
    vertical envelope are clamped to the nearest reachable height; the robot
    still does its best and the miss distance is scored honestly.
    """
    threshold = cfg.gripper_height / 2.0 + ball_radius
    if decision is None:
        miss = abs(cfg.y_start - y_F_m)
        return TrialOutcome(False, miss, None, cfg.y_start,
                            policy, strategy)
    target = calib.apply(decision.y_target_px)
    target = float(np.clip(target, cfg.y_start - cfg.range,
                           cfg.y_start + cfg.range))
    plan = plan_motion(cfg.y_start, target, decision.action_time, cfg)
    gripper = position_at(plan, t_F)
    miss = abs(gripper - y_F_m)
    return TrialOutcome(miss <= threshold, miss, decision.action_time,
                        gripper, policy, strategy)
