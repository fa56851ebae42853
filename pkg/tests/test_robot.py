import numpy as np
import pytest

from evcatch.decision import Decision
from evcatch.errors import (
    InvalidInputError,
    OutOfEnvelopeError,
    RankDeficientError,
)
from evcatch.robot import (
    QUINTIC_PEAK_ACC,
    QUINTIC_PEAK_VEL,
    Calibration,
    MotionPlan,
    RobotConfig,
    fit_calibration,
    min_duration,
    plan_motion,
    position_at,
    run_trial,
)

CFG = RobotConfig()


def quintic(tau):
    return 10 * tau ** 3 - 15 * tau ** 4 + 6 * tau ** 5


class TestQuinticProfile:
    def test_boundary_identities(self):
        assert quintic(0.0) == 0.0
        assert quintic(1.0) == 1.0
        # analytic derivatives: s' = 30 t^2 - 60 t^3 + 30 t^4,
        # s'' = 60 t - 180 t^2 + 120 t^3
        for tau in (0.0, 1.0):
            d1 = 30 * tau ** 2 - 60 * tau ** 3 + 30 * tau ** 4
            d2 = 60 * tau - 180 * tau ** 2 + 120 * tau ** 3
            assert d1 == 0.0
            assert d2 == 0.0

    def test_midpoint_symmetry(self):
        plan = plan_motion(0.2, 0.8, 0.0, CFG)
        mid = position_at(plan, plan.duration / 2)
        assert mid == pytest.approx(0.5, abs=1e-12)

    def test_peak_velocity_factor(self):
        # numeric max of s'(tau) matches the closed-form 1.875 factor
        tau = np.linspace(0, 1, 200001)
        d1 = 30 * tau ** 2 - 60 * tau ** 3 + 30 * tau ** 4
        assert d1.max() == pytest.approx(QUINTIC_PEAK_VEL, abs=1e-9)

    def test_peak_acceleration_factor(self):
        tau = np.linspace(0, 1, 2000001)
        d2 = 60 * tau - 180 * tau ** 2 + 120 * tau ** 3
        assert d2.max() == pytest.approx(QUINTIC_PEAK_ACC, abs=1e-4)

    def test_endpoint_derivatives_by_central_difference(self):
        plan = plan_motion(0.1, 0.7, 0.5, CFG)
        h = 1e-7
        for t in (plan.t_start, plan.t_start + plan.duration):
            v = (position_at(plan, t + h) - position_at(plan, t - h)) / (2 * h)
            assert abs(v) < 1e-6


class TestPlanMotion:
    def test_reference_move_average_speed(self):
        plan = plan_motion(0.3, 0.9, 0.0, CFG, duration=1.1)
        avg = abs(plan.yf - plan.y0) / plan.duration
        assert avg == pytest.approx(0.60 / 1.1, abs=1e-9)

    def test_default_limits_give_reference_duration(self):
        plan = plan_motion(0.3, 0.9, 0.0, CFG)
        assert plan.duration == pytest.approx(1.1, abs=1e-9)

    def test_shrinking_duration_violates_a_limit(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            dy = float(rng.uniform(0.01, CFG.range))
            T = min_duration(dy, CFG)
            T99 = 0.99 * T
            peak_v = QUINTIC_PEAK_VEL * dy / T99
            peak_a = QUINTIC_PEAK_ACC * dy / T99 ** 2
            assert peak_v > CFG.v_max or peak_a > CFG.a_max

    def test_zero_displacement(self):
        plan = plan_motion(0.5, 0.5, 0.0, CFG)
        assert plan.duration == 0.0
        assert position_at(plan, 1.0) == 0.5

    def test_out_of_envelope(self):
        with pytest.raises(OutOfEnvelopeError):
            plan_motion(0.0, CFG.range + 0.01, 0.0, CFG)

    def test_position_clamps_outside_plan(self):
        plan = plan_motion(0.2, 0.6, 1.0, CFG)
        assert position_at(plan, 0.0) == 0.2
        assert position_at(plan, 1.0) == 0.2
        assert position_at(plan, 1.0 + plan.duration) == 0.6
        assert position_at(plan, 99.0) == 0.6


class TestRobotConfig:
    def test_average_speed_default(self):
        assert CFG.v_average == pytest.approx(0.545, abs=1e-3)
        assert CFG.v_average == pytest.approx(0.60 / 1.1, abs=1e-12)

    def test_rejects_limits_below_reference_motion(self):
        with pytest.raises(InvalidInputError):
            RobotConfig(v_max=0.5)
        with pytest.raises(InvalidInputError):
            RobotConfig(a_max=1.0)
        with pytest.raises(InvalidInputError):
            RobotConfig(gripper_height=0.0)


class TestCalibration:
    def test_noiseless_quadratic_recovered(self):
        rows = np.linspace(10, 220, 8)
        pairs = [(p, 2 * p * p + 3 * p + 1) for p in rows]
        c = fit_calibration(pairs)
        assert c.a == pytest.approx(2.0, abs=1e-9)
        assert c.b == pytest.approx(3.0, abs=1e-9)
        assert c.c == pytest.approx(1.0, abs=1e-9)
        assert c.residual_rms < 1e-9

    def test_noise_residual_matches_sigma(self):
        rng = np.random.default_rng(1)
        sigma = 0.002
        rows = np.repeat(np.linspace(20, 210, 8), 10)
        heights = 1.15 - rows * 0.005 + rng.normal(0, sigma, rows.size)
        c = fit_calibration(np.column_stack([rows, heights]))
        assert abs(c.residual_rms - sigma) < 3 * sigma / np.sqrt(80)

    def test_linear_data_gives_small_quadratic_term(self):
        rows = np.linspace(0, 239, 12)
        pairs = np.column_stack([rows, 1.15 - rows * 0.005])
        c = fit_calibration(pairs)
        assert abs(c.a) < 1e-12

    def test_rank_deficient(self):
        with pytest.raises(RankDeficientError):
            fit_calibration([(10.0, 1.0), (10.0, 1.1), (20.0, 0.9)])

    def test_json_round_trip(self, tmp_path):
        c = Calibration(1e-6, -0.005, 1.15, 0.0012, (10.0, 220.0))
        path = tmp_path / "calib.json"
        c.to_json(path)
        assert Calibration.from_json(path) == c


def exact_calib():
    # exact linear pixel-to-height map with no quadratic term
    return Calibration(0.0, -1.5 / 304.0, 1.15)


def make_decision(action_time, y_target_m, t_F_hat):
    calib = exact_calib()
    row = (calib.c - y_target_m) / -calib.b
    return Decision(action_time, 0, row, y_target_m, t_F_hat)


class TestRunTrial:
    def test_near_miss_within_threshold_is_hit(self):
        # gripper ends at 0.32 m, ball exits at 0.30 m -> 2 cm miss, a hit
        d = make_decision(0.0, 0.32, 5.0)
        out = run_trial(0.30, 5.0, d, exact_calib(), CFG)
        assert out.gripper_at_tF == pytest.approx(0.32, abs=1e-9)
        assert out.miss_distance == pytest.approx(0.02, abs=1e-9)
        assert out.hit

    def test_no_decision_is_a_miss(self):
        out = run_trial(0.20, 1.0, None, exact_calib(), CFG)
        assert not out.hit
        assert out.miss_distance == pytest.approx(abs(CFG.y_start - 0.20))
        assert out.action_time is None

    def test_timely_exact_target_hits(self):
        y_F = 0.25
        d = make_decision(0.0, y_F, 2.0)  # plenty of time for the move
        out = run_trial(y_F, 2.0, d, exact_calib(), CFG)
        assert out.miss_distance < 1e-9
        assert out.hit

    def test_hit_symmetric_in_offset_sign(self):
        for sign in (+1, -1):
            d = make_decision(0.0, 0.5 + sign * 0.034, 5.0)
            out = run_trial(0.5, 5.0, d, exact_calib(), CFG)
            assert out.hit
            d = make_decision(0.0, 0.5 + sign * 0.037, 5.0)
            out = run_trial(0.5, 5.0, d, exact_calib(), CFG)
            assert not out.hit

    def test_late_decision_catches_gripper_mid_motion(self):
        y_F = 0.10
        d = make_decision(0.0, y_F, 0.3)  # exit before the move completes
        out = run_trial(y_F, 0.3, d, exact_calib(), CFG)
        assert CFG.y_start > out.gripper_at_tF > y_F
        assert not out.hit

    def test_unreachable_target_clamped(self):
        y_F = CFG.y_start + CFG.range + 0.3
        d = make_decision(0.0, y_F, 5.0)
        out = run_trial(y_F, 5.0, d, exact_calib(), CFG)
        assert out.gripper_at_tF == pytest.approx(CFG.y_start + CFG.range)
        assert not out.hit
