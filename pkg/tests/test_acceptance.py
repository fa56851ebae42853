"""End-to-end acceptance gate.

Runs the full desk-scale pipeline once (dataset generation, feature
extraction, per-strategy training, evaluations, interception trials) and
checks the headline behavioural claims on top of it. Each criterion prints
one PASS/FAIL line (shown even under output capture). The desk-scale
session takes several minutes.
"""

import csv
import json
import time

import numpy as np
import pytest

from evcatch.decision import (
    ConvergenceConfig,
    RobotEnvelope,
    find_t_conv,
    gamma_series,
    t_dec,
)
from evcatch.features import load_features
from evcatch.harness import main
from evcatch.model import (
    backward,
    init_params,
    load_checkpoint,
    predict_sequence,
    sequence_loss,
)
from evcatch.physics import (
    BallParams,
    CameraModel,
    bounce_times,
    position_at,
    simulate_trajectory,
)
from evcatch.robot import RobotConfig, fit_calibration, plan_motion
from evcatch.robot import position_at as robot_position_at
from evcatch.tracker import Spatial, Temporal, resample

SEED = 2026
G = 9.81

DESK_CONFIG = {
    "counts": [1000, 100, 150],
    "hidden": 64,
    "train": {"epochs": 80, "batch_size": 8},
    "strategies": {
        "events": {"kind": "spatial", "min_displacement": 2.0, "n_conv": 15},
        "events33Hz": {"kind": "temporal", "rate": 33.0, "n_conv": 3},
        "events10Hz": {"kind": "temporal", "rate": 10.0, "n_conv": 1},
        "frames30Hz": {"kind": "temporal_blur", "rate": 30.0,
                       "exposure": 0.02, "blur_limit": 3.0, "n_conv": 3},
    },
    "trials_per_cell": 50,
}

ORDERED = ["events", "events33Hz", "events10Hz"]


_CAPMAN = None


@pytest.fixture(autouse=True)
def _expose_capture_manager(request):
    global _CAPMAN
    _CAPMAN = request.config.pluginmanager.getplugin("capturemanager")


def report(name, ok, detail=""):
    line = (f"\n[ACCEPTANCE] {name}: {'PASS' if ok else 'FAIL'}"
            + (f" ({detail})" if detail else ""))
    if _CAPMAN is not None:
        with _CAPMAN.global_and_fixture_disabled():
            print(line)
    else:
        print(line)
    assert ok, f"{name}: {detail}"


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


@pytest.fixture(scope="session")
def desk(tmp_path_factory):
    root = tmp_path_factory.mktemp("desk")
    cfg = root / "config.json"
    cfg.write_text(json.dumps(DESK_CONFIG))
    data, out = root / "data", root / "out"
    t0 = time.perf_counter()
    for argv in (
        ["gen-data", "--config", str(cfg), "--seed", str(SEED),
         "--out", str(data)],
        ["train", "--config", str(cfg), "--seed", str(SEED),
         "--data", str(data), "--out", str(out)],
        ["eval-convergence", "--config", str(cfg), "--data", str(data),
         "--out", str(out)],
        ["eval-timing", "--config", str(cfg), "--data", str(data),
         "--out", str(out)],
        ["simulate", "--config", str(cfg), "--data", str(data),
         "--out", str(out)],
        ["error-window", "--config", str(cfg), "--data", str(data),
         "--out", str(out), "--strategy", "events"],
    ):
        assert main(argv) == 0, f"command failed: {argv[0]}"
    elapsed = time.perf_counter() - t0
    return {"root": root, "data": data, "out": out, "elapsed": elapsed,
            "camera": CameraModel()}


# ---------------------------------------------------------------------------
# self-contained oracles

def test_gradient_oracle():
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    worst = 0.0
    for hidden in (4, 8, 16):
        steps = int(rng.integers(10, 21))
        p = init_params(hidden, hidden)
        X = rng.uniform(0, 1, (steps, 3))
        T = rng.uniform(0, 1, (steps, 2))
        _, grads = backward(p, X, T)
        eps = 1e-5
        for name, block in p.blocks().items():
            flat = block.ravel()
            idx = rng.choice(flat.size, size=min(25, flat.size),
                             replace=False)
            for i in idx:
                orig = flat[i]
                flat[i] = orig + eps
                lp, _, _ = sequence_loss(p, X, T)
                flat[i] = orig - eps
                lm, _, _ = sequence_loss(p, X, T)
                flat[i] = orig
                fd = (lp - lm) / (2 * eps)
                g = grads[name].ravel()[i]
                worst = max(worst, abs(g - fd) / max(abs(g), abs(fd), 1e-8))
    elapsed = time.perf_counter() - t0
    report("gradient-oracle", worst < 1e-5 and elapsed < 5.0,
           f"max rel err {worst:.2e}, {elapsed:.2f}s")


def test_physics_oracle():
    cam = CameraModel()
    p = BallParams(launch_pos=(0.02, 1.0), launch_vel=(0.0, 0.0),
                   restitution=0.8)
    t_impact = bounce_times(p, 0.0, t_max=10.0)
    t1 = np.sqrt(2.0 * 1.0 / G)
    ok = abs(t_impact[0] - t1) < 1e-9
    # apex height after bounce k is e^(2k) * h
    apex_err = 0.0
    for k in range(1, 4):
        v_up = 0.8 ** k * np.sqrt(2.0 * G * 1.0)
        t_apex = t_impact[k - 1] + v_up / G
        h = position_at(p, 0.0, t_apex)[1]
        apex_err = max(apex_err, abs(h - 0.8 ** (2 * k) * 1.0))
    ok = ok and apex_err < 1e-9
    # every dense sample matches the closed form
    p2 = BallParams(launch_pos=(0.03, 0.8), launch_vel=(1.8, 0.7),
                    restitution=0.75)
    traj, _ = simulate_trajectory(p2, cam)
    dense_err = max(
        np.hypot(*(traj.positions[i] - np.asarray(position_at(p2, 0.0, t))))
        for i, t in enumerate(traj.times))
    ok = ok and dense_err < 1e-9
    report("physics-oracle", ok,
           f"impact err {abs(t_impact[0] - t1):.1e}, apex err {apex_err:.1e},"
           f" dense err {dense_err:.1e}")


def test_sampler_invariants():
    rng = np.random.default_rng(1)
    ok = True
    detail = []
    for _ in range(1000):
        n = int(rng.integers(2, 120))
        arr = np.column_stack([
            np.cumsum(rng.uniform(1e-3, 0.02, n)),
            np.cumsum(rng.normal(0, 2.0, n)),
            np.cumsum(rng.normal(0, 2.0, n)),
        ])
        out = resample(arr, Spatial(2.0))
        d = np.hypot(np.diff(out[:, 1]), np.diff(out[:, 2]))
        if len(d) and d.min() < 2.0:
            ok = False
            detail.append("spatial spacing violated")
            break
        rate = float(rng.uniform(5.0, 60.0))
        tout = resample(arr, Temporal(rate))
        if len(tout):
            offsets = np.abs(tout[:, 0] * rate - np.round(tout[:, 0] * rate))
            if offsets.max() / rate > 1e-9:
                ok = False
                detail.append("temporal tick grid violated")
                break
    # fast track: mean speed > 2 px * rate
    rate = 10.0
    arr = np.column_stack([np.linspace(0, 1, 3000),
                           np.linspace(0, 400, 3000), np.zeros(3000)])
    if not len(resample(arr, Spatial(2.0))) > len(resample(arr, Temporal(rate))):
        ok = False
        detail.append("spatial not denser than temporal on fast track")
    report("sampler-invariants", ok, "; ".join(detail) or "1000 tracks")


def test_eq123_unit_suite():
    ok = abs(gamma_series([0.50, 0.47], [0.0, 0.1], 1)[0] - 0.3) < 1e-12
    ok = ok and abs(gamma_series([0.0, 0.02, 0.03], [0.0, 0.1, 0.2], 2)[0]
                    - 0.15) < 1e-12
    robot = RobotEnvelope(y_start_m=0.60, v_robot=0.545)
    ok = ok and abs(t_dec(1.0, 0.30, robot) - 0.4495) < 1e-4
    rng = np.random.default_rng(2)
    for _ in range(1000):
        n = int(rng.integers(6, 40))
        t = np.cumsum(rng.uniform(1e-3, 0.05, n))
        y = np.cumsum(rng.normal(0, 1, n))
        n_conv = int(rng.integers(1, 5))
        g1, g2 = np.sort(rng.uniform(0.1, 200, 2))
        lo = find_t_conv(y, t, ConvergenceConfig(n_conv, float(g1)))
        hi = find_t_conv(y, t, ConvergenceConfig(n_conv, float(g2)))
        if lo is not None and (hi is None or hi[0] > lo[0]):
            ok = False
            break
    for _ in range(1000):
        t_F = float(rng.uniform(0.2, 2.0))
        y_F = float(rng.uniform(0.0, 1.2))
        v1, v2 = np.sort(rng.uniform(0.05, 3.0, 2))
        if t_dec(t_F, y_F, RobotEnvelope(v_robot=float(v2))) < \
                t_dec(t_F, y_F, RobotEnvelope(v_robot=float(v1))):
            ok = False
            break
    report("eq123-unit-suite", ok)


def test_calibration_and_quintic():
    rows = np.linspace(10, 220, 8)
    c = fit_calibration([(p, 2 * p * p + 3 * p + 1) for p in rows])
    coeff_err = max(abs(c.a - 2), abs(c.b - 3), abs(c.c - 1))
    plan = plan_motion(0.1, 0.7, 0.5, RobotConfig())
    h = 1e-7
    deriv = max(
        abs(robot_position_at(plan, t + h) - robot_position_at(plan, t - h))
        / (2 * h)
        for t in (plan.t_start, plan.t_start + plan.duration))
    ref = plan_motion(0.3, 0.9, 0.0, RobotConfig(), duration=1.1)
    speed_err = abs(abs(ref.yf - ref.y0) / ref.duration - 0.60 / 1.1)
    ok = coeff_err < 1e-9 and deriv < 1e-6 and speed_err < 1e-9
    report("calibration-quintic", ok,
           f"coeff {coeff_err:.1e}, endpoint vel {deriv:.1e}, "
           f"avg speed {speed_err:.1e}")


# ---------------------------------------------------------------------------
# desk-scale behavioural criteria

def _median_error_at_mark(records, name, params, norm, camera, mark=0.8):
    errs = []
    for rec in records:
        arr = rec["tracks"][name]
        if len(arr) < 2:
            continue
        _, y_px, _ = predict_sequence(params, arr, norm)
        i = min(int(np.ceil(mark * len(arr))) - 1, len(arr) - 1)
        errs.append(abs(camera.row_to_height(y_px[i]) - rec["y_F_m"]))
    return float(np.median(errs))


def test_desk_training_accuracy_and_ordering(desk):
    records = load_features(desk["out"] / "features_test.jsonl")
    camera = desk["camera"]
    params, norm, _ = load_checkpoint(desk["out"] / "model_events.ckpt")
    med = _median_error_at_mark(records, "events", params, norm, camera)

    # trajectory-% at which the binned mean error first drops below 3.5 cm
    header, rows = read_csv(desk["out"] / "convergence.csv")
    first_below = {}
    for name in ORDERED:
        pcts = [float(r[1]) for r in rows
                if r[0] == name and r[2] != "" and float(r[2]) < 0.035]
        first_below[name] = min(pcts) if pcts else 101.0
    ordering = (first_below["events"] <= first_below["events33Hz"]
                <= first_below["events10Hz"])
    budget = desk["elapsed"] <= 30 * 60
    report("desk-training",
           med < 0.035 and ordering and budget,
           f"events median err@80% {med * 100:.2f} cm, first-below "
           f"{first_below}, pipeline {desk['elapsed'] / 60:.1f} min")


def test_non_convergence_ordering(desk):
    _, rows = read_csv(desk["out"] / "timing_summary.csv")
    counts = {r[0]: int(r[1]) for r in rows}
    ok = counts["events"] < counts["events33Hz"] < counts["events10Hz"]
    report("non-convergence-ordering", ok,
           f"events {counts['events']}, 33Hz {counts['events33Hz']}, "
           f"10Hz {counts['events10Hz']} of 150")


def test_interception_hit_orderings(desk):
    _, rows = read_csv(desk["out"] / "hits.csv")
    hits = {(r[0], r[1]): int(r[2]) for r in rows}
    ok = True
    detail = []
    for pol in ("move_at_conv", "move_at_dec"):
        seq = [hits[(n, pol)] for n in ORDERED]
        detail.append(f"{pol} {seq}")
        if not seq[0] >= seq[1] >= seq[2]:
            ok = False
    if hits[("events", "move_at_dec")] < hits[("events", "move_at_conv")]:
        ok = False
        detail.append("dec < conv for events")
    blur = hits[("frames30Hz", "move_at_conv")]
    detail.append(f"blur@conv {blur}")
    if blur > 2:
        ok = False
    report("interception-hits", ok, "; ".join(detail))


def test_blur_limit_below_median_displacement(desk):
    # confirm the blur experiment is in the failure regime the criterion
    # assumes: median per-exposure displacement above the 3 px blur limit
    records = load_features(desk["out"] / "features_test.jsonl")
    disp = []
    for rec in records:
        arr = rec["tracks"]["frames30Hz__clean"]
        if len(arr) < 2:
            continue
        v = np.hypot(np.diff(arr[:, 1]), np.diff(arr[:, 2])) / np.diff(arr[:, 0])
        disp.extend(v * 0.02)
    med = float(np.median(disp))
    report("blur-regime", med > 3.0, f"median per-exposure motion {med:.1f} px")


def test_determinism_byte_reproducible(tmp_path):
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps({
        "counts": [10, 4, 5], "hidden": 8,
        "train": {"epochs": 2, "batch_size": 4},
        "strategies": {
            "events": {"kind": "spatial", "min_displacement": 2.0,
                       "n_conv": 5},
            "events10Hz": {"kind": "temporal", "rate": 10.0, "n_conv": 1},
        },
        "trials_per_cell": 5,
    }))
    outputs = []
    for run in ("a", "b"):
        data, out = tmp_path / f"data_{run}", tmp_path / f"out_{run}"
        common = ["--config", str(cfg_path)]
        assert main(["gen-data", *common, "--seed", "5",
                     "--out", str(data)]) == 0
        assert main(["train", *common, "--seed", "5", "--data", str(data),
                     "--out", str(out)]) == 0
        for cmd in ("eval-convergence", "eval-timing", "simulate"):
            assert main([cmd, *common, "--data", str(data),
                         "--out", str(out)]) == 0
        blobs = {}
        for f in sorted(data.glob("*")) + sorted(out.glob("*")):
            blobs[f.name] = f.read_bytes()
        outputs.append(blobs)
    same = set(outputs[0]) == set(outputs[1]) and all(
        outputs[0][k] == outputs[1][k] for k in outputs[0])
    report("determinism", same,
           f"{len(outputs[0])} artifacts byte-identical")
