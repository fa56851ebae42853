"""Experiment runner CLI.

Subcommands: gen-data, calibrate, train, eval-convergence, eval-timing,
simulate, error-window. Configuration is a single JSON document; CLI flags
override config keys. All outputs (CSV with fixed headers, JSON manifests)
are byte-reproducible under a fixed seed in deterministic mode.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import decision as dec
from . import features as feat
from . import physics, robot, training
from .errors import EvcatchError, InvalidInputError
from .model import Normalization, load_checkpoint, predict_sequence, save_checkpoint
from .physics import CameraModel, TrajectoryDistribution, camera_from_manifest

DEFAULT_STRATEGIES = {
    "events": {"kind": "spatial", "min_displacement": 2.0, "n_conv": 15},
    "events33Hz": {"kind": "temporal", "rate": 33.0, "n_conv": 3},
    "events10Hz": {"kind": "temporal", "rate": 10.0, "n_conv": 1},
    "frames60Hz": {"kind": "temporal", "rate": 60.0, "n_conv": 6},
    "frames30Hz": {"kind": "temporal_blur", "rate": 30.0, "exposure": 0.02,
                   "blur_limit": 3.0, "n_conv": 3},
}

DEFAULT_CONFIG = {
    "counts": [5000, 250, 150],
    "distribution": TrajectoryDistribution().to_dict(),
    "table_height": 0.0,
    "sample_rate": 500.0,
    "ball_radius": 0.025,
    "noise_rate": 0.0,
    "strategies": DEFAULT_STRATEGIES,
    "hidden": 350,
    "train": {"lr0": 0.01, "decay_factor": 0.5, "patience": 3,
              "epochs": 60, "batch_size": 8, "w_y": 1.0, "w_t": 1.0},
    "robot": {"y_start": 0.50, "a_max": 30.0, "gripper_height": 0.02},
    "policies": ["move_at_conv", "move_at_dec"],
    "trials_per_cell": 50,
    "error_threshold_m": 0.035,
    "calibration_points": 8,
    "calibration_repeats": 10,
    "calibration_noise_m": 0.002,
    "pct_bin_width": 2.0,
    "error_window_bin_s": 0.02,
}


def load_config(path=None, overrides=None):
    cfg = json.loads(json.dumps(DEFAULT_CONFIG))
    for extra in (json.load(open(path)) if path else None, overrides):
        if not extra:
            continue
        # a user-supplied strategy table replaces the default set wholesale;
        # merging would silently keep strategies the user removed
        if "strategies" in extra:
            cfg["strategies"] = json.loads(json.dumps(extra["strategies"]))
            extra = {k: v for k, v in extra.items() if k != "strategies"}
        _deep_update(cfg, extra)
    return cfg


def _deep_update(base, extra):
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _deep_update(base[k], v)
        else:
            base[k] = v


def _write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def _robot_config(cfg):
    keys = {k: v for k, v in cfg.get("robot", {}).items()
            if k in {"y_start", "v_max", "a_max", "range", "T_ref",
                     "gripper_height"}}
    return robot.RobotConfig(**keys)


def _linear_calibration(camera: CameraModel) -> robot.Calibration:
    """Noise-free calibration equal to the camera's exact row -> height map."""
    return robot.Calibration(0.0, -camera.meters_per_pixel, camera.origin[1],
                             residual_rms=0.0,
                             pixel_range=(0.0, float(camera.height_px - 1)))


# ---------------------------------------------------------------------------
# data preparation shared by train / eval commands

def _load_manifest(data_dir):
    with open(Path(data_dir) / "manifest.json") as fh:
        return json.load(fh)


def _ensure_features(cfg, data_dir, out_dir, split):
    manifest = _load_manifest(data_dir)
    camera = camera_from_manifest(manifest)
    cache = Path(out_dir) / f"features_{split}.jsonl"
    if not cache.exists():
        feat.cache_features(Path(data_dir) / f"{split}.jsonl", cache, camera,
                            cfg["ball_radius"], cfg["strategies"],
                            cfg["noise_rate"])
    return feat.load_features(cache), camera


def _norm_for(camera: CameraModel) -> Normalization:
    return Normalization(width_px=camera.width_px, height_px=camera.height_px)


def calibrate_gamma_star(records, params, norm, camera, n_conv,
                         strategy_name, env, quantile=0.99):
    """Threshold letting ~all validation trajectories converge in time.

    Each validation trajectory's deadline is the decision deadline implied
    by its final prediction. It converges before that deadline iff the
    threshold exceeds its minimum gamma over the samples up to the deadline,
    so the ``quantile`` of those per-trajectory minima is the tightest
    threshold letting that fraction of feasible trajectories converge in
    time.
    """
    minima = []
    for rec in records:
        arr = rec["tracks"][strategy_name]
        if len(arr) <= n_conv:
            continue
        times, y_px, t_F = predict_sequence(params, arr, norm)
        g = dec.gamma_series(y_px, times, n_conv)
        td = dec.t_dec(float(t_F[-1]), camera.row_to_height(y_px[-1]), env)
        before = g[times[n_conv:] <= td]
        if len(before):
            minima.append(float(before.min()))
    if not minima:
        return 1.0
    return float(np.percentile(minima, 100.0 * quantile))


def _strategy_meta(cfg, out_dir, name):
    path = Path(out_dir) / f"model_{name}.ckpt"
    if not path.exists():
        raise InvalidInputError(f"missing checkpoint {path}")
    return load_checkpoint(path)


def _predict_all(records, params, norm, strategy_name, n_conv):
    """Per-trajectory prediction traces, skipping tracks too short for gamma."""
    out = []
    for rec in records:
        arr = rec["tracks"][strategy_name]
        if len(arr) < 2:
            out.append((rec, None))
            continue
        times, y_px, t_F = predict_sequence(params, arr, norm)
        out.append((rec, (times, y_px, t_F)))
    return out


# ---------------------------------------------------------------------------
# subcommands

def cmd_gen_data(args):
    cfg = load_config(args.config)
    dist = TrajectoryDistribution.from_dict(cfg["distribution"])
    camera = CameraModel()
    counts = cfg["counts"] if args.counts is None else args.counts
    physics.generate_dataset(dist, counts, args.seed, args.out, camera,
                             cfg["table_height"], cfg["sample_rate"])
    print(f"wrote dataset splits {counts} to {args.out}")
    return 0


def cmd_calibrate(args):
    cfg = load_config(args.config)
    camera = CameraModel()
    rng = np.random.default_rng(args.seed)
    rows = np.linspace(10, camera.height_px - 10, cfg["calibration_points"])
    pairs = []
    for row in rows:
        for _ in range(cfg["calibration_repeats"]):
            noise = rng.normal(0.0, cfg["calibration_noise_m"])
            pairs.append((row, camera.row_to_height(row) + noise))
    calib = robot.fit_calibration(pairs)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    calib.to_json(out)
    print(f"calibration a={calib.a:.3e} b={calib.b:.3e} c={calib.c:.3e} "
          f"rms={calib.residual_rms:.4f} -> {out}")
    return 0


def cmd_train(args):
    cfg = load_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_recs, camera = _ensure_features(cfg, args.data, out_dir, "train")
    val_recs, _ = _ensure_features(cfg, args.data, out_dir, "val")
    norm = _norm_for(camera)
    names = args.strategies or list(cfg["strategies"])
    tc = cfg["train"]
    for name in names:
        strat_cfg = cfg["strategies"][name]
        train_cfg = training.TrainConfig(
            lr0=tc["lr0"], decay_factor=tc["decay_factor"],
            patience=tc["patience"], epochs=args.epochs or tc["epochs"],
            batch_size=tc["batch_size"], seed=args.seed,
            w_y=tc["w_y"], w_t=tc["w_t"])
        train_key = feat.training_key(name, strat_cfg)
        train_seqs = feat.sequences_for_strategy(train_recs, train_key, norm)
        val_seqs = feat.sequences_for_strategy(val_recs, train_key, norm)
        params, curves = training.train(
            train_seqs, val_seqs, cfg["hidden"], train_cfg,
            log=(lambda row, n=name: print(
                f"[{n}] epoch {row['epoch']:3d} train {row['train_loss']:.5f} "
                f"val {row['val_loss']:.5f} lr {row['lr']:.4g}"))
            if args.verbose else None)
        rcfg = _robot_config(cfg)
        env = dec.RobotEnvelope(y_start_m=rcfg.y_start,
                                v_robot=rcfg.v_average)
        gamma_star = calibrate_gamma_star(
            val_recs, params, norm, camera, strat_cfg["n_conv"], name, env)
        meta = {"strategy": name, "n_conv": strat_cfg["n_conv"],
                "gamma_star": gamma_star, "seed": args.seed,
                "train_key": train_key,
                "train_config": {"lr0": train_cfg.lr0,
                                 "decay_factor": train_cfg.decay_factor,
                                 "patience": train_cfg.patience,
                                 "epochs": train_cfg.epochs,
                                 "batch_size": train_cfg.batch_size}}
        save_checkpoint(out_dir / f"model_{name}.ckpt", params, meta, norm)
        _write_csv(out_dir / f"curves_{name}.csv",
                   ["epoch", "train_loss", "val_loss", "lr", "best_val_loss"],
                   [[r["epoch"], r["train_loss"], r["val_loss"], r["lr"],
                     r["best_val_loss"]] for r in curves])
        print(f"trained {name}: best val {min(c['val_loss'] for c in curves):.5f} "
              f"gamma* {gamma_star:.3f} px/s")
    return 0


def cmd_eval_convergence(args):
    cfg = load_config(args.config)
    out_dir = Path(args.out)
    records, camera = _ensure_features(cfg, args.data, out_dir, "test")
    bw = cfg["pct_bin_width"]
    n_bins = int(round(100.0 / bw))
    rows = []
    for name in cfg["strategies"]:
        params, norm, meta = _strategy_meta(cfg, out_dir, name)
        y_err_bins = [[] for _ in range(n_bins)]
        t_err_bins = [[] for _ in range(n_bins)]
        for rec, trace in _predict_all(records, params, norm, name,
                                       meta["n_conv"]):
            if trace is None:
                continue
            times, y_px, t_F = trace
            m = len(times)
            for i in range(m):
                pct = 100.0 * (i + 1) / m
                b = min(int(pct / bw), n_bins - 1)
                y_err_bins[b].append(
                    abs(camera.row_to_height(y_px[i]) - rec["y_F_m"]))
                t_err_bins[b].append(abs(t_F[i] - rec["t_F"]))
        for b in range(n_bins):
            ye = np.asarray(y_err_bins[b])
            te = np.asarray(t_err_bins[b])
            if len(ye) == 0:
                rows.append([name, (b + 1) * bw, "", "", "", "", 0])
            else:
                rows.append([name, (b + 1) * bw,
                             float(ye.mean()), float(ye.std()),
                             float(te.mean()), float(te.std()), len(ye)])
    path = _write_csv(out_dir / "convergence.csv",
                      ["strategy", "trajectory_pct", "y_err_mean_m",
                       "y_err_std_m", "t_err_mean_s", "t_err_std_s", "count"],
                      rows)
    print(f"wrote {path}")
    return 0


def _timing_rows(cfg, records, camera, out_dir):
    env = dec.RobotEnvelope(y_start_m=_robot_config(cfg).y_start,
                            v_robot=_robot_config(cfg).v_average)
    rows = []
    counts = {}
    for name in cfg["strategies"]:
        params, norm, meta = _strategy_meta(cfg, out_dir, name)
        ccfg = dec.ConvergenceConfig(meta["n_conv"], meta["gamma_star"])
        n_fail = 0
        for rec, trace in _predict_all(records, params, norm, name,
                                       meta["n_conv"]):
            if trace is None:
                n_fail += 1
                rows.append([rec["id"], name, rec["t_F"], "", "", "", 1])
                continue
            times, y_px, t_F = trace
            try:
                conv = dec.find_t_conv(y_px, times, ccfg)
            except EvcatchError:
                conv = None
            # deadline from the trajectory's best (final) prediction; a run
            # that only converges after it is counted as non-converged
            td = dec.t_dec(float(t_F[-1]), camera.row_to_height(y_px[-1]),
                           env)
            if conv is None:
                n_fail += 1
                rows.append([rec["id"], name, rec["t_F"], "", td, "", 1])
                continue
            t_conv, i = conv
            late = t_conv > td
            n_fail += int(late)
            rows.append([rec["id"], name, rec["t_F"], t_conv, td,
                         td - t_conv, int(late)])
        counts[name] = n_fail
    return rows, counts


def cmd_eval_timing(args):
    cfg = load_config(args.config)
    out_dir = Path(args.out)
    records, camera = _ensure_features(cfg, args.data, out_dir, "test")
    rows, counts = _timing_rows(cfg, records, camera, out_dir)
    path = _write_csv(out_dir / "timing.csv",
                      ["trajectory_id", "strategy", "t_F", "t_conv", "t_dec",
                       "margin_s", "non_converged"],
                      rows)
    summary = [[name, counts[name]] for name in cfg["strategies"]]
    spath = _write_csv(out_dir / "timing_summary.csv",
                       ["strategy", "non_converged_count"], summary)
    print(f"wrote {path} and {spath}: non-converged {counts}")
    return 0


def cmd_simulate(args):
    cfg = load_config(args.config)
    out_dir = Path(args.out)
    records, camera = _ensure_features(cfg, args.data, out_dir, "test")
    rcfg = _robot_config(cfg)
    env = dec.RobotEnvelope(y_start_m=rcfg.y_start, v_robot=rcfg.v_average)
    if args.calibration:
        calib = robot.Calibration.from_json(args.calibration)
    else:
        calib = _linear_calibration(camera)
    n_trials = args.trials or cfg["trials_per_cell"]
    rows = []
    hits = {}
    for name in cfg["strategies"]:
        params, norm, meta = _strategy_meta(cfg, out_dir, name)
        ccfg = dec.ConvergenceConfig(meta["n_conv"], meta["gamma_star"])
        traces = _predict_all(records[:n_trials], params, norm, name,
                              meta["n_conv"])
        for pol_name in cfg["policies"]:
            policy = dec.Policy(pol_name)
            n_hit = 0
            for rec, trace in traces:
                if trace is None:
                    d = None
                else:
                    times, y_px, t_F = trace
                    try:
                        d = dec.decide(times, y_px, t_F, ccfg, env,
                                       calib.apply, policy)
                    except EvcatchError:
                        d = None
                outcome = robot.run_trial(rec["y_F_m"], rec["t_F"], d, calib,
                                          rcfg, cfg["ball_radius"],
                                          policy=pol_name, strategy=name)
                n_hit += int(outcome.hit)
                rows.append([rec["id"], name, pol_name,
                             int(outcome.hit), outcome.miss_distance,
                             "" if outcome.action_time is None
                             else outcome.action_time,
                             outcome.gripper_at_tF, rec["t_F"]])
            hits[(name, pol_name)] = n_hit
    path = _write_csv(out_dir / "trials.csv",
                      ["trajectory_id", "strategy", "policy", "hit",
                       "miss_distance_m", "action_time_s", "gripper_at_tF_m",
                       "t_F"],
                      rows)
    summary = [[n, p, hits[(n, p)], n_trials]
               for n in cfg["strategies"] for p in cfg["policies"]]
    spath = _write_csv(out_dir / "hits.csv",
                       ["strategy", "policy", "hits", "trials"], summary)
    print(f"wrote {path} and {spath}")
    for (n, p), h in hits.items():
        print(f"  {n:12s} {p:14s} {h}/{n_trials}")
    return 0


def cmd_error_window(args):
    cfg = load_config(args.config)
    out_dir = Path(args.out)
    records, camera = _ensure_features(cfg, args.data, out_dir, "test")
    name = args.strategy
    params, norm, meta = _strategy_meta(cfg, out_dir, name)
    ccfg = dec.ConvergenceConfig(meta["n_conv"], meta["gamma_star"])
    env = dec.RobotEnvelope(y_start_m=_robot_config(cfg).y_start,
                            v_robot=_robot_config(cfg).v_average)
    bw = cfg["error_window_bin_s"]
    bins = {}
    for rec, trace in _predict_all(records, params, norm, name,
                                   meta["n_conv"]):
        if trace is None:
            continue
        times, y_px, t_F = trace
        try:
            conv = dec.find_t_conv(y_px, times, ccfg)
        except EvcatchError:
            conv = None
        if conv is None:
            continue
        t_conv, i_conv = conv
        td = dec.t_dec(float(t_F[-1]), camera.row_to_height(y_px[-1]), env)
        for i in range(i_conv, len(times)):
            if times[i] > td:
                break
            b = int((times[i] - t_conv) / bw)
            bins.setdefault(b, []).append(
                abs(camera.row_to_height(y_px[i]) - rec["y_F_m"]))
    rows = []
    for b in sorted(bins):
        errs = np.asarray(bins[b])
        rows.append([b * bw, (b + 1) * bw, float(errs.mean()),
                     float(errs.std()), len(errs)])
    path = _write_csv(out_dir / "error_window.csv",
                      ["bin_start_s", "bin_end_s", "y_err_mean_m",
                       "y_err_std_m", "count"],
                      rows)
    print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="evcatch")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed_required=True):
        sp.add_argument("--config", default=None, help="JSON config file")
        if seed_required:
            sp.add_argument("--seed", type=int, required=True)

    sp = sub.add_parser("gen-data", help="generate trajectory dataset splits")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--counts", type=int, nargs=3, default=None,
                    metavar=("TRAIN", "VAL", "TEST"))
    sp.set_defaults(func=cmd_gen_data)

    sp = sub.add_parser("calibrate", help="fit the pixel-to-height calibration")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("train", help="train one model per sampling strategy")
    common(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--strategies", nargs="*", default=None)
    sp.add_argument("--epochs", type=int, default=None)
    sp.add_argument("--verbose", action="store_true")
    sp.set_defaults(func=cmd_train)

    for cmd, fn in (("eval-convergence", cmd_eval_convergence),
                    ("eval-timing", cmd_eval_timing)):
        sp = sub.add_parser(cmd)
        common(sp, seed_required=False)
        sp.add_argument("--data", required=True)
        sp.add_argument("--out", required=True)
        sp.set_defaults(func=fn)

    sp = sub.add_parser("simulate", help="run interception trials")
    common(sp, seed_required=False)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--calibration", default=None)
    sp.add_argument("--trials", type=int, default=None)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("error-window")
    common(sp, seed_required=False)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--strategy", default="events")
    sp.set_defaults(func=cmd_error_window)

    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EvcatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
