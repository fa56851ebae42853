import csv

import pytest

from evcatch_figures.render import main


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


CONV_HEADER = ["strategy", "trajectory_pct", "y_err_mean_m", "y_err_std_m",
               "t_err_mean_s", "t_err_std_s", "count"]
TIMING_HEADER = ["trajectory_id", "strategy", "t_F", "t_conv", "t_dec",
                 "margin_s", "non_converged"]
HITS_HEADER = ["strategy", "policy", "hits", "trials"]
WINDOW_HEADER = ["bin_start_s", "bin_end_s", "y_err_mean_m", "y_err_std_m",
                 "count"]


@pytest.fixture
def conv_csv(tmp_path):
    path = tmp_path / "convergence.csv"
    rows = [["events", p, 0.1 / p, 0.02, 0.05 / p, 0.01, 10]
            for p in (20.0, 40.0, 60.0, 80.0, 100.0)]
    rows += [["events10Hz", p, 0.2 / p, 0.03, 0.08 / p, 0.02, 10]
             for p in (20.0, 40.0, 60.0, 80.0, 100.0)]
    write_csv(path, CONV_HEADER, rows)
    return path


def test_curve_band_y_and_t(conv_csv, tmp_path):
    for value in ("y", "t"):
        out = tmp_path / f"conv_{value}.svg"
        assert main(["--kind", "curve-band", "--in", str(conv_csv),
                     "--out", str(out), "--value", value]) == 0
        assert out.stat().st_size > 0


def test_error_window_curve(tmp_path):
    path = tmp_path / "error_window.csv"
    write_csv(path, WINDOW_HEADER,
              [[0.0, 0.02, 0.05, 0.01, 30], [0.02, 0.04, 0.03, 0.01, 25]])
    out = tmp_path / "window.svg"
    assert main(["--kind", "curve-band", "--in", str(path),
                 "--out", str(out)]) == 0
    assert out.stat().st_size > 0


def test_scatter_with_non_converged_marks(tmp_path):
    path = tmp_path / "timing.csv"
    rows = [[0, "events", 0.8, 0.3, 0.5, 0.2, 0],
            [1, "events", 0.9, "", "", "", 1],
            [2, "events10Hz", 0.7, 0.6, 0.4, -0.2, 0]]
    write_csv(path, TIMING_HEADER, rows)
    out = tmp_path / "timing.svg"
    assert main(["--kind", "scatter", "--in", str(path),
                 "--out", str(out)]) == 0
    assert out.stat().st_size > 0


def test_bars(tmp_path):
    path = tmp_path / "hits.csv"
    rows = [["events", "move_at_conv", 30, 50],
            ["events", "move_at_dec", 40, 50],
            ["events10Hz", "move_at_conv", 10, 50],
            ["events10Hz", "move_at_dec", 15, 50]]
    write_csv(path, HITS_HEADER, rows)
    out = tmp_path / "hits.svg"
    assert main(["--kind", "bars", "--in", str(path), "--out", str(out)]) == 0
    assert out.stat().st_size > 0


def test_empty_csv_renders_empty_axes(tmp_path):
    path = tmp_path / "hits.csv"
    write_csv(path, HITS_HEADER, [])
    out = tmp_path / "empty.svg"
    assert main(["--kind", "bars", "--in", str(path), "--out", str(out)]) == 0
    assert out.stat().st_size > 0


def test_schema_mismatch_fails(tmp_path, capsys):
    path = tmp_path / "wrong.csv"
    write_csv(path, ["a", "b"], [[1, 2]])
    out = tmp_path / "x.svg"
    assert main(["--kind", "scatter", "--in", str(path),
                 "--out", str(out)]) == 1
    assert "error:" in capsys.readouterr().err
    assert not out.exists()


def test_missing_file_fails(tmp_path, capsys):
    assert main(["--kind", "bars", "--in", str(tmp_path / "nope.csv"),
                 "--out", str(tmp_path / "x.svg")]) == 1
    assert "error:" in capsys.readouterr().err


def test_svg_output_deterministic(conv_csv, tmp_path):
    a = tmp_path / "a.svg"
    b = tmp_path / "b.svg"
    for out in (a, b):
        assert main(["--kind", "curve-band", "--in", str(conv_csv),
                     "--out", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()
