import csv
import io
import json
import os

import pytest

from qkdbounds import cli
from qkdbounds.protocol import detector_db
from qkdbounds.sweep import (
    CSV_HEAD,
    WORKERS_ENV,
    SweepConfig,
    emit,
    from_json,
    grid_values,
    parse_grid,
    run_sweep,
    to_csv,
    to_json,
    worker_count,
)

SMALL = dict(modes=("two-way",), loss=(20.0, 21.0, 1.0))


@pytest.fixture(scope="module")
def small_curve():
    return run_sweep(SweepConfig(**SMALL))


def run_cli(args, capsys):
    code = cli.main(args)
    out, err = capsys.readouterr()
    return code, out, err


def test_grid_parsing():
    assert parse_grid("0:60:0.5") == (0.0, 60.0, 0.5)
    assert grid_values(0, 1, 0.25) == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert grid_values(0, 0.3, 0.1) == [0.0, 0.1, 0.2, 0.3]
    for bad in ("1:2", "a:b:c", "1:2:3:4"):
        with pytest.raises(ValueError):
            parse_grid(bad)


@pytest.mark.parametrize(
    "fields",
    [
        dict(modes=(), loss=(0, 1, 1)),
        dict(modes=("two-way",)),
        dict(modes=("two-way",), loss=(0, 1, 1), distance=(0, 1, 1)),
        dict(modes=("two-way",), loss=(0, 1, 0)),
        dict(modes=("two-way",), loss=(2, 1, 1)),
        dict(modes=("two-way",), loss=(0, 1, 1), y0=1.5),
        dict(modes=("two-way",), loss=(0, 1, 1), e_det=-0.1),
        dict(modes=("sideways",), loss=(0, 1, 1)),
        dict(modes=("two-way",), loss=(0, 1, 1), det_eff=0.0),
    ],
)
def test_config_validation(fields):
    with pytest.raises(ValueError):
        SweepConfig(**fields).validate()


def test_distance_grid_and_column():
    cfg = SweepConfig(modes=("two-way",), distance=(100.0, 100.0, 1.0)).validate()
    (db,) = cfg.losses()
    assert db == pytest.approx(0.21 * 100 + detector_db(0.045))
    assert cfg.distance_of(db) == pytest.approx(100.0)


def test_small_sweep_csv(small_curve):
    text = to_csv(small_curve)
    rows = list(csv.reader(io.StringIO(text)))
    assert len(rows) == 3
    head = rows[0]
    assert tuple(head[: len(CSV_HEAD)]) == CSV_HEAD
    assert head[len(CSV_HEAD) :][:3] == ["r_1", "lambda_1", "I_1"]
    assert (len(head) - len(CSV_HEAD)) % 3 == 0
    for row, db in zip(rows[1:], (20.0, 21.0)):
        assert float(row[0]) == db
        assert float(row[1]) == pytest.approx((db - detector_db(0.045)) / 0.21, rel=1e-11)
        assert row[2] == "two-way"
        assert float(row[4]) > 0


def test_points_sorted_and_consistent(small_curve):
    dbs = [p.total_db for p in small_curve.points]
    assert dbs == sorted(dbs)
    for p in small_curve.points:
        assert abs(p.k_upper - sum(t.contribution for t in p.per_n)) < 1e-10


def test_json_round_trip(small_curve):
    text = emit(small_curve, "json")
    back = from_json(text)
    assert back == small_curve
    assert to_json(back) == text
    doc = json.loads(text)
    assert doc["points"][0]["per_n"][0]["certificate"]["status"] == "Optimal"


def test_csv_is_deterministic(small_curve):
    again = run_sweep(SweepConfig(**SMALL))
    assert to_csv(again) == to_csv(small_curve)


def test_replay_from_config_echo(small_curve):
    cfg = SweepConfig.from_dict(json.loads(to_json(small_curve))["config"])
    assert to_csv(run_sweep(cfg)) == to_csv(small_curve)


def test_cutoff_flags():
    cfg = SweepConfig(modes=("two-way",), loss=(20.0, 21.0, 1.0), find_cutoff=True)
    curve = run_sweep(cfg)
    assert curve.cutoffs["two-way"].status == "beyond range"
    cfg = SweepConfig(modes=("one-way-dr",), loss=(2.0, 3.0, 1.0), find_cutoff=True, cutoff_resolution=0.1)
    cut = run_sweep(cfg).cutoffs["one-way-dr"]
    assert cut.status == "found" and 2.0 <= cut.total_db <= 3.0
    assert cut.distance_km == pytest.approx((cut.total_db - detector_db(0.045)) / 0.21)


def test_emit_unwritable_path(small_curve, tmp_path):
    bad = tmp_path / "missing" / "out.csv"
    with pytest.raises(OSError, match="missing"):
        emit(small_curve, "csv", bad)


def test_worker_override(monkeypatch):
    cfg = SweepConfig(**SMALL, workers=3)
    monkeypatch.delenv(WORKERS_ENV, raising=False)
    assert worker_count(cfg) == 3
    monkeypatch.setenv(WORKERS_ENV, "2")
    assert worker_count(cfg) == 2
    monkeypatch.setenv(WORKERS_ENV, "zero")
    with pytest.raises(ValueError):
        worker_count(cfg)


def test_parallel_matches_serial(small_curve):
    cfg = SweepConfig(**SMALL, workers=2)
    assert to_csv(run_sweep(cfg)) == to_csv(small_curve)


def test_cli_writes_csv(tmp_path, capsys):
    out = tmp_path / "k.csv"
    code, stdout, err = run_cli(["--mode", "two-way", "--loss", "20:21:1", "--out", str(out)], capsys)
    assert code == 0
    assert stdout == ""
    lines = out.read_text().splitlines()
    assert len(lines) == 3
    assert lines[0].startswith(",".join(CSV_HEAD))


def test_cli_stdout_is_clean(capsys):
    code, stdout, err = run_cli(["--mode", "two-way", "--loss", "20:20:1", "--format", "json"], capsys)
    assert code == 0
    doc = json.loads(stdout)
    assert len(doc["points"]) == 1


def test_cli_validation_errors(tmp_path, capsys):
    code, _, err = run_cli(["--loss", "0:1:1"], capsys)
    assert code == 1 and "mode" in err
    code, _, _ = run_cli(["--mode", "two-way", "--loss", "0:1:-1"], capsys)
    assert code == 1
    code, _, _ = run_cli(["--mode", "two-way", "--loss", "0:1:1", "--edet", "2"], capsys)
    assert code == 1
    code, _, err = run_cli(["--mode", "two-way", "--loss", "20:20:1", "--out", str(tmp_path / "no" / "x.csv")], capsys)
    assert code == 1 and "no" in err


def test_cli_strict_numerical_limit(capsys):
    args = ["--mode", "two-way", "--loss", "20:20:1", "--gap-tol", "1e-30", "--feas-tol", "1e-30", "-q"]
    code, stdout, err = run_cli(args + ["--strict"], capsys)
    assert code == 2
    assert "NumericalLimit" in err or "numerical limit" in err
    code, stdout, _ = run_cli(args, capsys)
    assert code == 0 and stdout


def test_config_file_and_flag_precedence(tmp_path, capsys):
    conf = tmp_path / "scan.conf"
    conf.write_text("# sweep\nmode = two-way, one-way-rr\nloss = 20:20:1\nedet = 0.05\nformat = json\n")
    args = ["--config", str(conf), "-q"]
    args_cfg, _ = cli.resolve(cli.build_parser().parse_args(args))
    assert args_cfg.modes == ("two-way", "one-way-rr")
    assert args_cfg.e_det == 0.05
    flag_cfg, output = cli.resolve(cli.build_parser().parse_args(args + ["--edet", "0.01", "--mode", "one-way-dr"]))
    assert flag_cfg.e_det == 0.01
    assert flag_cfg.modes == ("one-way-dr",)
    assert output["format"] == "json"
    conf.write_text("colour = blue\n")
    code, _, err = run_cli(args, capsys)
    assert code == 1 and "colour" in err


def test_module_entry_point(tmp_path):
    import subprocess
    import sys

    out = tmp_path / "k.csv"
    env = dict(os.environ, **{WORKERS_ENV: "1"})
    res = subprocess.run(
        [sys.executable, "-m", "qkdbounds", "--mode", "two-way", "--loss", "20:20:1", "--out", str(out)],
        capture_output=True,
        text=True,
        env=env,
    )
    assert res.returncode == 0, res.stderr
    assert res.stdout == ""
    assert "solved 1 points" in res.stderr
    assert len(out.read_text().splitlines()) == 2
