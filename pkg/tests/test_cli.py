import csv

import pytest

from lunar_odts import cli
from lunar_odts.config import bundled_config


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_selftest_passes_and_is_deterministic(capsys):
    assert cli.main(["selftest"]) == 0
    first = capsys.readouterr().out
    assert cli.main(["selftest"]) == 0
    assert capsys.readouterr().out == first
    assert "FAIL" not in first and first.count("PASS") == 7


def test_selftest_names_corrupted_gravity(tmp_path, capsys):
    _write(tmp_path, "bad.txt", "# mu = 4.9e12\n# radius = 1738000\n0 0 1 0\n2 0 not-a-number 0\n")
    cfg = _write(tmp_path, "s.yaml", "gravity:\n  file: bad.txt\n")
    assert cli.main(["selftest", "--config", str(cfg)]) != 0
    out = capsys.readouterr().out
    assert "FAIL  gravity table" in out and "cannot parse" in out


def test_simulate_minimal_is_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["simulate", "--config", "minimal", "--out", str(a)]) == 0
    out = capsys.readouterr().out
    assert "L1_GPS" in out and "dual" in out
    assert cli.main(["simulate", "--config", str(bundled_config("minimal")), "--out", str(b)]) == 0
    for name in ("truth.csv", "observables_run000.csv", "visibility.csv"):
        data = (a / name).read_bytes()
        assert len(data.splitlines()) > 10
        assert data == (b / name).read_bytes()


def test_simulate_missing_ephemeris(tmp_path, capsys):
    cfg = _write(tmp_path, "s.yaml", "scenario:\n  duration_h: 1\nephemeris:\n  file: gone.csv\n")
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "ephemeris.file" in capsys.readouterr().err


def test_estimate_writes_runs_and_aggregate(tmp_path, capsys):
    out = tmp_path / "est"
    rc = cli.main(["estimate", "--config", "minimal", "--mode", "ifpr+tdcp", "--runs", "3",
                   "--smoother-iters", "1", "--out", str(out), "--workers", "1"])
    assert rc == 0
    files = sorted(p.name for p in out.iterdir())
    assert files == ["aggregate.csv", "run_ifpr+tdcp_000.csv", "run_ifpr+tdcp_001.csv",
                     "run_ifpr+tdcp_002.csv", "summary.txt"]
    with open(out / "aggregate.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [(r["mode"], r["stage"], r["runs"]) for r in rows] == [("ifpr+tdcp", "filter", "3"),
                                                                   ("ifpr+tdcp", "smoother", "3")]
    summary = (out / "summary.txt").read_text()
    assert summary == capsys.readouterr().out
    assert "ifpr+tdcp  filter" in summary and "ifpr+tdcp  smoother" in summary


def test_estimate_outputs_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert cli.main(["estimate", "--config", "minimal", "--mode", "ifpr", "--smoother-iters", "0",
                         "--seed", "3", "--out", str(tmp_path / name)]) == 0
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_usage_errors_exit_1(capsys):
    assert cli.main(["estimate", "--mode", "l2"]) == 1
    assert cli.main(["estimate", "--runs", "0"]) == 1
    assert cli.main([]) == 1
    assert cli.main(["estimate", "--config", "no-such-scenario"]) == 1


def test_io_error_exit_3(tmp_path, capsys):
    blocker = _write(tmp_path, "file", "x")
    assert cli.main(["simulate", "--config", "minimal", "--out", str(blocker / "sub")]) == 3
    assert "I/O error" in capsys.readouterr().err


def test_numerical_failure_exit_2(tmp_path, monkeypatch, capsys):
    from lunar_odts import pipeline

    def boom(*args, **kwargs):
        raise pipeline.PipelineError("innovation variance collapsed at epoch 7")

    monkeypatch.setattr(pipeline, "run_single", boom)
    rc = cli.main(["estimate", "--config", "minimal", "--out", str(tmp_path), "--workers", "1"])
    assert rc == 2
    err = capsys.readouterr().err
    assert "run 0" in err and "epoch 7" in err


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0
