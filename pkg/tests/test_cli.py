import json
import math

import pytest

from prismghz.cli import EXIT_OK, EXIT_SOLVER, EXIT_USAGE, EXIT_VERIFY, execute, load_config, parse_angle
from prismghz.simulator import ConfigError


@pytest.mark.parametrize(
    "text, value",
    [("0.3pi", 0.3 * math.pi), ("pi/3", math.pi / 3), ("0.9*pi/3", 0.9 * math.pi / 3), ("1.25", 1.25), ("-pi", -math.pi), ("2pi", 2 * math.pi)],
)
def test_parse_angle(text, value):
    assert parse_angle(text) == pytest.approx(value, rel=1e-15)


def test_parse_angle_rejects():
    with pytest.raises(ValueError):
        parse_angle("half a turn")


def test_enumerate_counts(capsys):
    assert execute(["enumerate", "--counts"]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "total=729 allowed=409 c0=217 c1=48 c2=96 c4=48"


def test_enumerate_writes_comparison(tmp_path, capsys):
    assert execute(["enumerate", "--outdir", str(tmp_path)]) == EXIT_OK
    text = (tmp_path / "table1_comparison.txt").read_text()
    assert text.splitlines()[0] == "lambda1\t----D+"
    assert "identical to the reference table" in text


def test_verify(tmp_path, capsys):
    assert execute(["verify", "--outdir", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "64/64 exact"
    assert "FAIL" not in out
    assert len((tmp_path / "verification.tsv").read_text().splitlines()) == 65


def test_verify_failure_exit_code(tmp_path, capsys):
    # the uniform 409 model reproduces the conditionals but not the 1/2 efficiency
    assert execute(["verify", "--model", "409", "--outdir", str(tmp_path)]) == EXIT_VERIFY
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "64/64 exact"
    assert "FAIL triple efficiency = 1/2" in out


@pytest.mark.parametrize(
    "argv",
    [[], ["frobnicate"], ["enumerate", "--bogus"], ["verify", "--model", "7"], ["curve"]],
)
def test_usage_errors(argv, capsys):
    assert execute(argv) == EXIT_USAGE


def test_solve_domain_error(tmp_path, capsys):
    assert execute(["solve", "--delta", "1.1pi/3", "--outdir", str(tmp_path)]) == EXIT_USAGE


@pytest.mark.filterwarnings("ignore:Solution may be inaccurate")
def test_solve_nonconvergence(tmp_path, capsys):
    code = execute(["solve", "--grid", "256", "--max-iter", "2", "--outdir", str(tmp_path)])
    assert code == EXIT_SOLVER
    assert not (tmp_path / "solution.json").exists()


def test_solve_and_curve(tmp_path, capsys):
    assert execute(["solve", "--delta", "0.9422", "--outdir", str(tmp_path)]) == EXIT_OK
    doc = json.loads((tmp_path / "solution.json").read_text())
    assert abs(doc["single_efficiency"] - 0.15) <= 1e-4
    for name, head in (("f.csv", "w,f"), ("rho.csv", "w,rho"), ("fit.csv", "w,lhs,rhs")):
        assert (tmp_path / name).read_text().splitlines()[0] == head
    out = tmp_path / "curve.csv"
    assert execute(["curve", "--solution", str(tmp_path / "solution.json"), "--out", str(out), "--points", "90"]) == EXIT_OK
    assert len(out.read_text().splitlines()) == 91
    first = (tmp_path / "solution.json").read_bytes()
    assert execute(["solve", "--delta", "0.9422", "--outdir", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "solution.json").read_bytes() == first


def _write(path, text):
    path.write_text(text)
    return path


def test_load_config_defaults(tmp_path):
    cfg = load_config(_write(tmp_path / "a.cfg", "source=discrete\n"))
    assert (cfg.d, cfg.dark, cfg.trigger, cfg.schedule, cfg.N) == (1.0, 0.0, False, "cycle8", 10**6)
    assert cfg.build().selection == "triple"


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("source=discrete\nd=1.5\n", ":2:"),
        ("source=discrete\ncolour=blue\n", "unknown key"),
        ("source=discrete\nN=lots\n", ":2:"),
        ("# nothing\nd=0.5\n", "source"),
        ("source=discrete\njunk\n", ":2:"),
    ],
)
def test_load_config_errors(tmp_path, text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        load_config(_write(tmp_path / "b.cfg", text))


def test_trigger_config_enables_fourfold(tmp_path):
    text = "# four-detector run\nsource=discrete\nschedule=cycle8\nd=0.8\ndark=0.001\ntrigger=on\ntrigger_eff=0.6\nN=1e5\nseed=5\n"
    cfg = load_config(_write(tmp_path / "c.cfg", text))
    assert cfg.trigger and cfg.N == 100_000
    assert cfg.build().selection == "fourfold"


def test_simulate_report_byte_identical(tmp_path, capsys):
    cfg = _write(tmp_path / "run.cfg", "source=discrete\nN=40000\nseed=3\nd=0.9\ndark=0.01\ntrigger=on\ntrigger_eff=0.5\n")
    outs = []
    for k, workers in enumerate(("1", "3")):
        outdir = tmp_path / f"o{k}"
        assert execute(["simulate", "--config", str(cfg), "--outdir", str(outdir), "--workers", workers]) == EXIT_OK
        outs.append(((outdir / "stats.json").read_bytes(), (outdir / "trials.csv").read_bytes()))
    assert outs[0] == outs[1]
    capsys.readouterr()
    assert execute(["report", "--stats", str(tmp_path / "o0" / "stats.json")]) == EXIT_OK
    report = capsys.readouterr().out
    assert "post-selection: fourfold" in report and "E(Omega4)" in report


def test_simulate_bad_config(tmp_path, capsys):
    cfg = _write(tmp_path / "bad.cfg", "source=discrete\nschedule=uniform\n")
    assert execute(["simulate", "--config", str(cfg), "--outdir", str(tmp_path)]) == EXIT_USAGE
    assert execute(["report", "--stats", str(tmp_path / "missing.json")]) == EXIT_USAGE
