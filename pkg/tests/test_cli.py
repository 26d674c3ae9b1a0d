import csv
import io
import json
import math
from importlib import resources

import jsonschema
import pytest

from dozzlab import cli
from dozzlab.errors import ConflictError, ParseError

SCHEMA = json.loads(resources.files("dozzlab").joinpath("schema/result.schema.json").read_text())


def run(capsys, argv):
    code = cli.main(argv)
    out = capsys.readouterr().out
    return code, out


def run_json(capsys, argv):
    code, out = run(capsys, argv)
    rec = json.loads(out)
    jsonschema.validate(rec, SCHEMA)
    return code, rec


def test_eval_dozz(capsys):
    code, rec = run_json(capsys, ["eval-dozz", "--gamma", "1", "--alphas", "1.8,1.8,1.8"])
    assert code == 0
    assert rec["value"] == pytest.approx(0.99802728466027777748, rel=1e-12)
    assert rec["params"] == {"gamma": 1.0, "mu": 1.0, "alphas": [1.8, 1.8, 1.8], "zs": []}


def test_eval_upsilon_complex(capsys):
    code, rec = run_json(capsys, ["eval-upsilon", "--gamma", "1.2", "--z", "0.7+0.4i"])
    assert code == 0
    assert rec["value"]["re"] == pytest.approx(0.89887364537080654024, rel=1e-12)
    assert rec["value"]["im"] == pytest.approx(0.46443187295357973587, rel=1e-12)


def test_kpz_by_central_charge(capsys):
    code, rec = run_json(capsys, ["kpz", "--central-charge", "0", "--delta-sigma", "0"])
    assert code == 0
    assert rec["params"]["gamma"] == pytest.approx(math.sqrt(8 / 3), rel=1e-12)


def test_df_check(capsys):
    code, rec = run_json(capsys, ["df-check", "--gamma", "1", "--alphas", "1.3,1.2"])
    assert code == 0
    assert rec["diagnostics"]["rel_err"] < 1e-6


def test_inadmissible_exit_two(capsys):
    code, rec = run_json(capsys, ["mc-threepoint", "--gamma", "1", "--alphas", "2.6,1.8,1.8", "--samples", "10"])
    assert code == 2
    assert rec["error"]["code"] == "InadmissibleWeights"


def test_parse_error_exit_one(capsys):
    code, rec = run_json(capsys, ["eval-dozz", "--alphas", "1,1,1"])
    assert code == 1
    assert rec["error"]["code"] == "ParseError"
    code, rec = run_json(capsys, ["no-such-command"])
    assert code == 1 and rec["command"] is None


def test_gamma_out_of_range_exit_one(capsys):
    code, rec = run_json(capsys, ["mc-threepoint", "--gamma", "2.5", "--alphas", "1,1,1", "--samples", "10"])
    assert code == 1
    assert rec["error"]["code"] == "GammaOutOfRange"


def test_conflicts():
    with pytest.raises(ConflictError):
        cli.load_config(["kpz", "--gamma", "1", "--central-charge", "0", "--delta-sigma", "0"])
    with pytest.raises(ConflictError):
        cli.load_config(["eval-dozz", "--gamma", "1", "--alphas", "1,1,1", "--central-charge", "0"])
    with pytest.raises(ConflictError):
        cli.load_config(["eval-dozz", "--gamma", "1", "--alphas", "1,1,1", "--format", "csv"])
    with pytest.raises(ConflictError):
        cli.load_config(["mc-fourpoint", "--gamma", "1", "--alphas", "1,1,1", "--alpha0", "-0.5", "--z", "0.2", "--zs", "0,1,2"])


def test_config_file_and_flag_precedence(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text('gamma = 1.3\nmu = 2.0\nalphas = [1.8, 1.7, 1.6]\nseed = 7\n')
    cfg = cli.load_config(["eval-dozz", "--config", str(path), "--gamma", "1.1"])
    assert cfg.gamma == 1.1
    assert cfg.mu == 2.0 and cfg.alphas == [1.8, 1.7, 1.6] and cfg.seed == 7


def test_config_unknown_key(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text("gama = 1.0\n")
    with pytest.raises(ParseError):
        cli.load_config(["eval-dozz", "--config", str(path)])


def test_config_round_trip():
    cfg = cli.load_config(["mc-fourpoint", "--gamma", "1", "--alphas", "1.9,1.9,1.9", "--alpha0", "-0.5", "--z", "0.3+0.1j"])
    again = cli.RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg


def test_deterministic_output(capsys):
    argv = ["mc-threepoint", "--gamma", "1", "--alphas", "1.8,1.8,1.8", "--samples", "128", "--resolution", "8"]
    _, a = run_json(capsys, argv)
    _, b = run_json(capsys, argv + ["--threads", "4"])
    a.pop("runtime_s"), b.pop("runtime_s")
    assert a == b


def test_tail_csv_decreasing(capsys):
    code, out = run(capsys, ["tail", "--gamma", "1", "--alpha", "1.7", "--samples", "2000", "--format", "csv"])
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["t", "survival"]
    t = [float(r[0]) for r in rows[1:]]
    s = [float(r[1]) for r in rows[1:]]
    assert all(b > a for a, b in zip(t, t[1:]))
    assert all(b < a for a, b in zip(s, s[1:]))


def test_tail_window_empty(capsys):
    code, rec = run_json(capsys, ["tail", "--gamma", "1", "--alpha", "1.7", "--samples", "512"])
    assert code == 1
    assert rec["error"]["code"] == "WindowEmpty"


def test_verify_csv(capsys, tmp_path):
    out_path = tmp_path / "v.csv"
    code, _ = run(capsys, ["verify", "--gamma", "1.1", "--points", "3", "--format", "csv", "-o", str(out_path)])
    assert code == 0
    rows = list(csv.DictReader(out_path.open()))
    assert rows and set(rows[0]) == {"identity", "point", "residual"}
    finite = [float(r["residual"]) for r in rows if math.isfinite(float(r["residual"]))]
    assert max(finite) < 1e-8


def test_unwritable_output(capsys, tmp_path):
    code, rec = run_json(capsys, ["eval-dozz", "--gamma", "1", "--alphas", "1.8,1.8,1.8", "-o", str(tmp_path / "no" / "x.json")])
    assert code == 1
    assert rec["error"]["code"] == "IoError"
