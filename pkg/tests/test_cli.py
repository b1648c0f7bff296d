import json

import numpy as np
import pytest

from activereg.cli import SEED_ENV, main
from activereg.config import serialize_config
from activereg.io import sha256_file
from activereg.scenarios import config_a


def run(tmp_path, name, *argv):
    out = tmp_path / name
    code = main([*argv, "--out", str(out), "--workers", "1"])
    return code, out


def outputs(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name != "run_report.json"}


def test_batch_outputs_and_byte_identical(tmp_path):
    code, a = run(tmp_path, "a", "batch", "--scenario", "B")
    assert code == 0
    _, b = run(tmp_path, "b", "batch", "--scenario", "B")
    assert outputs(a) == outputs(b)
    assert {"batch_result.json", "batch_penalties.csv", "batch_fitted.csv"} <= set(outputs(a))
    rep = json.loads((a / "run_report.json").read_text())
    assert rep["command"] == "batch"
    for name, digest in rep["outputs"].items():
        assert sha256_file(a / name) == digest


def test_iterative_outputs(tmp_path):
    code, out = run(tmp_path, "it", "iterative", "--scenario", "C")
    assert code == 0
    summary = json.loads((out / "iterative_summary.json").read_text())
    assert summary["labels_used"] <= 512
    assert (out / "iterative_trace.csv").read_text().startswith("j,")


def test_validate_single_bound(tmp_path, capsys):
    code, out = run(tmp_path, "v", "validate", "--bound", "L2_tail", "--replications", "100")
    assert code == 0
    rep = json.loads((out / "validation_report.json").read_text())
    assert [b["bound_id"] for b in rep["bounds"]] == ["L2_tail"]
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines and all(line.split()[0] in ("PASS", "FAIL") for line in lines)


def test_validate_strict_fails_on_red_check(tmp_path):
    # 0/100 cannot certify a delta/6 rate, so the check is red and --strict turns it into exit 1
    code, _ = run(tmp_path, "s", "validate", "--bound", "L7_pen0", "--replications", "100", "--strict")
    assert code == 1
    code, _ = run(tmp_path, "n", "validate", "--bound", "L7_pen0", "--replications", "100")
    assert code == 0


@pytest.mark.parametrize("argv", [
    ["validate", "--bound", "L99"],
    ["validate", "--bound", "L1_pen1", "--replications", "50"],
    ["batch", "--config", "/nonexistent.ini"],
    ["batch", "--scenario", "A", "--config", "x.ini"],
])
def test_usage_errors_exit_2(tmp_path, argv):
    assert run(tmp_path, "e", *argv)[0] == 2


def test_argparse_errors_exit_2(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2


def test_bad_config_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text(serialize_config(config_a()).replace("sigma2 = 0.25", "sgima2 = 0.25"))
    assert run(tmp_path, "e", "batch", "--config", str(path))[0] == 2
    assert "sgima2" in capsys.readouterr().err


def test_runtime_failure_exits_1(tmp_path):
    path = tmp_path / "tiny.ini"
    text = serialize_config(config_a())
    text = text.replace("constant(0.25)", "constant(0.000001)").replace("proportional(0.25)", "constant(0.000001)")
    text = text.replace("thresholded(median, 0.25, 1.0)", "constant(0.000001)").replace("constant(0.5)", "constant(0.000001)")
    path.write_text(text)
    assert run(tmp_path, "f", "batch", "--config", str(path))[0] == 1


def test_fit_with_csv_leaves_input_untouched(tmp_path):
    t = np.arange(64) / 64
    data = tmp_path / "data.csv"
    data.write_text("t,y\n" + "".join(f"{float(a)!r},{float(np.cos(2 * np.pi * a))!r}\n" for a in t))
    before = sha256_file(data)
    code, out = run(tmp_path, "fit", "fit", "--scenario", "A", "--data", str(data))
    assert code == 0 and sha256_file(data) == before
    rows = (out / "fit_d8.csv").read_text().splitlines()
    assert rows[0] == "index,coefficient" and len(rows) == 9
    fitted = np.loadtxt(out / "fit_fitted.csv", delimiter=",", skiprows=1)
    np.testing.assert_allclose(fitted[:, 2], fitted[:, 1], atol=1e-9)


def test_report_tabulates(tmp_path):
    _, v = run(tmp_path, "v", "validate", "--bound", "L2_tail", "--replications", "100")
    code, out = run(tmp_path, "r", "report", "--input", str(v / "validation_report.json"))
    assert code == 0
    assert (out / "report.csv").read_text().startswith("bound_id,check")


def test_seed_override(tmp_path, monkeypatch):
    _, a = run(tmp_path, "a", "batch", "--scenario", "B")
    monkeypatch.setenv(SEED_ENV, "7")
    _, b = run(tmp_path, "b", "batch", "--scenario", "B")
    _, c = run(tmp_path, "c", "batch", "--scenario", "B")
    ra, rb = (json.loads((d / "run_report.json").read_text()) for d in (a, b))
    assert ra["config_digest"] != rb["config_digest"]
    assert outputs(b) == outputs(c)
    monkeypatch.setenv(SEED_ENV, "seven")
    assert run(tmp_path, "d", "batch", "--scenario", "B")[0] == 2
