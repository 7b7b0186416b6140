import json
import math
import subprocess
import sys

import numpy as np
import pytest

from ibexp import cli, coding

LN2 = math.log(2)
UNIFORM_LOSSLESS = json.dumps({"alphabet_sizes": [2, 2], "probs": [0.5, 0.0, 0.0, 0.5]})
NOISY = json.dumps({"alphabet_sizes": [2, 2], "probs": [0.45, 0.05, 0.05, 0.45]})


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_rd_lossless_column(capsys):
    code, out, _ = run(["rd", "--model", UNIFORM_LOSSLESS, "--grid", "0.1,0.2,0.3,0.4,0.5,0.6"], capsys)
    assert code == 0
    cols, rows = cli.read_table(out, "csv")
    assert cols == ["delta", "value_nats", "witness_hash", "diagnostics"]
    for r in rows:
        assert r["value_nats"] == pytest.approx(max(LN2 - r["delta"], 0.0), abs=1e-6)


def test_rd_bits(capsys):
    _, out, _ = run(["rd", "--model", UNIFORM_LOSSLESS, "--grid", "0.2", "--bits"], capsys)
    _, rows = cli.read_table(out, "csv")
    assert rows[0]["value_nats"] == pytest.approx((LN2 - 0.2) / LN2, abs=1e-6)
    assert rows[0]["delta"] == pytest.approx(0.2 / LN2)


def test_exponent_sweep_has_boundary(capsys, tmp_path):
    problem = {"model": json.loads(NOISY), "Delta": 0.5, "u_size": 2, "solver": {"restarts": 8}}
    path = tmp_path / "problem.json"
    path.write_text(json.dumps(problem))
    code, out, _ = run(["exponent", "--model", str(path), "--grid", "0.2:0.5:4",
                        "--format", "json"], capsys)
    assert code == 0
    obj = json.loads(out)
    assert obj["columns"] == ["R", "value_nats", "rd_boundary", "witness_hash", "diagnostics"]
    for r in obj["rows"]:
        if r["R"] <= r["rd_boundary"] - 1e-9:
            assert r["value_nats"] < 1e-4
        if r["R"] >= r["rd_boundary"] + 0.05:
            assert r["value_nats"] > 0


def test_sc_exponent_delta_sweep(capsys):
    code, out, _ = run(["sc-exponent", "--model", NOISY, "--sweep", "delta", "--rate", "0.05",
                        "--grid", "0.4,0.5,0.6", "--u-size", "2", "--restarts", "8"], capsys)
    assert code == 0
    _, rows = cli.read_table(out, "csv")
    vals = [r["value_nats"] for r in rows]
    assert all(b <= a + 1e-6 for a, b in zip(vals, vals[1:]))


def test_simulate_exact_and_mc(capsys):
    code, out, _ = run(["simulate", "--model", NOISY, "--rate", "0.4", "--delta", "0.3",
                        "--epsilon", "0.05", "--n-list", "4,6"], capsys)
    assert code == 0
    cols, rows = cli.read_table(out, "csv")
    assert cols == ["n", "p_e", "stderr", "minus_log_pe_over_n"]
    assert all(r["stderr"] == 0.0 for r in rows)
    code, out, _ = run(["simulate", "--model", NOISY, "--rate", "0.4", "--delta", "0.3",
                        "--epsilon", "0.05", "--n-list", "6", "--samples", "20000"], capsys)
    _, mc = cli.read_table(out, "csv")
    assert abs(mc[0]["p_e"] - rows[1]["p_e"]) <= 4 * mc[0]["stderr"]


def test_oracle_command(capsys):
    code, out, _ = run(["oracle", "--model", UNIFORM_LOSSLESS, "--kind", "RD", "--delta", "0.2",
                        "--grid", "100"], capsys)
    assert code == 0
    _, rows = cli.read_table(out, "csv")
    assert rows[0]["value_nats"] == pytest.approx(LN2 - 0.2, abs=5e-3)


def test_cover_command(capsys):
    code, out, _ = run(["cover", "--y-type", "4,4", "--channel", "3,1;1,3", "--format", "json"], capsys)
    assert code == 0
    obj = json.loads(out)
    assert sum(r["newly_covered"] for r in obj["rows"]) == 70
    assert obj["meta"]["size"] <= obj["meta"]["size_bound"]


def test_identity_and_wak_checks(capsys):
    code, out, err = run(["identity-check", "--model", NOISY, "--n", "4", "--trials", "100"], capsys)
    assert code == 0
    _, rows = cli.read_table(out, "csv")
    assert len(rows) == 100 and max(r["abs_diff"] for r in rows) <= 1e-10
    assert "max |lhs - rhs|" in err
    code, out, _ = run(["wak-check", "--model", NOISY, "--n", "1"], capsys)
    assert code == 0


def test_exit_codes(capsys):
    assert run(["rd", "--model", UNIFORM_LOSSLESS, "--grid", ""], capsys)[0] == 2
    assert run(["rd", "--model", UNIFORM_LOSSLESS, "--grid", "0.3,0.2"], capsys)[0] == 2
    assert run(["rd", "--model", "{not json", "--grid", "0.2"], capsys)[0] == 2
    bad = json.dumps({"alphabet_sizes": [2, 2], "probs": [0.5, 0.5, 0.5, 0.5]})
    assert run(["rd", "--model", bad, "--grid", "0.2"], capsys)[0] == 2
    assert run(["simulate", "--model", NOISY, "--rate", "0.4", "--delta", "0.3",
                "--n-list", "5000"], capsys)[0] == 3
    assert run(["oracle", "--model", NOISY, "--kind", "E", "--delta", "0.5", "--rate", "0.3",
                "--grid", "500"], capsys)[0] == 3
    assert run(["exponent", "--model", NOISY, "--grid", "0.1"], capsys)[0] == 2


def test_failed_check_exit_4(capsys, monkeypatch):
    real = coding.verify_single_letter_identity

    def broken(*args, **kwargs):
        rep = real(*args, **kwargs)
        rep.diff = 1.0
        return rep
    monkeypatch.setattr(coding, "verify_single_letter_identity", broken)
    code, _, err = run(["identity-check", "--model", NOISY, "--trials", "2"], capsys)
    assert code == 4
    fixture = json.loads(err.strip().splitlines()[-1])
    assert fixture["trial"] == 0 and "q" in fixture


def test_byte_identical_output(tmp_path):
    outs = []
    for i in range(2):
        path = tmp_path / f"out{i}.csv"
        subprocess.run([sys.executable, "-m", "ibexp.cli", "sc-exponent", "--model", NOISY,
                        "--grid", "0.0,0.1", "--delta", "0.5", "--u-size", "2", "--restarts", "4",
                        "--seed", "9", "--out", str(path)], check=True)
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_render_roundtrip():
    rows = [{"a": 1.5, "b": math.inf, "c": "x"}]
    for fmt in ("csv", "json"):
        text = cli.render(["a", "b", "c"], rows, fmt, {})
        cols, back = cli.read_table(text, fmt)
        assert cols == ["a", "b", "c"]
        assert float(back[0]["a"]) == 1.5 and float(back[0]["b"]) == math.inf
    with pytest.raises(RuntimeError):
        cli.validate_rows(["p_e"], [{"p_e": 1.5}])
    assert np.isclose(cli.parse_grid("0:1:5")[-1], 1.0)
