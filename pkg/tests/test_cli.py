import json
import subprocess
import sys

import pytest

from paramrobust import cli
from paramrobust.cli import EXIT_COUNTEREXAMPLE, EXIT_OK, EXIT_UNKNOWN, EXIT_USAGE, main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


def run_json(capsys, *argv):
    code, out = run(capsys, *argv)
    return code, json.loads(out)


CAT_DATASET = {"dataset": "builtin:cats"}


class TestVerify:
    def test_confident_cat_point_is_robust(self, capsys):
        q = {"kind": "LocalFlip", "delta": 0.001, "x0": [20.0, 3.8]}
        code, doc = run_json(capsys, "verify", "--model", "builtin:cat", "--query", json.dumps(q))
        assert code == EXIT_OK
        assert doc["verdict"] == "unsat" and doc["schema_version"] == 1

    def test_toy_global_flip_has_witness(self, capsys):
        q = {"kind": "GlobalFlip", "delta": 0.1, "domain": {"lo": [-1.0], "hi": [1.0]}}
        code, doc = run_json(capsys, "verify", "--model", "builtin:toy_shifted", "--query", json.dumps(q))
        assert code == EXIT_COUNTEREXAMPLE
        w = doc["witness"]
        x = w["x0"]
        b = w["p1"]
        assert (x >= 0) != (x + b >= 0) or abs(x + b) < 1e-4

    def test_budget_exhaustion_is_unknown(self, capsys):
        q = {"kind": "GlobalEps", "delta": 0.01, "epsilon": 0.0577, **CAT_DATASET}
        code, doc = run_json(capsys, "verify", "--model", "builtin:cat", "--max-splits", "3", "--query", json.dumps(q))
        assert code == EXIT_UNKNOWN and doc["verdict"] == "unknown"

    def test_query_file_and_out(self, capsys, tmp_path):
        qf = tmp_path / "q.json"
        qf.write_text(json.dumps({"model": "builtin:cat", "kind": "LocalEps", "delta": 0.01,
                                  "epsilon": 0.5, "x0": [10.0, 2.5]}))
        out = tmp_path / "r.json"
        code, text = run(capsys, "verify", "--query", str(qf), "--out", str(out))
        assert code == EXIT_OK and text == ""
        assert json.loads(out.read_text())["verdict"] == "unsat"


class TestUsageErrors:
    @pytest.mark.parametrize("argv", [
        ["verify", "--model", "/nonexistent/model.json", "--query", '{"kind": "LocalFlip", "delta": 0.1, "x0": [1, 1]}'],
        ["verify", "--model", "builtin:nope", "--query", '{"kind": "LocalFlip", "delta": 0.1, "x0": [1, 1]}'],
        ["verify", "--model", "builtin:cat", "--query", "/nonexistent/q.json"],
        ["verify", "--model", "builtin:cat", "--query", "{not json"],
        ["verify", "--model", "builtin:cat", "--query", '{"kind": "Bogus", "delta": 0.1}'],
        ["verify", "--model", "builtin:cat", "--query", '{"kind": "LocalFlip", "delta": 0.1, "x0": [1]}'],
        ["verify", "--model", "builtin:cat", "--query", '{"kind": "LocalEps", "delta": 0.1, "x0": [1, 2]}'],
        ["verify", "--query", '{"kind": "LocalFlip", "delta": 0.1, "x0": [1, 2]}'],
        ["estimate", "--model", "builtin:cat", "--query", '{"kind": "GlobalFlip", "delta": 0.1, "dataset": "builtin:cats"}'],
        ["estimate", "--model", "builtin:cat", "--query", '{"kind": "GlobalEps", "delta": -1, "dataset": "builtin:cats"}'],
        ["scan", "--model", "builtin:cat", "--query", '{"delta": 0.01}'],
        ["verify", "--model", "builtin:cat", "--precision", "0", "--query", '{"kind": "LocalFlip", "delta": 0.1, "x0": [1, 2]}'],
        ["bogus"],
        [],
    ])
    def test_exit_two(self, capsys, argv):
        assert main(argv) == EXIT_USAGE
        assert capsys.readouterr().out == ""

    def test_help_is_ok(self, capsys):
        assert main(["--help"]) == EXIT_OK
        assert "estimate" in capsys.readouterr().out


class TestEstimate:
    def test_zero_delta(self, capsys):
        q = {"kind": "GlobalEps", "delta": 0.0, **CAT_DATASET}
        code, doc = run_json(capsys, "estimate", "--model", "builtin:cat", "--query", json.dumps(q))
        assert code == EXIT_OK
        assert doc["lower"] == 0.0 and doc["upper"] <= 1e-4

    def test_cat_reference_printed(self, capsys):
        q = {"kind": "GlobalEps", "delta": 0.005, **CAT_DATASET}
        code, doc = run_json(capsys, "estimate", "--model", "builtin:cat", "--query", json.dumps(q))
        assert code == EXIT_OK
        assert doc["published_reference"] == {"eps": 0.00691}
        assert doc["lower"] <= doc["upper"] <= doc["lower"] + 1e-4
        assert doc["domain"]["lo"] == [6.3, 2.0]

    def test_toys(self, capsys):
        q = {"kind": "LocalEps", "delta": 0.1, "x0": [1.0]}
        _, doc = run_json(capsys, "estimate", "--model", "builtin:toy_scaled", "--query", json.dumps(q))
        assert doc["lower"] - 1e-4 <= 0.0201091 <= doc["upper"] + 1e-4
        q = {"kind": "SigmaFlip", "delta": 0.1, "side": "above", "domain": {"lo": [-1.0], "hi": [1.0]}}
        _, doc = run_json(capsys, "estimate", "--model", "builtin:toy_shifted", "--query", json.dumps(q))
        assert doc["side"] == "above"
        assert abs(doc["upper"] - 0.02498) < 1e-4


class TestQuantize:
    def test_verify_scheme(self, capsys):
        q = {"kind": "GlobalEps", "epsilon": 0.01, "scheme": {"frac_bits": 0}, **CAT_DATASET}
        code, doc = run_json(capsys, "quantize", "--model", "builtin:cat", "--query", json.dumps(q))
        assert code == EXIT_COUNTEREXAMPLE
        assert doc["mode"] == "verify" and doc["delta"] == 0.5
        assert doc["box"]["verdict"] == "delta-sat"

    def test_search(self, capsys):
        q = {"kind": "GlobalEps", "epsilon": 0.03, **CAT_DATASET}
        code, doc = run_json(capsys, "quantize", "--model", "builtin:cat", "--query", json.dumps(q))
        assert code == EXIT_OK and doc["found"]
        f = doc["frac_bits"]
        assert doc["checked"][str(f)] == "unsat"
        assert doc["report"]["max_error"] <= 2.0 ** -(f + 1)

    def test_search_not_found(self, capsys):
        q = {"kind": "GlobalEps", "epsilon": 0.0, "domain": {"lo": [-1.0], "hi": [1.0]}}
        code, doc = run_json(capsys, "quantize", "--model", "builtin:toy_shifted", "--query", json.dumps(q))
        assert code == EXIT_COUNTEREXAMPLE and doc["found"] is False

    def test_bad_scheme(self, capsys):
        q = {"kind": "GlobalEps", "epsilon": 0.01, "scheme": {"bits": 3}, **CAT_DATASET}
        assert main(["quantize", "--model", "builtin:cat", "--query", json.dumps(q)]) == EXIT_USAGE


class TestScan:
    Q = json.dumps({"delta": 0.005, "n": 40, **CAT_DATASET})

    def test_csv_bytes_stable(self, capsys, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for path, workers in ((a, "1"), (b, "3")):
            assert main(["scan", "--model", "builtin:cat", "--query", self.Q, "--seed", "5", "--fast-scan",
                         "--workers", workers, "--deterministic", "--out", str(path)]) == EXIT_OK
        assert a.read_bytes() == b.read_bytes()
        lines = a.read_text().splitlines()
        assert len(lines) == 41 and lines[0].startswith("index,x1,x2,confidence")

    def test_json_format(self, capsys):
        code, doc = run_json(capsys, "scan", "--model", "builtin:cat", "--query", self.Q, "--format", "json")
        assert code == EXIT_OK and len(doc["records"]) == 40
        assert {"flippable", "margin", "eps_lower"} <= set(doc["records"][0])


def test_report_layout(capsys, monkeypatch):
    monkeypatch.setattr(cli, "REPORT_MODELS", ("cat",))
    code, text = run(capsys, "report")
    assert code == EXIT_OK
    assert "delta = 0.005" in text and "0.00691" in text
    code, text = run(capsys, "report", "--format", "csv")
    rows = text.splitlines()
    assert rows[0] == "model,delta,quantity,lower,upper,converged,published" and len(rows) == 7


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "paramrobust", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "verify" in res.stdout
