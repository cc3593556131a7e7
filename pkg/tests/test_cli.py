import csv
import json
import math

import pytest

from conftest import write_pool
from mers import cli
from mers.cli import main


def run(argv, tmp_path, name="out.json"):
    out = tmp_path / name
    code = main(list(argv) + ["--out", str(out)])
    return code, out


def circle_view(path, angles):
    path.write_text("".join(f"{math.cos(a)!r},{math.sin(a)!r}\n" for a in angles))


@pytest.fixture
def tiny(tmp_path):
    # view a: balls {0,1} {0,1,2} {1,2} {3}; view b: {0} {1} {2,3} {2,3} at delta 0.15
    a, b = [0.0, 0.1, 0.2, 3.0], [0.0, 1.5, 3.0, 3.1]
    circle_view(tmp_path / "a.csv", a + a)
    circle_view(tmp_path / "b.csv", b + b)
    (tmp_path / "y.txt").write_text("0\n" * 4 + "1\n" * 4)
    return ["--embedding", f"{tmp_path / 'a.csv'}:a", "--embedding", f"{tmp_path / 'b.csv'}:b",
            "--labels", str(tmp_path / "y.txt"), "--metric", "euclidean", "--delta", "0.15"]


class TestSelect:
    def test_tiny_fixture(self, tiny, tmp_path):
        code, out = run(["select", *tiny, "--method", "mers-probcover", "--budget-per-class", "2",
                         "--weights", "1,1"], tmp_path)
        assert code == 0
        rep = json.loads(out.read_text())
        assert rep["schema"] == "mers-report/1" and rep["method"] == "mers-probcover"
        assert [c["chosen"] for c in rep["classes"]] == [[1, 3], [5, 7]]
        assert [c["per_step_gain"] for c in rep["classes"]] == [[4.0, 3.0]] * 2
        assert [c["objective"] for c in rep["classes"]] == [7.0, 7.0]

    def test_auto_scales_recorded(self, pool_args, tmp_path):
        code, out = run(["select", *pool_args, "--budget", "6"], tmp_path)
        rep = json.loads(out.read_text())
        assert code == 0 and len(rep["classes"]) == 3
        for c in rep["classes"]:
            assert len(c["chosen"]) == 2 and len(c["scales"]) == 2
            assert c["weights"] == [s["alpha"] for s in c["scales"]]

    def test_random_deterministic(self, pool_args, tmp_path):
        argv = ["select", *pool_args, "--method", "random", "--budget-per-class", "4", "--seed", "3"]
        _, a = run(argv, tmp_path, "a.json")
        _, b = run(argv, tmp_path, "b.json")
        assert a.read_bytes() == b.read_bytes()
        _, c = run(argv[:-1] + ["4"], tmp_path, "c.json")
        assert a.read_bytes() != c.read_bytes()

    def test_missing_labels(self, pool_args, tmp_path, capsys):
        argv = list(pool_args)
        argv[argv.index("--labels") + 1] = str(tmp_path / "nope.txt")
        code, out = run(["select", *argv, "--budget", "3"], tmp_path)
        assert code == 2 and not out.exists()
        err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert err["error"] == "FileNotFoundError"

    @pytest.mark.parametrize("single", ["probcover", "maxherding"])
    def test_one_view_matches_single_method(self, tmp_path, single):
        args = write_pool(tmp_path, views=1)
        _, a = run(["select", *args, "--method", f"mers-{single}", "--budget-per-class", "3"], tmp_path, "a.json")
        _, b = run(["select", *args, "--method", single, "--budget-per-class", "3"], tmp_path, "b.json")
        ra, rb = json.loads(a.read_text()), json.loads(b.read_text())
        assert ra.pop("method") != rb.pop("method")
        assert ra == rb

    def test_binary_embeddings(self, tmp_path):
        args = write_pool(tmp_path, fmt="bin")
        code, out = run(["select", *args, "--budget-per-class", "2", "--method", "herding"], tmp_path)
        assert code == 0 and all(len(c["chosen"]) == 2 for c in json.loads(out.read_text())["classes"])

    def test_budget_flags_exclusive(self, pool_args, tmp_path):
        code, out = run(["select", *pool_args, "--budget", "3", "--budget-per-class", "1"], tmp_path)
        assert code == 2 and not out.exists()

    def test_budget_required(self, pool_args, tmp_path):
        code, out = run(["select", *pool_args], tmp_path)
        assert code == 2 and not out.exists()

    def test_misaligned_views(self, tmp_path):
        args = write_pool(tmp_path)
        bad = tmp_path / "short.csv"
        bad.write_text("1.0,0.0\n")
        code, out = run(["select", *args, "--embedding", f"{bad}:short", "--budget", "3"], tmp_path)
        assert code == 2 and not out.exists()

    def test_internal_error_exit_1(self, pool_args, tmp_path, monkeypatch):
        def boom(*a, **k):
            raise RuntimeError("unexpected")
        monkeypatch.setattr(cli, "select_pool", boom)
        code, out = run(["select", *pool_args, "--budget", "3"], tmp_path)
        assert code == 1 and not out.exists()


class TestAnalyze:
    def test_beta_is_alpha_ratio(self, pool_args, tmp_path):
        code, out = run(["analyze", *pool_args, "--budget-per-class", "3"], tmp_path)
        rep = json.loads(out.read_text())
        assert code == 0 and rep["schema"] == "mers-analyze/1"
        alpha = {(p["class_label"], p["embedding_name"]): p["alpha"] for p in rep["profiles"]}
        assert len(rep["beta"]) == 3
        for b in rep["beta"]:
            c = b["class_label"]
            assert b["beta"] == alpha[(c, b["numerator"])] / alpha[(c, b["denominator"])]

    def test_k1_gives_unit_alpha(self, tmp_path):
        args = write_pool(tmp_path, views=1)
        code, out = run(["analyze", *args, "--k", "1"], tmp_path)
        assert code == 0 and all(p["alpha"] == 1.0 for p in json.loads(out.read_text())["profiles"])

    def test_k_clamped_with_warning(self, pool_args, tmp_path, caplog):
        code, out = run(["analyze", *pool_args, "--k", "50"], tmp_path)
        assert code == 0
        assert all(p["k_used"] == 11 for p in json.loads(out.read_text())["profiles"])
        assert "clamped" in caplog.text

    def test_needs_budget_or_k(self, pool_args, tmp_path):
        code, out = run(["analyze", *pool_args], tmp_path)
        assert code == 2 and not out.exists()


class TestBench:
    def test_saturation_and_columns(self, tmp_path):
        code, out = run(["bench", "--classes", "2", "--points-per-class", "8", "--budgets", "2,8",
                         "--scaling-sizes", "50,100"], tmp_path, "bench.csv")
        assert code == 0
        rows = list(csv.DictReader(out.open()))
        assert list(rows[0]) == cli.BENCH_COLUMNS
        comp = [r for r in rows if r["section"] == "comparison"]
        assert {r["method"] for r in comp} == set(cli.METHODS)
        full = [r for r in comp if r["budget"] == "8"]
        for label in ("0", "1"):
            vals = {float(r["coverage"]) for r in full if r["class_label"] == label}
            opt = {float(r["opt"]) for r in full if r["class_label"] == label}
            assert len(vals) == 1 and vals == opt
        for r in comp:
            if r["opt"] and r["method"] == "mers-probcover":
                assert float(r["ratio_to_opt"]) >= 1 - 1 / math.e
        scaling = [r for r in rows if r["section"] == "scaling"]
        assert [r["n"] for r in scaling] == ["50", "100"] and scaling[1]["quadratic_ratio"]


class TestOther:
    def test_metrics(self, tmp_path):
        m = tmp_path / "acc.csv"
        m.write_text("0.8\n0.6,0.9\n")
        code, out = run(["metrics", "--matrix", str(m)], tmp_path)
        rep = json.loads(out.read_text())
        assert code == 0 and (rep["FAA"], rep["AAA"], rep["Forgetting"], rep["Stability"]) == (0.75, 0.775, 0.2, 0.6)

    def test_theory_smoke(self, tmp_path):
        code, out = run(["theory", "--samples", "10000", "--risk-samples", "10000", "--experiments", "2"],
                        tmp_path)
        rep = json.loads(out.read_text())
        assert code == 0 and rep["schema"] == "mers-theory/1" and rep["passed"]
        assert set(rep["checks"]) == {"worked_examples", "closed_form_vs_generic", "monte_carlo_kl",
                                      "anisotropy_i1", "small_beta_i2", "risk_gap"}

    def test_unknown_command(self, capsys):
        assert main(["frobnicate"]) == 2

    def test_version(self, capsys):
        assert main(["--version"]) == 0
        assert "mers" in capsys.readouterr().out
