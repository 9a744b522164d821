import csv
import io
import json
import math
import subprocess
import sys

import pytest

from soficlab.cli import DEFAULT_SEED, main

GOLDEN_MEAN = {"monoid": "int-add", "alphabet": 2,
               "forbidden": [{"support": ["0", "1"], "values": [1, 1]}]}
FULL = {"alphabet": 2, "forbidden": []}


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "gm.json").write_text(json.dumps(GOLDEN_MEAN))
    (tmp_path / "full.json").write_text(json.dumps(FULL))
    (tmp_path / "z4.json").write_text(json.dumps([[(i + j) % 4 for j in range(4)] for i in range(4)]))
    (tmp_path / "bool.json").write_text(json.dumps([[0, 0], [0, 1]]))
    (tmp_path / "bad.json").write_text(json.dumps([[0, 1, 2], [1, 2, 2], [2, 2, 1]]))
    return tmp_path


def read_csv(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def test_build_cyclic(work):
    assert main(["chart", "build", "--kind", "cyclic", "--n", "16", "--K", "-2..2", "--out", "c.json"]) == 0
    data = json.loads((work / "c.json").read_text())
    assert len(data["sigma"]) == 5 and data["d"] == 16
    assert data["elements"] == ["-2", "-1", "0", "1", "2"]


def test_build_poly_and_quality(work, capsys):
    assert main(["chart", "build", "--kind", "poly", "--p", "7", "--K", "X,X^2", "--out", "p.json"]) == 0
    assert main(["chart", "quality", "--chart", "p.json", "--out", "q.json"]) == 0
    assert capsys.readouterr().out.startswith("(SM1–SM4) at (ε=2/7, Δ=2) with SM2 coverage")
    assert json.loads((work / "q.json").read_text())["sm3_separation"] == "5/7"


def test_build_random_perm_records_seed(work):
    assert main(["chart", "build", "--kind", "random-perm", "--d", "20", "--out", "r.json"]) == 0
    assert json.loads((work / "r.json").read_text())["seed"] == DEFAULT_SEED


def test_build_product_and_extend(work):
    main(["chart", "build", "--kind", "saturating", "--n", "5", "--K", "0,1", "--out", "a.json"])
    main(["chart", "build", "--kind", "saturating", "--n", "6", "--K", "0,2", "--out", "b.json"])
    assert main(["chart", "build", "--kind", "product", "--charts", "a.json", "b.json", "--out", "ab.json"]) == 0
    assert main(["chart", "quality", "--chart", "ab.json", "--out", "q.json"]) == 0
    assert json.loads((work / "q.json").read_text())["sm4_delta"] == 6
    assert main(["chart", "build", "--kind", "cyclic", "--n", "6", "--K", "0,1", "--extend", "5",
                 "--out", "e.json"]) == 0
    assert json.loads((work / "e.json").read_text())["elements"] == ["0", "1", "5"]


def test_product_cap_env(work, monkeypatch):
    main(["chart", "build", "--kind", "cyclic", "--n", "50", "--K", "0,1", "--out", "a.json"])
    monkeypatch.setenv("SOFICLAB_PRODUCT_CAP", "100")
    assert main(["chart", "build", "--kind", "product", "--charts", "a.json", "a.json", "--out", "x.json"]) == 3
    assert not (work / "x.json").exists()


def test_quality_bicyclic_obstruction(work):
    assert main(["chart", "search-bicyclic", "--d", "20", "--iterations", "300", "--out", "b.json"]) == 0
    assert main(["chart", "quality", "--chart", "b.json", "--monoid", "bicyclic", "--out", "q.json"]) == 0
    q = json.loads((work / "q.json").read_text())
    [cert] = q["obstructions"]
    assert cert["element"] == "qp" and cert["implied_delta"] <= q["sm4_delta"]


def test_search_deterministic_and_sharded(work):
    args = ["chart", "search-bicyclic", "--d", "15", "--iterations", "200"]
    main(args + ["--out", "a.json"])
    main(args + ["--out", "b.json"])
    assert (work / "a.json").read_bytes() == (work / "b.json").read_bytes()
    assert main(args + ["--shards", "3", "--out", "c.json"]) == 0
    data = json.loads((work / "c.json").read_text())
    assert data["seed"] == DEFAULT_SEED and data["search"]["shards"] == 3


def test_estimate_full_shift(work):
    main(["chart", "build", "--kind", "cyclic", "--n", "8", "--K", "-1..1", "--out", "c.json"])
    assert main(["entropy", "estimate", "--chart", "c.json", "--sft", "full.json", "--F", "-1,0,1",
                 "--delta", "1/10", "--out", "e.csv"]) == 0
    [row] = read_csv(work / "e.csv")
    assert row["count"] == "256" and row["method"] == "exact"
    assert float(row["log_count_per_d_nats"]) == math.log(2)
    assert row["seed"] == str(DEFAULT_SEED)


def test_sweep_matches_golden(work):
    from pathlib import Path
    golden = Path(__file__).parent / "golden" / "golden_mean_sweep.csv"
    assert main(["entropy", "sweep", "--sft", "gm.json", "--F", "0,1", "--delta", "1/40",
                 "--family", "cyclic", "--sizes", "4..12", "--K", "0,1", "--out", "s.csv"]) == 0
    rows = read_csv(work / "s.csv")
    expected = read_csv(golden)
    for row, exp in zip(rows, expected, strict=True):
        assert {k: row[k] for k in exp} == exp
        assert float(row["log_count_per_d_nats"]) < math.log(2)


def test_bound_subcommand(work):
    main(["chart", "build", "--kind", "cyclic", "--n", "12", "--K", "0,1", "--out", "c.json"])
    assert main(["entropy", "bound", "--chart", "c.json", "--sft", "gm.json", "--F", "0,1",
                 "--delta", "1/40", "--out", "b.json"]) == 0
    rep = json.loads((work / "b.json").read_text())
    assert rep["hypotheses_met"] and rep["certified_upper_bound"] == 2660
    assert rep["beta0"] == pytest.approx(0.05188, abs=1e-5)


def test_bound_hypotheses_unmet_exit_2(work):
    main(["chart", "build", "--kind", "saturating", "--n", "12", "--K", "0,1", "--out", "s.json"])
    (work / "gm-any.json").write_text(json.dumps({k: v for k, v in GOLDEN_MEAN.items() if k != "monoid"}))
    assert main(["entropy", "bound", "--chart", "s.json", "--sft", "gm-any.json", "--F", "0,1",
                 "--delta", "1/40", "--out", "b.json"]) == 2
    assert json.loads((work / "b.json").read_text())["hypotheses_met"] is False


def test_cap_exceeded_exit_3(work):
    main(["chart", "build", "--kind", "cyclic", "--n", "12", "--K", "0,1", "--out", "c.json"])
    assert main(["entropy", "estimate", "--chart", "c.json", "--sft", "gm.json", "--F", "0,1",
                 "--delta", "1/40", "--cap", "100", "--out", "e.csv"]) == 3
    assert not (work / "e.csv").exists()


def test_bad_rational_exit_1(work, capsys):
    main(["chart", "build", "--kind", "cyclic", "--n", "8", "--K", "0,1", "--out", "c.json"])
    assert main(["entropy", "estimate", "--chart", "c.json", "--sft", "gm.json", "--F", "0,1",
                 "--delta", "0.1"]) == 1
    assert "num/den" in capsys.readouterr().err


def test_bad_constructor_exit_1(work):
    assert main(["chart", "build", "--kind", "poly", "--p", "8", "--K", "X"]) == 1
    assert main(["chart", "build", "--kind", "saturating", "--n", "3", "--K", "0..3"]) == 1


def test_monoid_commands(work, capsys):
    assert main(["monoid", "isgroup", "--table", "z4.json"]) == 0
    assert json.loads(capsys.readouterr().out)["is_group"] is True
    assert main(["monoid", "idempotents", "--table", "bool.json"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["idempotents"] == [0] and out["frobenius"][0]["idempotent"] == "0"
    assert main(["monoid", "isgroup", "--monoid", "trans:2"]) == 0
    assert json.loads(capsys.readouterr().out)["is_group"] is False


def test_ca_check(work, capsys):
    assert main(["monoid", "ca-check", "--table", "bool.json", "--alphabet", "2",
                 "--max-memory", "2", "--out", "r.json"]) == 0
    assert capsys.readouterr().out.strip() == "all injective CAs surjective: true"
    res = json.loads((work / "r.json").read_text())
    assert res["non_equivariant"] == 0 and res["automata"] == 2 * 4 + 16


def test_nonassociative_exit_1(work, capsys):
    assert main(["monoid", "isgroup", "--table", "bad.json"]) == 1
    assert "not associative" in capsys.readouterr().err


def test_sft_monoid_mismatch_exit_1(work):
    main(["chart", "build", "--kind", "saturating", "--n", "6", "--K", "0,1", "--out", "s.json"])
    assert main(["entropy", "estimate", "--chart", "s.json", "--sft", "gm.json", "--F", "0,1",
                 "--delta", "1/40"]) == 1


def test_unknown_descriptor_exit_1(work):
    assert main(["monoid", "isgroup", "--monoid", "nonsense"]) == 1


def test_module_entry_point(work):
    proc = subprocess.run([sys.executable, "-m", "soficlab", "monoid", "isgroup", "--table", "z4.json"],
                          capture_output=True, text=True, cwd=work)
    assert proc.returncode == 0 and '"is_group": true' in proc.stdout
