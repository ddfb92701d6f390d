import io
import json
import subprocess
import sys

import jsonschema
import pytest

from typemix import cli
from typemix.machines import build_catalog, dumps_catalog


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def table(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("flag,word,country\n1,a,France\n0,b,Germany\n1,c,Bosnia & Herz\n"
                 "1,d,NULL\n0,e,n/a\n", encoding="utf-8")
    return p


def test_infer_types(tmp_path, capsys):
    p = tmp_path / "x.csv"
    p.write_text("x,y\n1,a\n0,b\n1,c\n")
    code, out, _ = run(["infer", str(p), "--format", "json"], capsys)
    assert code == 0
    cols = json.loads(out)["files"][0]["columns"]
    assert [c["inferred_type"] for c in cols] == ["boolean", "string"]


def test_human_markers(table, capsys):
    code, out, _ = run(["infer", str(table)], capsys)
    assert code == 0
    assert "MISSING  row 3: 'NULL'" in out
    assert "ANOMALY  row 2: 'Bosnia & Herz'" in out
    code, out, _ = run(["infer", str(table), "--all-rows"], capsys)
    assert out.count("OK ") >= 10


def test_json_schema_and_determinism(table, capsys):
    _, first, _ = run(["infer", str(table), "--format", "json"], capsys)
    _, second, _ = run(["infer", str(table), "--format", "json"], capsys)
    assert first == second
    jsonschema.validate(json.loads(first), cli.REPORT_SCHEMA)


def test_missing_file(capsys):
    code, _, err = run(["infer", "/nonexistent/file.csv"], capsys)
    assert code == 1 and "cannot read" in err


def test_ragged_rows(tmp_path, capsys):
    p = tmp_path / "r.csv"
    p.write_text("a,b\n1\n2,3\n")
    code, out, _ = run(["infer", str(p), "--format", "json"], capsys)
    assert code == 0
    col_b = json.loads(out)["files"][0]["columns"][1]
    assert col_b["row_labels"][0] == "missing"      # padded empty cell
    code, _, err = run(["infer", str(p), "--strict"], capsys)
    assert code == 1 and "row 2" in err


def test_strict_column_failure(tmp_path, capsys):
    p = tmp_path / "h.csv"
    p.write_text("only_header\n")
    code, out, _ = run(["infer", str(p), "--format", "json"], capsys)
    assert code == 0 and json.loads(out)["files"][0]["errors"][0]["message"] == "empty column"
    code, _, _ = run(["infer", str(p), "--strict"], capsys)
    assert code == 2


def test_bytes_scored_as_read(tmp_path, capsys):
    p = tmp_path / "w.csv"
    p.write_bytes(b"a,b\n No,x\xff\n Yes,y\n")
    code, out, _ = run(["infer", str(p), "--format", "json"], capsys)
    cols = json.loads(out)["files"][0]["columns"]
    assert cols[0]["inferred_type"] == "string"     # leading space is kept
    assert cols[1]["non_type_rows"][0]["value"] == "x�"


def test_no_header(tmp_path, capsys):
    p = tmp_path / "n.csv"
    p.write_text("1\n2\n")
    _, out, _ = run(["infer", str(p), "--no-header", "--format", "json"], capsys)
    col = json.loads(out)["files"][0]["columns"][0]
    assert col["name"] == "column_0" and len(col["row_labels"]) == 2


def test_bad_options(table, capsys):
    assert run(["infer", str(table), "--threshold", "1.5"], capsys)[0] == 1
    assert run(["infer", str(table), "--pi", "0.3,0.3,0.4"], capsys)[0] == 1
    assert run(["infer", str(table), "--catalog", "/nonexistent.json"], capsys)[0] == 1


@pytest.fixture
def corpus(tmp_path):
    rows = ["bath,flag"] + [f"{i % 2},{(i // 2) % 2}" for i in range(200)] + ["2,1"]
    (tmp_path / "a.csv").write_text("\n".join(rows) + "\n")
    (tmp_path / "labels.csv").write_text("file,column,type\na.csv,bath,integer\n"
                                         "a.csv,flag,boolean\n")
    return tmp_path


def test_train_roundtrip(corpus, capsys, tmp_path):
    base = tmp_path / "base.json"
    base.write_text(dumps_catalog(build_catalog()))
    out = tmp_path / "same.json"
    code, _, _ = run(["train", str(corpus), str(corpus / "labels.csv"), "--catalog", str(base),
                      "--iters", "0", "--out", str(out)], capsys)
    assert code == 0 and out.read_bytes() == base.read_bytes()


def test_train_improves(corpus, capsys, tmp_path):
    out = tmp_path / "trained.json"
    code, text, _ = run(["train", str(corpus), str(corpus / "labels.csv"), "--out", str(out),
                         "--iters", "50"], capsys)
    assert code == 0
    trace = [float(line.split()[-1]) for line in text.splitlines() if line.startswith("iter")]
    assert trace[-1] > trace[0]
    code, text, _ = run(["infer", str(corpus / "a.csv"), "--catalog", str(out),
                         "--format", "json"], capsys)
    types = [c["inferred_type"] for c in json.loads(text)["files"][0]["columns"]]
    assert types == ["integer", "boolean"]


def test_train_unknown_label(corpus, capsys):
    (corpus / "bad.csv").write_text("file,column,type\na.csv,bath,currency\n")
    code, _, err = run(["train", str(corpus), str(corpus / "bad.csv")], capsys)
    assert code == 1 and "currency" in err


def test_bench_empty_grid(capsys):
    code, out, _ = run(["bench", "--grid"], capsys)
    assert code == 0 and len(out.strip().splitlines()) == 1


def test_bench_small(capsys):
    code, out, _ = run(["bench", "--grid", "100", "200", "--backend", "both", "--repeats", "1"],
                       capsys)
    assert code == 0 and "numba:" in out and "numpy:" in out


def test_module_entry_point(table):
    res = subprocess.run([sys.executable, "-m", "typemix", "infer", str(table)],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "== " in res.stdout
