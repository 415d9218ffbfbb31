import os

import pytest

from kdv5lab.cli import OUT_DIR_ENV, main
from kdv5lab.config import KINDS, load_config, make_spec, parse_config
from kdv5lab.errors import UsageError
from kdv5lab.experiments import read_table, rejudge, run

SMALL = """
[growth]
kind = a2-growth
N = 8, 16, 32

[scale]
kind = scaling
members = 2
n = 64
seed = 5
"""


def _read(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def test_empty_config(tmp_path):
    f = tmp_path / "empty.ini"
    f.write_text("")
    assert load_config(f) == []
    assert parse_config("# only a comment\n") == []


def test_parse_config_types():
    specs = parse_config(SMALL)
    assert [s.id for s in specs] == ["growth", "scale"]
    assert specs[0]["N"] == (8, 16, 32)
    assert specs[0]["t"] == 0.5
    assert specs[1]["seed"] == 5 and specs[1]["n"] == 64


def test_duplicate_ids_rejected():
    with pytest.raises(UsageError, match="duplicate experiment id"):
        parse_config(SMALL + "\n[growth]\nkind = scaling\nseed = 1\n")


def test_unknown_key_reports_line():
    text = "[x]\nkind = a2-growth\nN = 8, 16\nbogus = 1\n"
    with pytest.raises(UsageError, match=r":4: unknown key 'bogus'"):
        parse_config(text)


def test_unknown_kind_and_missing_seed():
    with pytest.raises(UsageError, match="unknown kind"):
        parse_config("[x]\nkind = nope\n")
    with pytest.raises(UsageError, match="needs 'seed'"):
        parse_config("[x]\nkind = scaling\n")
    with pytest.raises(UsageError, match="cannot read"):
        make_spec("x", "a2-growth", {"N": "8, x"})


def test_every_kind_has_defaults_except_seed():
    for kind, schema in KINDS.items():
        required = {k for k, (_, d) in schema.items() if d is None}
        assert required <= {"seed"}, kind


def test_cli_usage_errors(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[x]\nkind = a2-growth\nwhat = 1\n")
    assert main(["suite", "--config", str(bad), "--out-dir", str(tmp_path)]) == 2
    assert ":3:" in capsys.readouterr().err
    assert main(["scaling", "--out-dir", str(tmp_path)]) == 2
    assert main(["a2-growth", "--tolerance", "nokey", "--out-dir", str(tmp_path)]) == 2
    assert main(["a2-growth", "--tolerance", "zzz=1", "--out-dir", str(tmp_path)]) == 2
    with pytest.raises(SystemExit):
        main(["not-a-kind"])


def test_same_seed_gives_identical_csv(tmp_path):
    args = ["scaling", "--members", "2", "--n", "64", "--seed", "7"]
    assert main(args + ["--out-dir", str(tmp_path / "a")]) == 0
    assert main(args + ["--out-dir", str(tmp_path / "b")]) == 0
    for name in ("norms.csv", "summary.csv"):
        assert _read(tmp_path / "a" / "scaling" / name) == _read(tmp_path / "b" / "scaling" / name)
    assert main(["scaling", "--members", "2", "--n", "64", "--seed", "8",
                 "--out-dir", str(tmp_path / "c")]) == 0
    assert _read(tmp_path / "a" / "scaling" / "norms.csv") != \
        _read(tmp_path / "c" / "scaling" / "norms.csv")


def test_csv_layout_and_rejudge(tmp_path):
    cfg = tmp_path / "small.ini"
    cfg.write_text(SMALL)
    assert main(["suite", "--config", str(cfg), "--out-dir", str(tmp_path), "--jobs", "2"]) == 0
    text = _read(tmp_path / "growth" / "norms.csv").splitlines()
    assert text[0] == "# kdv5lab a2-growth.norms v1"
    assert text[1] == "N,norm"
    summary = read_table(tmp_path / "summary.csv")
    assert summary.columns == ("id", "kind", "check", "value", "threshold", "passed")
    for spec in load_config(cfg):
        fresh = run(spec)
        again = rejudge(spec, str(tmp_path))
        assert [(c.name, c.passed) for c in again] == [(c.name, c.passed) for c in fresh.checks]
        assert [c.value for c in again] == [c.value for c in fresh.checks]


def test_tolerance_override_flips_verdict(tmp_path):
    out = str(tmp_path)
    assert main(["a2-growth", "--N", "8,16,32", "--out-dir", out]) == 0
    assert main(["a2-growth", "--N", "8,16,32", "--tolerance", "min_slope=5",
                 "--out-dir", out]) == 1
    rows = read_table(tmp_path / "a2-growth" / "summary.csv").rows
    assert rows[0][2] == "slope" and rows[0][5] is False


def test_out_dir_env(tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_DIR_ENV, str(tmp_path / "env"))
    assert main(["a2-growth", "--N", "8,16,32"]) == 0
    assert os.path.exists(tmp_path / "env" / "a2-growth" / "norms.csv")
    assert os.path.exists(tmp_path / "env" / "summary.csv")


def test_runtime_failure_becomes_failed_row():
    bundle = run(make_spec("m", "measure-check", {"lemma": "zz", "seed": 1}))
    assert not bundle.passed
    assert bundle.checks[0].name == "completed"
    assert any("lemma" in n for n in bundle.notes)


def test_shipped_config_covers_every_criterion_kind():
    here = os.path.dirname(__file__)
    specs = load_config(os.path.join(here, "..", "configs", "acceptance.ini"))
    kinds = {s.kind for s in specs}
    assert kinds == set(KINDS) - {"solve"}
    assert len({s.id for s in specs}) == len(specs)
