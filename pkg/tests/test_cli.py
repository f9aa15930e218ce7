import io
import json
import subprocess
import sys

import pytest

from backdoor_game.cli import fixtures, list_fixtures, main, run, validate, ConfigError


def write(tmp_path, name, cfg):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


@pytest.mark.parametrize(
    "cfg,needle",
    [
        ({"version": 2, "experiment": "separation", "eps": 0.1}, "version"),
        ({"version": 1, "experiment": "bogus"}, "experiment"),
        ({"version": 1, "experiment": "tree-defense", "s": 64, "delta": 0.1, "eps": 0.001}, "delta^2/s^2"),
        ({"version": 1, "experiment": "boltzmann-sweep", "d": 2, "eps": 0.5}, "1/(2d)"),
        ({"version": 1, "experiment": "theorem1-sweep", "d": [1], "eps": 0.1}, "d >= 2"),
        ({"version": 1, "experiment": "separation", "eps": -0.1}, "eps must be > 0"),
        ({"version": 1, "experiment": "separation", "eps": 0.1, "delta": 1.5}, "0 < delta < 1"),
        ({"version": 1, "experiment": "separation"}, "'eps'"),
        ({"version": 1, "experiment": "oracle-check", "n": 7, "eps": 0.5}, "2 <= n <= 4"),
    ],
)
def test_config_errors_exit_2(tmp_path, capsys, cfg, needle):
    code = run(write(tmp_path, "c.json", cfg), str(tmp_path / "out"))
    assert code == 2
    assert needle in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_tree_error_names_the_bound():
    with pytest.raises(ConfigError, match=r"eps=0.001 violates eps < delta\^2/s\^2 = 2.441e-06"):
        validate({"version": 1, "experiment": "tree-defense", "s": 64, "delta": 0.1, "eps": 0.001})


def test_unreadable_config(tmp_path, capsys):
    assert run(tmp_path / "missing.json") == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(bad) == 2


def test_budget_error_exit_3(tmp_path, capsys):
    code = run(write(tmp_path, "s.json", {"version": 1, "experiment": "separation", "n": 15, "eps": 0.1}), str(tmp_path / "o"))
    assert code == 3
    assert "budget" in capsys.readouterr().err


def test_oracle_check_run(tmp_path):
    cfg = {"version": 1, "experiment": "oracle-check", "n": 3, "eps": ["1/4", "1/2"]}
    out = io.StringIO()
    assert run(write(tmp_path, "o.json", cfg), str(tmp_path / "o"), out=out) == 0
    text = out.getvalue()
    assert "[PASS] removal-bayes eps=1/4: exact value 1/2" in text
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["experiment"] == "oracle-check" and all(c["passed"] for c in summary["checks"])
    assert (tmp_path / "o" / "results.csv").read_text().startswith("experiment-id,attacker,defender,n,d,eps,delta,trials,wins,point,ci_lo,ci_hi")


def test_rerun_is_byte_identical(tmp_path):
    cfg = {"version": 1, "experiment": "theorem1-sweep", "seed": 3, "d": [2], "eps": [0.01], "trials": 200,
           "defenders": ["majority-vote", "boltzmann"]}
    path = write(tmp_path, "t.json", cfg)
    out = io.StringIO()
    assert run(path, str(tmp_path / "a"), out=out) == 0
    assert run(path, str(tmp_path / "b"), out=io.StringIO()) == 0
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()
    assert (tmp_path / "a" / "summary.json").read_bytes() == (tmp_path / "b" / "summary.json").read_bytes()
    assert "defense-lower d=2 eps=0.01 majority-vote" in out.getvalue()


def test_default_output_dir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    write(tmp_path, "exp.json", {"version": 1, "experiment": "oracle-check", "n": 2, "eps": "1"})
    assert run("exp.json", out=io.StringIO()) == 0
    assert (tmp_path / "exp-results" / "results.csv").exists()


def test_fixtures():
    items = {f["name"]: f for f in fixtures()}
    assert {"figure3-tree", "indicator-class-n3", "shattering-witness-sparse-n3-k2"} <= set(items)
    assert "f(0110)=1" in items["figure3-tree"]["note"]
    assert "vc=1" in items["indicator-class-n3"]["note"]
    assert [f["sha256"] for f in fixtures()] == [f["sha256"] for f in items.values()]
    out = io.StringIO()
    list_fixtures(out, as_json=True)
    assert json.loads(out.getvalue())[0]["name"] == "figure3-tree"


def test_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "backdoor_game", "list-fixtures"], capture_output=True, text=True)
    assert proc.returncode == 0 and "figure3-tree" in proc.stdout
    assert main(["list-fixtures"]) == 0
