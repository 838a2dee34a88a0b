import csv
import json
from pathlib import Path

import pytest

from becsim import cli, model
from becsim.solver import SolverError


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_minimal_config_runs(tmp_path):
    cfg = write(tmp_path, "eq.toml", "[solver]\nt_end = 1.0\noutput_every = 0.5\n")
    out = tmp_path / "out"
    assert cli.main(["--out-dir", str(out), "run", str(cfg)]) == 0
    manifest = json.loads((out / "eq_manifest.json").read_text())
    assert all(Path(f).exists() for f in manifest["files"])
    assert {Path(f).name for f in manifest["files"]} >= {"eq_trajectory.csv", "eq_summary.csv"}
    assert {c["status"] for c in manifest["checks"].values()} <= {"pass", "warn", "fail"}
    assert manifest["status"] == "pass"
    traj = rows(out / "eq_trajectory.csv")
    assert len(traj) == 3 * 400 and set(traj[0]) == {"t", "x", "n"}
    summary = rows(out / "eq_summary.csv")
    assert len(summary) == 3
    tol = manifest["checks"]["supersolution"]["limit"]
    assert all(float(r["sup_violation"]) <= tol and float(r["oleinik_violation"]) <= tol for r in summary)


def test_condensing_config_records_onset(tmp_path):
    cfg = write(tmp_path, "c2.toml", '[initial]\nfamily = "constant"\nc = 2.0\n[solver]\nt_end = 3.0\n')
    assert cli.main(["--out-dir", str(tmp_path), "run", str(cfg)]) == 0
    m = json.loads((tmp_path / "c2_manifest.json").read_text())
    # the bound is evaluated at the discrete photon number 2 (1 - epsilon)
    assert m["onset_time_bound"] == pytest.approx(model.onset_time_bound(2.0 * (1 - 1e-3)), rel=1e-6)
    assert m["onset_time"] <= m["onset_time_bound"]


def test_env_var_out_dir(tmp_path, monkeypatch):
    cfg = write(tmp_path, "e.toml", "[solver]\nt_end = 0.2\n")
    monkeypatch.setenv("BECSIM_OUT_DIR", str(tmp_path / "env"))
    assert cli.main(["run", str(cfg)]) == 0
    assert (tmp_path / "env" / "e_manifest.json").exists()


@pytest.mark.parametrize(
    "text,line",
    [
        ("[grid]\nM = 4\n[solver\n", 3),
        ("[grid]\nM = \"x\"\n", 2),
        ("[grid]\n\nbogus = 1\n", 3),
        ("[solver]\nt_end = 1.0\ncfl = 3.0\n", 1),
        ("[initial]\nfamily = \"nope\"\n", 2),
        ("[weird]\nx = 1\n", 1),
    ],
)
def test_config_errors_exit_2_with_line(tmp_path, capsys, text, line):
    cfg = write(tmp_path, "bad.toml", text)
    assert cli.main(["--out-dir", str(tmp_path), "run", str(cfg)]) == 2
    assert f"bad.toml:{line}:" in capsys.readouterr().err


def test_missing_config_exit_2(tmp_path):
    assert cli.main(["--out-dir", str(tmp_path), "run", str(tmp_path / "nothing.toml")]) == 2


def test_failed_check_exit_1(tmp_path):
    cfg = write(tmp_path, "strict.toml", "[solver]\nt_end = 0.5\n[checks]\nbalance_rtol = 0.0\n"
                "[initial]\nfamily = \"constant\"\nc = 2.0\n")
    assert cli.main(["--out-dir", str(tmp_path), "run", str(cfg)]) == 1
    m = json.loads((tmp_path / "strict_manifest.json").read_text())
    assert m["status"] == "fail" and m["checks"]["photon_balance"]["status"] == "fail"


def test_solver_abort_exit_3(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise SolverError("non-finite state after step", t=0.1)

    monkeypatch.setattr(cli, "run", boom)
    cfg = write(tmp_path, "a.toml", "[solver]\nt_end = 0.5\n")
    assert cli.main(["--out-dir", str(tmp_path), "run", str(cfg)]) == 3


PAIR = """[initial]
family = "{fa}"
{pa}
[initial_b]
family = "{fb}"
{pb}
[solver]
t_end = 1.0
output_every = 0.1
"""


def test_compare_identical(tmp_path):
    cfg = write(tmp_path, "same.toml", PAIR.format(fa="constant", pa="c = 2.0", fb="constant", pb="c = 2.0"))
    assert cli.main(["--out-dir", str(tmp_path), "compare", str(cfg)]) == 0
    assert all(float(r["d"]) == 0.0 for r in rows(tmp_path / "same_contraction.csv"))


def test_compare_ordered_and_crossing(tmp_path):
    cfg = write(tmp_path, "ord.toml", PAIR.format(fa="linear_multiple", pa="a = 0.5", fb="linear_multiple", pb="a = 1.0"))
    assert cli.main(["--out-dir", str(tmp_path), "compare", str(cfg)]) == 0
    m = json.loads((tmp_path / "ord_manifest.json").read_text())
    tol = m["checks"]["gronwall"]["limit"]
    assert all(float(r["d_plus"]) <= tol for r in rows(tmp_path / "ord_contraction.csv"))
    cfg = write(tmp_path, "x.toml", PAIR.format(fa="constant", pa="c = 2.0", fb="linear_multiple", pb="a = 3.0"))
    assert cli.main(["--out-dir", str(tmp_path), "compare", str(cfg)]) == 0
    d = [float(r["d"]) for r in rows(tmp_path / "x_contraction.csv")]
    assert d[-1] < d[0]


def test_compare_needs_second_state(tmp_path):
    cfg = write(tmp_path, "one.toml", "[solver]\nt_end = 1.0\n")
    assert cli.main(["--out-dir", str(tmp_path), "compare", str(cfg)]) == 2


def test_sweep_epsilon_refinement(tmp_path):
    cfg = write(tmp_path, "se.toml", '[initial]\nfamily = "constant"\nc = 2.0\n[solver]\nt_end = 1.0\n'
                "[sweep]\nepsilon = [4e-3, 2e-3, 1e-3]\n")
    assert cli.main(["--out-dir", str(tmp_path / "a"), "sweep", str(cfg)]) == 0
    diffs = [float(r["l1_to_next"]) for r in rows(tmp_path / "a" / "se_sweep.csv") if r["l1_to_next"]]
    assert len(diffs) == 2 and diffs[1] < diffs[0]
    assert cli.main(["--out-dir", str(tmp_path / "b"), "--jobs", "2", "sweep", str(cfg)]) == 0
    assert (tmp_path / "a" / "se_sweep.csv").read_bytes() == (tmp_path / "b" / "se_sweep.csv").read_bytes()


def test_sweep_cutoff_approaches_plain(tmp_path):
    cfg = write(tmp_path, "sh.toml", '[initial]\nfamily = "scaled_equilibrium"\na = 1.2\nmu = 0.5\n'
                "[solver]\nt_end = 1.0\n[sweep]\nh = [0.2, 0.1, 0.05]\n")
    assert cli.main(["--out-dir", str(tmp_path), "sweep", str(cfg)]) == 0
    d = [float(r["l1_to_plain"]) for r in rows(tmp_path / "sh_sweep.csv")]
    assert d[0] > d[1] > d[2]


def test_sweep_single_value_rejected(tmp_path, capsys):
    cfg = write(tmp_path, "s1.toml", "[sweep]\nM = [100]\n")
    assert cli.main(["--out-dir", str(tmp_path), "sweep", str(cfg)]) == 2
    assert "s1.toml:1:" in capsys.readouterr().err


def test_run_is_byte_reproducible(tmp_path):
    cfg = write(tmp_path, "r.toml", '[initial]\nfamily = "bump"\ncenter = 0.5\nwidth = 0.2\nheight = 3.0\n'
                "kappa = 0.05\n[solver]\nt_end = 0.5\n")
    for d in ("a", "b"):
        assert cli.main(["--out-dir", str(tmp_path / d), "run", str(cfg)]) == 0
    for f in ("r_trajectory.csv", "r_summary.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_bad_tol_scale(tmp_path):
    cfg = write(tmp_path, "t.toml", "[solver]\nt_end = 0.2\n")
    assert cli.main(["--tol-scale", "0", "--out-dir", str(tmp_path), "run", str(cfg)]) == 2
