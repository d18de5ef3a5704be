import argparse
import csv
import json

import numpy as np
import pytest

from oblique_fem.cli import ConfigError, ExperimentConfig, build_parser, main, parse_levels

HEADER = "h,l2,l2_order,h1,h1_order,h2,h2_order,c_h"


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_parse_levels():
    assert parse_levels("0..4") == (0, 4)
    assert parse_levels("3") == (3, 3)
    with pytest.raises(argparse.ArgumentTypeError):
        parse_levels("a..b")


def test_parser_rejects_unknown_experiment():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["run", "--experiment", "9"])


def test_config_defaults_follow_experiment():
    cfg = ExperimentConfig.from_dict({"experiment": 4})
    assert (cfg.domain, cfg.oblique, cfg.n_boundary, cfg.epsilon) == ("ellipse", "tangential", 8, 0.6)
    assert cfg.problem().name == "experiment-4"


def test_config_rejects_unknown_fields():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"experiment": 1, "mesh_size": 3})


def test_config_custom_problem():
    cfg = ExperimentConfig.from_dict({"solution": "exp3", "coefficient": "identity", "epsilon": 1.0})
    p = cfg.problem()
    assert p.name == "custom-exp3"
    assert p.c == pytest.approx(2.0 * np.sqrt(2.0) * np.e, rel=1e-12)


def test_config_incompatible_solution():
    # exp4 is not radial, so its normal-rotated derivative varies along the circle
    cfg = ExperimentConfig.from_dict({"solution": "exp4"})
    with pytest.raises(ConfigError):
        cfg.problem()


def test_run_writes_outputs(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["run", "--experiment", "2", "--levels", "0..2", "--out", str(out),
                 "--mesh-dump", "--matrix-market"]) == 0
    for name in ("report.csv", "convergence.svg", "summary.json", "mesh.txt", "system.mtx"):
        assert (out / name).is_file()
    text = (out / "report.csv").read_text()
    assert text.splitlines()[0] == HEADER
    assert len(text.splitlines()) == 4
    assert text in capsys.readouterr().out
    summary = json.loads((out / "summary.json").read_text())
    assert summary["problem"] == "experiment-2"
    assert len(summary["levels"]) == 3
    assert (out / "convergence.svg").read_text().startswith("<svg")
    assert (out / "system.mtx").read_text().startswith("%%MatrixMarket matrix coordinate real general")


def test_run_is_deterministic(tmp_path):
    for d in ("a", "b"):
        assert main(["run", "--experiment", "1", "--levels", "0..2", "--out", str(tmp_path / d)]) == 0
    assert (tmp_path / "a" / "report.csv").read_bytes() == (tmp_path / "b" / "report.csv").read_bytes()


def test_json_config_with_flag_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"experiment": 3, "levels": [0, 3], "out": str(tmp_path / "x")}))
    assert main(["run", "--config", str(cfg), "--levels", "0..1"]) == 0
    assert len(_rows(tmp_path / "x" / "report.csv")) == 2


def test_bad_epsilon_tilde_exit_code(tmp_path, capsys):
    code = main(["run", "--experiment", "2", "--levels", "0..1", "--epsilon-tilde", "1.0",
                 "--out", str(tmp_path)])
    assert code == 2
    assert "epsilon_tilde" in capsys.readouterr().err


def test_bad_level_range_exit_code(tmp_path):
    assert main(["run", "--experiment", "1", "--levels", "3..1", "--out", str(tmp_path)]) == 2


def test_check_mt_identity(capsys):
    assert main(["check", "mt-identity"]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["passed"] is True


def test_mesh_dump_format(tmp_path, capsys):
    assert main(["mesh-dump", "--experiment", "1", "--levels", "1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    kinds = {ln.split()[0] for ln in lines}
    assert kinds == {"v", "t", "e"}
    nv = sum(ln.startswith("v ") for ln in lines)
    nt = sum(ln.startswith("t ") for ln in lines)
    ne = sum(ln.startswith("e ") for ln in lines)
    assert nv - ne + nt == 1
    for ln in lines:
        f = ln.split()
        if f[0] == "v":
            assert len(f) in (3, 4)
        elif f[0] == "t":
            assert len(f) in (4, 5)
        else:
            assert f[3] in ("interior", "boundary")
            assert len(f) == (6 if f[3] == "boundary" else 4)
    target = tmp_path / "m.txt"
    assert main(["mesh-dump", "--experiment", "1", "--levels", "1", "--file", str(target)]) == 0
    assert target.read_text().splitlines() == lines


@pytest.mark.slow
def test_experiment2_half_stabilization(tmp_path):
    assert main(["run", "--experiment", "2", "--levels", "0..4", "--epsilon-tilde", "0.0",
                 "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "report.csv")
    assert float(rows[-1]["h2_order"]) >= 1.7
