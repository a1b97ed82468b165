import csv
import io
import json
import math

import pytest

from nctheat import cli
from nctheat.cli import ConfigError, RunConfig


def run(capsys, *argv):
    code = cli.main(list(argv))
    return code, capsys.readouterr().out


def test_eval_h_examples(capsys):
    code, out = run(capsys, "eval-h", "--alpha", "1,1", "--z", "0")
    assert code == 0 and float(out.split()[-1]) == pytest.approx(2 * math.pi, rel=1e-12)
    _, out = run(capsys, "eval-h", "--alpha", "1,1", "--z", "0.5", "--m", "2", "--format", "json")
    data = json.loads(out)
    assert data["schema_version"] == 1
    assert data["value"] == pytest.approx(4 * math.pi * math.log(2), rel=1e-9)
    _, out = run(capsys, "eval-h", "--alpha", "1,1", "--z", "0", "--norm", "pi", "--format", "json")
    assert json.loads(out)["value"] == pytest.approx(math.pi, rel=1e-12)


def test_eval_h_csv(capsys):
    _, out = run(capsys, "eval-h", "--alpha", "2,1,1", "--z", "0.2,0.3", "--format", "csv")
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0][0] == "schema_version" and len(rows) == 2


def test_eval_h_arity_error(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["eval-h", "--alpha", "2,1,1", "--z", "0.2"])
    assert exc.value.code == 2


def test_eval_h_domain_error_exits_3(capsys):
    assert cli.main(["eval-h", "--alpha", "1,1", "--z", "2.0"]) == 3
    assert "DomainError" in capsys.readouterr().err


@pytest.mark.parametrize("form", ["general", "components", "diagonal", "conformal"])
def test_v2_forms_write_json(tmp_path, capsys, form):
    out = tmp_path / f"{form}.json"
    code, _ = run(capsys, "v2", "--form", form, "--m", "2", "--out", str(out))
    assert code == 0
    data = json.loads(out.read_text())
    assert data["schema_version"] == 1 and data["form"] == form
    assert data["terms"]
    assert (tmp_path / f"{form}.txt").exists()


def test_v2_general_summary(capsys):
    cli.main(["v2", "--form", "general"])
    assert capsys.readouterr().err.splitlines()[0] == "3 part-I groups, 5 part-II groups"


def test_v2_conformal_coefficients(capsys):
    _, out = run(capsys, "v2", "--form", "conformal", "--format", "json")
    terms = json.loads(out)["terms"]
    byalpha = {(tuple(t["alpha"]), t["zpow"]): t["coeff"] for t in terms if t["pattern"] == "∇_ss k"}
    assert byalpha[((3, 1), 0)] == "m + 2"
    assert byalpha[((2, 1), 0)] == "-1/2*m"


def test_v2_unknown_form_exits_2():
    with pytest.raises(SystemExit) as exc:
        cli.main(["v2", "--form", "spherical"])
    assert exc.value.code == 2


def test_v2_conformal_rejects_custom_op():
    with pytest.raises(SystemExit) as exc:
        cli.main(["v2", "--form", "conformal", "--op", "custom"])
    assert exc.value.code == 2


def test_verify_oracles(capsys):
    code, out = run(capsys, "verify", "--suite", "oracles", "--format", "json")
    data = json.loads(out)
    assert code == 0 and data["passed"]
    assert {c["name"] for c in data["checks"]} == {"simplex vs contour", "operator series vs Wick"}


def test_verify_relations_residual_tables(capsys, tmp_path):
    out = tmp_path / "res.csv"
    code, _ = run(capsys, "verify", "--suite", "relations", "--format", "csv", "--residuals", "--out", str(out))
    assert code == 0
    assert "y1,y2,m,lhs,rhs,residual,quadrature_error" in out.read_text()


def test_verify_failure_sets_exit_code(capsys):
    code, out = run(capsys, "verify", "--suite", "relations", "--tol", "1e-30")
    assert code == 1 and "FAILURES" in out


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults\nm = 3\ntol=1e-9\nnorm = pi\ntheta = 0.1 0.2 0.3\n")
    args = cli.build_parser().parse_args(["eval-h", "--alpha", "1,1", "--config", str(cfg), "--m", "4"])
    rc = cli.build_config(args)
    assert rc.m == 4 and rc.tol == 1e-9 and rc.norm == "pi"
    assert rc.theta == (0.1, 0.2, 0.3)


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    with pytest.raises(ConfigError, match="unknown key"):
        cli.read_config(str(bad))
    bad.write_text("just words\n")
    with pytest.raises(ConfigError, match="key=value"):
        cli.read_config(str(bad))
    bad.write_text("m = two\n")
    with pytest.raises(ConfigError, match="bad value"):
        cli.read_config(str(bad))


@pytest.mark.parametrize("kw", [dict(m=0), dict(norm="tau"), dict(tol=-1.0), dict(L=0), dict(threads=0),
                                dict(points=0), dict(max_failed_fraction=1.0), dict(format="xml"), dict(eps=())])
def test_run_config_validation(kw):
    with pytest.raises(ConfigError):
        RunConfig(**kw).validate()


def test_theta_matrix():
    th = RunConfig(theta=(0.1, 0.2, 0.3)).theta_matrix(3)
    assert th.array[0, 1] == 0.1 and th.array[0, 2] == 0.2 and th.array[1, 2] == 0.3
    assert th.array[2, 1] == -0.3
    assert RunConfig(theta=(0.4,)).theta_matrix(3).array[1, 2] == 0.4
    with pytest.raises(ConfigError):
        RunConfig(theta=(0.1, 0.2)).theta_matrix(3)


def test_heat_xcheck_rejects_other_dimensions():
    with pytest.raises(SystemExit) as exc:
        cli.main(["heat-xcheck", "--m", "3"])
    assert exc.value.code == 2


def test_heat_xcheck_with_weyl_file(tmp_path, capsys):
    w = tmp_path / "h.txt"
    w.write_text("1 0 0.05 0.0\n-1 0 0.05 0.0\n")
    code, out = run(capsys, "heat-xcheck", "--weyl", str(w), "--L", "8", "--format", "json")
    data = json.loads(out)
    assert data["rows"][0]["case"] == "file"
    assert code == (0 if data["passed"] else 1)
    assert data["rows"][0]["V0_fit"] == pytest.approx(data["rows"][0]["V0_formula"], rel=1e-4)
