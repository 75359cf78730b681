import json

import numpy as np
import pytest

from conslaw_forge.cli import EXIT_FAIL, EXIT_INPUT, EXIT_OK, main
from conslaw_forge.numlab import read_snapshot
from conslaw_forge.numlab.io import read_residual_csv

RUN = {
    "dims": 2,
    "n": 8,
    "T": 0.01,
    "models": {"f": {"kind": "power", "n": 1}, "g": {"kind": "power", "n": 2}},
    "initial": "1 + 0.5*cos(pi*x)*cos(pi*y)",
    "equation": "builtin:heat2d.eq",
    "vectors": "auto",
}


def run(capsys, *argv):
    code = main(list(argv))
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def report(path):
    d = json.loads((path / "report.json").read_text())
    d["manifest"].pop("timestamp")
    return d


def write(tmp_path, name, obj):
    path = tmp_path / name
    path.write_text(json.dumps(obj) if not isinstance(obj, str) else obj)
    return str(path)


def test_adjoint_plain_and_latex(capsys):
    code, out, _ = run(capsys, "adjoint", "builtin:source2d.eq")
    assert code == EXIT_OK and out.strip() == "F*  = v_t + f(u)*v_xx + g(u)*v_yy + q1(u)*v"
    code, out, _ = run(capsys, "adjoint", "builtin:linear_heat.eq", "--format", "latex")
    assert code == EXIT_OK and "v_{t}" in out


def test_adjoint_json(capsys):
    code, out, _ = run(capsys, "adjoint", "builtin:heat3d.eq", "--format", "json")
    doc = json.loads(out)
    assert code == EXIT_OK and doc["manifest"]["command"] == "adjoint"


def test_list(capsys):
    code, out, _ = run(capsys, "list")
    assert code == EXIT_OK and "heat3d.eq" in out and "demo2d.json" in out


class TestExitCodes:
    def test_missing_file(self, capsys, tmp_path):
        code, _, err = run(capsys, "adjoint", str(tmp_path / "nope.eq"))
        assert code == EXIT_INPUT and "error" in err

    def test_parse_error_has_caret(self, capsys, tmp_path):
        path = write(tmp_path, "bad.eq", "u_t = u_xx +* u\n")
        code, _, err = run(capsys, "adjoint", path)
        assert code == EXIT_INPUT and "^" in err

    def test_unknown_builtin(self, capsys):
        code, _, _ = run(capsys, "adjoint", "builtin:missing.eq")
        assert code == EXIT_INPUT

    def test_bad_flag(self):
        with pytest.raises(SystemExit) as info:
            main(["adjoint", "builtin:heat3d.eq", "--format", "pdf"])
        assert info.value.code == EXIT_INPUT

    def test_not_self_adjoint_is_a_result(self, capsys):
        code, out, _ = run(capsys, "selfadjoint", "builtin:source2d.eq")
        assert code == EXIT_OK and "not nonlinearly self-adjoint" in out

    def test_outside_ansatz_fails(self, capsys):
        code, _, _ = run(capsys, "selfadjoint", "builtin:source_r.eq")
        assert code == EXIT_FAIL

    def test_conslaws_without_substitution_fails(self, capsys):
        code, _, _ = run(capsys, "conslaws", "builtin:source2d.eq")
        assert code == EXIT_FAIL

    def test_3d_cap_is_input_error(self, capsys, tmp_path):
        doc = dict(RUN, dims=3, n=128, equation="builtin:heat3d.eq")
        doc["models"] = dict(RUN["models"], h={"kind": "const", "k": 1.0})
        code, _, err = run(capsys, "simulate", write(tmp_path, "big.json", doc))
        assert code == EXIT_INPUT and "limited" in err


def test_selfadjoint_family(capsys):
    code, out, _ = run(capsys, "selfadjoint", "builtin:heat3d.eq")
    assert code == EXIT_OK
    assert "x*y*z*a1" in out and "verified" in out


def test_conslaws_trivial_time_translation(capsys):
    code, out, _ = run(capsys, "conslaws", "builtin:heat3d.eq", "--symmetry", "X1")
    assert code == EXIT_OK and "all conserved vectors trivial" in out


def test_conslaws_source_latex(capsys):
    code, out, _ = run(capsys, "conslaws", "builtin:source_omega.eq", "--symmetry", "x", "--latex")
    assert code == EXIT_OK and out.count("\\begin{align*}") >= 4


class TestVerify:
    def vectors(self, tmp_path, sign="+"):
        doc = {"vectors": [
            {"name": "density", "components": ["-u", "f*u_x", f"{sign}g*u_y", "h*u_z"]},
            {"name": "family", "components": ["-u*v_x", "f*u_x*v_x - g*u_y*v_y - h*u_z*v_z",
                                              "g*(u_x*v_y + u_y*v_x)", "h*(u_x*v_z + u_z*v_x)"]},
        ]}
        return write(tmp_path, "vectors.json", doc)

    @pytest.mark.parametrize("mode", ["symbolic", "oracle"])
    def test_pass(self, capsys, tmp_path, mode):
        code, out, _ = run(capsys, "verify", "builtin:heat3d.eq", self.vectors(tmp_path), "--mode", mode, "--samples", "200")
        assert code == EXIT_OK and out.count("PASS") == 2

    @pytest.mark.parametrize("mode", ["symbolic", "oracle"])
    def test_negative_control(self, capsys, tmp_path, mode):
        code, out, _ = run(capsys, "verify", "builtin:heat3d.eq", self.vectors(tmp_path, "-"), "--mode", mode)
        assert code == EXIT_FAIL and "FAIL" in out

    def test_numeric(self, capsys, tmp_path):
        vec = write(tmp_path, "v.json", {"vectors": [{"name": "density", "components": ["-u", "f*u_x", "g*u_y"]}]})
        cfg = write(tmp_path, "c.json", {k: v for k, v in RUN.items() if k not in ("equation", "vectors")})
        code, out, _ = run(capsys, "verify", "builtin:heat2d.eq", vec, "--mode", "numeric", "--config", cfg)
        assert code == EXIT_OK, out

    def test_malformed_vectors(self, capsys, tmp_path):
        path = write(tmp_path, "v.json", {"vectors": [{"components": ["u"]}]})
        code, _, _ = run(capsys, "verify", "builtin:heat3d.eq", path)
        assert code == EXIT_INPUT


class TestSimulate:
    def test_outputs(self, capsys, tmp_path):
        cfg = write(tmp_path, "run.json", dict(RUN, snapshots=3))
        out_dir = tmp_path / "out"
        code, out, _ = run(capsys, "simulate", cfg, "--out", str(out_dir))
        assert code == EXIT_OK
        rep = report(out_dir)
        names = [b["vector"] for b in rep["result"]["balance"]]
        assert len(names) == 3
        for name in names:
            data = read_residual_csv(out_dir / f"residuals_{name.replace('[', '_').replace(']', '')}.csv")
            assert len(data["residual"]) == rep["result"]["steps"]
        u, extents, t = read_snapshot(out_dir / f"snapshot_{rep['result']['steps']:06d}.bin")
        assert u.shape == (8, 8) and t == pytest.approx(0.01)
        assert np.isclose(u.max(), rep["result"]["max"])

    def test_determinism(self, capsys, tmp_path):
        cfg = write(tmp_path, "run.json", RUN)
        reports = []
        for _ in range(2):
            assert run(capsys, "simulate", cfg, "--out", str(tmp_path / "out"))[0] == EXIT_OK
            reports.append(report(tmp_path / "out"))
        assert reports[0] == reports[1]

    def test_oracle_determinism(self, capsys, tmp_path):
        vec = TestVerify().vectors(tmp_path)
        reports = []
        for _ in range(2):
            run(capsys, "verify", "builtin:heat3d.eq", vec, "--mode", "oracle", "--seed", "7", "--samples", "100",
                "--out", str(tmp_path / "out"))
            reports.append(report(tmp_path / "out"))
        assert reports[0] == reports[1]

    def test_linear_study(self, capsys):
        code, out, _ = run(capsys, "simulate", "builtin:study_linear.toml", "--format", "json")
        study = json.loads(out)["result"]["study"]
        assert code == EXIT_OK and len(study["orders"]) == 3
        assert all(abs(o - 2.0) <= 0.2 for o in study["orders"])
