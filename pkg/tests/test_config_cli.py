from __future__ import annotations

import csv
import json

import pytest

from lpns2d.cli import MANIFEST, main, verify_manifest, write_manifest
from lpns2d.config import (
    RunConfig,
    apply_overrides,
    dump_config,
    load_config,
    parse_config_text,
    parse_sweep,
    validate,
)
from lpns2d.errors import ConfigurationError


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestConfig:
    def test_sections_and_aliases(self, tmp_path):
        path = tmp_path / "run.ini"
        path.write_text(
            "scenario = density-patch\n"
            "[grid]\nn = 64\nL = 50.0\n"
            "[physics]\nmu = 0.5\nsigma = 0.01\n"
            "[u0]\namp = 0.5\n"
        )
        cfg = load_config(path)
        assert (cfg.scenario, cfg.n, cfg.L, cfg.mu, cfg.sigma, cfg.u0_amp) == ("density-patch", 64, 50.0, 0.5, 0.01, 0.5)

    def test_custom_poly(self):
        cfg = apply_overrides(RunConfig(), {"law": "custom-poly [1, 0.5, 0.25]"})
        assert cfg.law == "custom-poly" and cfg.law_coefficients == (1.0, 0.5, 0.25)
        with pytest.raises(ConfigurationError):
            validate(apply_overrides(RunConfig(), {"law": "custom-poly"}))

    def test_unknown_key_and_bad_value(self):
        with pytest.raises(ConfigurationError):
            apply_overrides(RunConfig(), {"nonsense": "1"})
        with pytest.raises(ConfigurationError):
            apply_overrides(RunConfig(), {"n": "many"})
        with pytest.raises(ConfigurationError):
            parse_config_text("[broken\n")

    def test_round_trip(self, tmp_path):
        cfg = apply_overrides(RunConfig(), {"sigma": "0.03", "law": "custom-poly [1, 2]", "dt": "0.01"})
        path = tmp_path / "c.ini"
        path.write_text(dump_config(cfg))
        again = load_config(path)
        assert again == apply_overrides(cfg, {"out_dir": again.out_dir})

    @pytest.mark.parametrize(
        "key,value",
        [("p", "5"), ("q", "0.5"), ("n", "100"), ("mu", "0"), ("kappa", "0.7"), ("sigma", "1"),
         ("shape", "blob"), ("markers", "100"), ("scenario", "nope"), ("T", "-1")],
    )
    def test_validation_errors(self, key, value):
        with pytest.raises(ConfigurationError):
            validate(apply_overrides(RunConfig(), {key: value}))

    def test_index_gap(self):
        with pytest.raises(ConfigurationError, match="1/q - 1/p"):
            validate(apply_overrides(RunConfig(), {"p": "3.9", "q": "1.1"}))

    def test_uniqueness_warning(self):
        assert validate(RunConfig()).warnings
        assert not validate(apply_overrides(RunConfig(), {"p": "2", "q": "2"})).warnings

    def test_parse_sweep(self):
        assert parse_sweep("sigma=0.01,0.02") == ("sigma", [0.01, 0.02])
        assert parse_sweep("n=64,128") == ("n", [64, 128])
        assert parse_sweep("mu=") == ("mu", [])
        for bad in ("sigma", "kappa=0.1", "sigma=a,b", "mu=" + ",".join(["1"] * 17)):
            with pytest.raises(ConfigurationError):
                parse_sweep(bad)


class TestRun:
    def test_taylor_green(self, tmp_path, capsys):
        out = tmp_path / "tg"
        assert main(["run", "--scenario", "classical-ns", "--preset", "taylor-green", "--out", str(out)]) == 0
        rows = read_csv(out / "decay.csv")
        assert float(rows[-1]["t"]) == pytest.approx(1.0)
        assert max(float(r["rel_error"]) for r in rows) < 1e-6
        assert not verify_manifest(out)
        assert "final_rel_error" in capsys.readouterr().out
        for name in ("weights.csv", "norms.csv", "decay.gp", "w_final.field", "summary.csv", "config.ini"):
            assert (out / name).is_file()

    def test_invalid_p(self, tmp_path, capsys):
        code = main(["run", "--p", "5", "--out", str(tmp_path / "x")])
        assert code == 2
        report = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert "1 < q <= p < 4" in report["message"] and report["exit_code"] == 2

    def test_bad_set(self, tmp_path):
        assert main(["run", "--set", "sigma", "--out", str(tmp_path / "x")]) == 2

    def test_inert_patch(self, tmp_path):
        out = tmp_path / "patch"
        code = main(["run", "--scenario", "density-patch", "--sigma", "0", "--n", "64", "--T", "0.5", "--out", str(out)])
        assert code == 0
        rows = read_csv(out / "v_norm.csv")
        assert max(float(r["v_l2"]) for r in rows) <= 1e-10
        assert (out / "patch_summary.csv").is_file() and (out / "markers").is_dir()
        assert not verify_manifest(out)

    def test_numerical_failure_exit(self, tmp_path):
        out = tmp_path / "cfl"
        assert main(["run", "--scenario", "classical-ns", "--dt", "5", "--out", str(out)]) == 3
        assert json.loads((out / "error.json").read_text())["error"] == "StabilityError"

    @pytest.mark.parametrize("scenario", ["smallness-sweep", "stokes-validation"])
    def test_other_scenarios(self, tmp_path, scenario):
        out = tmp_path / scenario
        assert main(["run", "--scenario", scenario, "--n", "64", "--out", str(out)]) == 0
        assert (out / "summary.csv").is_file()

    def test_properties(self, capsys):
        assert main(["properties", "--cases", "3"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines and all(line.startswith("PASS") for line in lines)


class TestSweep:
    def test_empty(self, tmp_path):
        out = tmp_path / "empty"
        assert main(["run", "--sweep", "sigma=", "--out", str(out)]) == 0
        assert not out.exists()

    def test_too_many_points(self, tmp_path):
        values = ",".join(str(0.001 * k) for k in range(17))
        assert main(["run", "--sweep", f"sigma={values}", "--out", str(tmp_path / "s")]) == 2

    def test_n_refinement(self, tmp_path):
        out = tmp_path / "n"
        assert main(["run", "--sweep", "n=64,128,256", "--T", "0.2", "--out", str(out)]) == 0
        errs = [float(r["lp3_quadrature_error"]) for r in read_csv(out / "sweep.csv")]
        assert errs[0] > errs[1] > errs[2]
        assert not verify_manifest(out)

    def test_sigma_sweep_marks_failures(self, tmp_path):
        out = tmp_path / "sig"
        args = ["run", "--scenario", "smallness-sweep", "--n", "64", "--sweep", "sigma=0.01,0.02,1.5", "--out", str(out)]
        assert main(args) == 0
        rows = read_csv(out / "sweep.csv")
        assert [r["status"] for r in rows] == ["ok", "ok", "error:2"]
        a = [float(r["a0_norm"]) for r in rows[:2]]
        assert a[1] / a[0] == pytest.approx(2.0, rel=0.05)


class TestManifest:
    def test_detects_tampering(self, tmp_path):
        (tmp_path / "a.csv").write_text("x\n1\n")
        (tmp_path / "sub").mkdir()
        (tmp_path / "sub" / "b.csv").write_text("y\n")
        write_manifest(tmp_path)
        assert not verify_manifest(tmp_path)
        assert len((tmp_path / MANIFEST).read_text().splitlines()) == 2
        (tmp_path / "a.csv").write_text("x\n2\n")
        (tmp_path / "c.csv").write_text("")
        assert verify_manifest(tmp_path) == ["a.csv", "c.csv"]
