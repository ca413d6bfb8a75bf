import hashlib
import json
import os

import numpy as np
import pytest

from subdiff.cli import ConfigError, load_config, main, parse_model


def write_config(tmp_path, body, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(body))
    return str(p)


BM_CFG = {
    "model": {"kind": "brownian"},
    "subordinator": {"components": [{"beta": 0.5, "weight": 1.0}]},
    "solver": {"t_max": 1.0, "n_t": 120, "x_min": -8.5, "x_max": 8.5,
               "n_x": 160},
    "seed": 0,
}


class TestLoadConfig:
    def test_defaults_applied(self, tmp_path):
        cfg = load_config(write_config(tmp_path, {"model": {"kind": "brownian"}}))
        assert cfg["solver"].n_x == 400
        assert cfg["solver"].n_t == 400
        assert cfg["seed"] == 0

    def test_unknown_top_key_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="bogus"):
            load_config(write_config(tmp_path,
                                     {"model": {"kind": "brownian"},
                                      "bogus": 1}))

    def test_hurst_out_of_range_names_field(self, tmp_path):
        with pytest.raises(ConfigError, match="model.h"):
            load_config(write_config(tmp_path,
                                     {"model": {"kind": "fbm", "h": 1.2}}))

    def test_unknown_model_key_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="model.hh"):
            load_config(write_config(
                tmp_path, {"model": {"kind": "fbm", "h": 0.5, "hh": 2}}
            ))

    def test_mixture_weights_any_positive_total(self, tmp_path):
        body = {
            "model": {"kind": "brownian"},
            "subordinator": {"components": [
                {"beta": 0.4, "weight": 2.0}, {"beta": 0.8, "weight": 1.5},
            ]},
        }
        cfg = load_config(write_config(tmp_path, body))
        assert cfg["subordinator"].laplace_exponent(np.array([1.0]))[0] == 3.5

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            load_config("/nonexistent/cfg.json")

    def test_bad_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(str(p))

    def test_parse_model_variants(self):
        parse_model({"kind": "ou", "alpha": 1.0, "sigma": 1.0})
        parse_model({"kind": "variable_hurst", "preset": "mobius",
                     "a": 0.6, "b": 0.2})
        parse_model({"kind": "piecewise_hurst", "breakpoints": [0.5],
                     "values": [0.5, 0.8]})
        parse_model({"kind": "mixed", "terms": [
            {"coef": 1.0, "model": {"kind": "brownian"}},
            {"coef": 0.5, "model": {"kind": "fbm", "h": 0.7}},
        ]})
        with pytest.raises(ConfigError):
            parse_model({"kind": "spam"})


class TestCommands:
    def test_unknown_subcommand_exits_2(self, capsys):
        assert main(["frobnicate"]) == 2

    def test_simulate_paths_zero_exits_2(self, tmp_path, capsys):
        cfg = write_config(tmp_path, BM_CFG)
        rc = main(["simulate", "--config", cfg, "--paths", "0",
                   "--out", str(tmp_path / "out")])
        assert rc == 2

    def test_simulate_writes_artifacts(self, tmp_path):
        cfg = write_config(tmp_path, {**BM_CFG, "paths": 4,
                                      "sample_points": 6})
        out = str(tmp_path / "out")
        assert main(["simulate", "--config", cfg, "--out", out]) == 0
        lines = open(os.path.join(out, "paths.csv")).read().splitlines()
        assert lines[0] == "path_id,t,value"
        assert len(lines) == 1 + 4 * 7
        meta = json.loads(open(os.path.join(out, "paths.meta.json")).read())
        assert meta["seed"] == 0

    def test_simulate_determinism(self, tmp_path):
        cfg = write_config(tmp_path, {**BM_CFG, "paths": 3,
                                      "sample_points": 5})
        hashes = []
        for d in ("a", "b"):
            out = str(tmp_path / d)
            assert main(["simulate", "--config", cfg, "--out", out]) == 0
            data = open(os.path.join(out, "paths.csv"), "rb").read()
            hashes.append(hashlib.sha256(data).hexdigest())
        assert hashes[0] == hashes[1]

    def test_moments_row(self, tmp_path, capsys):
        out = str(tmp_path / "out")
        rc = main(["moments", "--beta", "0.5", "--gamma", "1", "--t", "1",
                   "--out", out])
        assert rc == 0
        printed = capsys.readouterr().out
        assert "1.1283791670955126" in printed

    def test_density_artifact(self, tmp_path):
        cfg = write_config(tmp_path, {**BM_CFG, "times": [0.5, 1.0]})
        out = str(tmp_path / "out")
        assert main(["density", "--config", cfg, "--out", out]) == 0
        lines = open(os.path.join(out, "density.csv")).read().splitlines()
        assert lines[0] == "t,x,q"
        assert len(lines) == 1 + 2 * 160
        meta = json.loads(open(os.path.join(out,
                                            "density.meta.json")).read())
        assert max(meta["mass_error"]) < 1e-6

    def test_validate_passes_and_reports(self, tmp_path):
        cfg = write_config(tmp_path, {
            **BM_CFG,
            "solver": {"t_max": 1.0, "n_t": 200, "x_min": -8.5,
                       "x_max": 8.5, "n_x": 200},
        })
        out = str(tmp_path / "out")
        assert main(["validate", "--config", cfg, "--out", out]) == 0
        report = json.loads(open(os.path.join(out, "report.json")).read())
        assert report["passed"]
        names = {c["name"] for c in report["checks"]}
        assert "solver_vs_subordination" in names
        for c in report["checks"]:
            assert {"name", "measured", "tolerance", "passed",
                    "runtime_s"} <= set(c)

    def test_validate_failure_exits_1(self, tmp_path):
        body = {**BM_CFG, "tolerance": 1e-9,
                "solver": {"t_max": 1.0, "n_t": 100, "x_min": -8.5,
                           "x_max": 8.5, "n_x": 120}}
        cfg = write_config(tmp_path, body)
        rc = main(["validate", "--config", cfg, "--out", str(tmp_path / "o")])
        assert rc == 1

    def test_solve_fbm_fractional_rejected(self, tmp_path):
        body = {
            "model": {"kind": "fbm", "h": 0.7},
            "subordinator": {"components": [{"beta": 0.5}]},
            "equation": "fractional",
        }
        cfg = write_config(tmp_path, body)
        rc = main(["solve", "--config", cfg, "--out", str(tmp_path / "o")])
        assert rc == 2

    def test_numerics_failure_exits_3(self, tmp_path, monkeypatch):
        import subdiff.cli as cli
        from subdiff.errors import NumericsError

        def boom(*a, **kw):
            raise NumericsError("synthetic failure")

        monkeypatch.setattr(cli, "inverse_time_moment", boom)
        rc = main(["moments", "--beta", "0.5", "--gamma", "1", "--t", "1",
                   "--out", str(tmp_path / "o")])
        assert rc == 3

    def test_model_json_round_trip(self):
        bodies = [
            {"kind": "brownian"},
            {"kind": "fbm", "h": 0.7},
            {"kind": "ou", "alpha": 1.0, "sigma": 2.0},
            {"kind": "piecewise_hurst", "breakpoints": [0.5],
             "values": [0.5, 0.8]},
            {"kind": "variable_hurst", "preset": "mobius", "a": 0.6,
             "b": 0.2, "horizon": 2.0},
        ]
        for body in bodies:
            model = parse_model(body)
            again = parse_model(model.to_json())
            assert model == again

    def test_convergence_table(self, tmp_path):
        body = {
            "model": {"kind": "fbm", "h": 0.7},
            "solver": {"t_max": 1.0, "n_t": 100, "x_min": -8.0,
                       "x_max": 8.0, "n_x": 200},
        }
        cfg = write_config(tmp_path, body)
        out = str(tmp_path / "out")
        assert main(["convergence", "--config", cfg, "--out", out]) == 0
        lines = open(os.path.join(out, "convergence.csv")).read().splitlines()
        assert lines[0] == "h,error,order"
        assert len(lines) == 4
        last_order = float(lines[-1].split(",")[2])
        assert last_order > 1.8
