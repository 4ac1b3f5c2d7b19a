import json
from pathlib import Path

import numpy as np
import pytest

from mslab.cli import main, run, run_single
from mslab.config import ConfigError, config_from_dict, load_config
from mslab.fieldio import read_field

BASE_CONFIG = """
seed = 3
output = "{out}"

[grid]
n = 2
N = 16

[scenario]
name = "constant-field-with-potential"

[[experiment]]
kind = "riesz-norms"
operators = ["identity", "riesz_vector", "V_inv"]
p = [1.0, 2.0, 3.0]
probe_size = 8

[[experiment]]
kind = "weights-rh"
q = [2.0, "inf"]
"""


def write_config(tmp_path, text=None, out=None):
    out = out or (tmp_path / "results")
    cfg = tmp_path / "cfg.toml"
    cfg.write_text((text or BASE_CONFIG).format(out=str(out).replace("\\", "/")))
    return cfg, Path(out)


class TestConfig:
    def test_load_and_overrides(self, tmp_path):
        cfg, out = write_config(tmp_path)
        config = load_config(cfg, {"grid_N": 32, "seed": 9})
        assert config.grid.N == 32
        assert config.seed == 9
        assert len(config.experiments) == 2

    def test_unknown_experiment_kind(self):
        with pytest.raises(ConfigError, match="unknown experiment kind"):
            config_from_dict({"experiment": [{"kind": "bogus"}]})

    def test_unknown_scenario_errors(self):
        with pytest.raises(Exception, match="unknown scenario"):
            config_from_dict({"scenario": {"name": "not-a-scenario"}})

    def test_expression_scenario(self):
        config = config_from_dict(
            {
                "grid": {"n": 2, "N": 16},
                "scenario": {
                    "field": {"kind": "expression", "a1": "-(x2 - 0.5)/2", "a2": "(x1 - 0.5)/2"},
                    "potential": {"kind": "expression", "text": "x1^2"},
                },
            }
        )
        ctx = config.scenario.build(config.grid)
        assert ctx.V is not None
        assert np.max(np.abs(ctx.absB.values - 2.0)) < 0.2  # fd curl of sampled a


class TestRun:
    def test_empty_experiment_list_manifest_only(self, tmp_path):
        cfg, out = write_config(
            tmp_path,
            text="""
output = "{out}"

[grid]
n = 2
N = 16

[scenario]
name = "free"
""",
        )
        config = load_config(cfg)
        assert run(config) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["files"] == {}
        assert manifest["errors"] == []

    def test_smoke_run_writes_rows_and_manifest(self, tmp_path):
        cfg, out = write_config(tmp_path)
        assert main(["run", "--config", str(cfg)]) == 0
        csv_path = out / "riesz-norms" / "norm_curve.csv"
        lines = csv_path.read_text().strip().splitlines()
        assert lines[0] == "operator,p,N,lower_bound,probe_id,seed"
        assert len(lines) == 1 + 3 * 3  # ops x p values
        manifest = json.loads((out / "manifest.json").read_text())
        rel = str(csv_path.relative_to(out))
        assert rel in manifest["files"]
        # manifest completeness: every produced file is listed
        all_files = {
            str(p.relative_to(out))
            for p in out.rglob("*")
            if p.is_file() and p.name != "manifest.json"
        }
        assert all_files == set(manifest["files"])

    def test_determinism_byte_identical_csv(self, tmp_path):
        cfg1, out1 = write_config(tmp_path, out=tmp_path / "r1")
        config1 = load_config(cfg1)
        assert run(config1) == 0
        cfg2, out2 = write_config(tmp_path, out=tmp_path / "r2")
        config2 = load_config(cfg2)
        assert run(config2) == 0
        a = (out1 / "riesz-norms" / "norm_curve.csv").read_bytes()
        b = (out2 / "riesz-norms" / "norm_curve.csv").read_bytes()
        assert a == b
        ja = json.loads((out1 / "riesz-norms" / "results.json").read_text())
        jb = json.loads((out2 / "riesz-norms" / "results.json").read_text())
        ja.pop("timestamp")
        jb.pop("timestamp")
        assert ja == jb

    def test_invalid_scenario_nonzero_exit(self, tmp_path, capsys):
        cfg = tmp_path / "bad.toml"
        cfg.write_text('[scenario]\nname = "nope"\n')
        assert main(["run", "--config", str(cfg)]) == 2

    def test_single_command_and_report(self, tmp_path):
        cfg, out = write_config(tmp_path)
        assert main(["weights-rh", "--config", str(cfg)]) == 0
        assert main(["report", "--out", str(out)]) == 0

    def test_report_detects_corruption(self, tmp_path, capsys):
        cfg, out = write_config(tmp_path)
        assert main(["weights-rh", "--config", str(cfg)]) == 0
        victim = out / "weights-rh" / "rh_constants.csv"
        victim.write_bytes(victim.read_bytes() + b"tampered\n")
        assert main(["report", "--out", str(out)]) == 1

    def test_experiment_error_recorded_partial_preserved(self, tmp_path):
        cfg, out = write_config(
            tmp_path,
            text="""
output = "{out}"

[grid]
n = 2
N = 16

[scenario]
name = "free"

[[experiment]]
kind = "weights-rh"

[[experiment]]
kind = "riesz-norms"
operators = ["V_inv"]
p = [2.0]
""",
        )
        config = load_config(cfg)
        # V_inv on a scenario without potential errors; earlier results stay
        assert run(config) == 1
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["errors"] and manifest["errors"][0]["experiment"] == "riesz-norms"
        assert (out / "weights-rh" / "rh_constants.csv").exists()


class TestArtifacts:
    def test_gauge_and_cz_and_m_fields(self, tmp_path):
        cfg, out = write_config(
            tmp_path,
            text="""
seed = 1
output = "{out}"

[grid]
n = 2
N = 16

[scenario]
name = "constant-field"

[[experiment]]
kind = "weights-m"

[[experiment]]
kind = "gauge-check"
sizes = [0.25, 0.5]

[[experiment]]
kind = "cz-run"
p = 1.0
probe_size = 4

[[experiment]]
kind = "fp-check"
n_cubes = 6
probe_size = 4
beta = [0.5]

[[experiment]]
kind = "solutions-check"

[[experiment]]
kind = "build-operator"

[[experiment]]
kind = "riesz-reverse"
p = [2.0]
probe_size = 6
""",
        )
        config = load_config(cfg)
        assert run(config) == 0
        aux = read_field(out / "weights-m" / "aux_scale.mslf")
        assert aux.shape == (16, 16)
        assert np.all(aux > 0)
        h = read_field(out / "gauge-check" / "h_R0_25.mslf")
        assert h.shape == (2, 4, 4)
        cz_dirs = list((out / "cz-run").glob("alpha_*"))
        assert cz_dirs
        for d in cz_dirs:
            f = read_field(d / "f.mslf")
            g = read_field(d / "g.mslf")
            b = read_field(d / "b_sum.mslf")
            assert np.max(np.abs(f - g - b)) <= 1e-12 * np.max(np.abs(f))
            cubes = json.loads((d / "cubes.json").read_text())
            assert "report" in cubes
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["errors"] == []
