import json

import pytest

from qworklab.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_PASS, OUTPUT_ENV, main, parse_overrides, read_config_file
from qworklab.experiments import REGISTRY, ConfigError, resolve, validate


def write(path, text):
    path.write_text(text)
    return str(path)


class TestList:
    def test_lists_every_experiment_with_topic_tags(self, capsys):
        assert main(["list"]) == EXIT_PASS
        out = capsys.readouterr().out.splitlines()
        assert len(out) == len(REGISTRY) == 10
        assert all("[" in line and "]" in line for line in out)
        assert any(line.startswith("exp-ngt") for line in out)


class TestValidate:
    def test_missing_beta_named(self, tmp_path, capsys):
        path = write(tmp_path / "c.txt", "experiment = exp-jarzynski-classical\nn = 2000\n")
        assert main(["validate", path]) == EXIT_CONFIG
        assert "beta: required parameter missing for exp-jarzynski-classical" in capsys.readouterr().out

    def test_valid_config(self, tmp_path, capsys):
        path = write(tmp_path / "c.txt", "# comment\nexperiment = exp-jarzynski-classical\nbeta = 1.5  # inverse T\n")
        assert main(["validate", path]) == EXIT_PASS
        assert "valid" in capsys.readouterr().out

    def test_diagnostics_name_fields(self):
        assert validate({"experiment": "exp-ngt"}) == []
        assert validate({"experiment": "nope"})[0].startswith("experiment:")
        diags = validate({"experiment": "exp-ngt", "colour": "1", "eps": "abc"})
        assert any(d.startswith("colour:") for d in diags)
        assert any(d.startswith("eps:") for d in diags)

    def test_malformed_file(self, tmp_path):
        path = write(tmp_path / "c.txt", "experiment exp-ngt\n")
        with pytest.raises(ConfigError, match=":1:"):
            read_config_file(path)
        assert main(["validate", path]) == EXIT_CONFIG


class TestOverrides:
    def test_forms(self):
        assert parse_overrides(["--eps-prime", "3", "--n_random=5"]) == {"eps_prime": "3", "n_random": "5"}

    def test_dangling_key(self):
        with pytest.raises(ConfigError, match="missing value"):
            parse_overrides(["--eps"])

    def test_resolve_types(self):
        cfg = resolve({"experiment": "exp-tpm-jarzynski", "betas": "0.5,2"})
        assert cfg["betas"] == [0.5, 2.0] and cfg["seed"] == 12345


class TestRun:
    def test_ngt_outputs(self, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["exp-ngt", "--output", str(out)]) == EXIT_PASS
        summary = json.loads((out / "summary.json").read_text())
        assert summary["passed"] and summary["experiment"] == "exp-ngt"
        assert {"config", "code_version", "python", "numpy", "started", "finished"} <= set(summary["metadata"])
        for name in summary["files"]:
            assert (out / name).exists()
        assert "PASS" in capsys.readouterr().out

    def test_csv_byte_identical_across_runs(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["run", "exp-tpm-jarzynski", "--n-specs", "10", "--output", str(a)]) == EXIT_PASS
        assert main(["run", "exp-tpm-jarzynski", "--n-specs", "10", "--output", str(b)]) == EXIT_PASS
        csvs = sorted(p.name for p in a.glob("*.csv"))
        assert csvs
        for name in csvs:
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_env_output_root_and_hashed_directory(self, tmp_path, monkeypatch):
        monkeypatch.setenv(OUTPUT_ENV, str(tmp_path))
        assert main(["exp-ngt"]) == EXIT_PASS
        assert main(["exp-ngt"]) == EXIT_PASS
        dirs = list(tmp_path.iterdir())
        assert len(dirs) == 1 and dirs[0].name.startswith("exp-ngt-")

    def test_config_file_then_overrides(self, tmp_path):
        cfg = write(tmp_path / "c.txt", "experiment = exp-ngt\neps = 1\neps_prime = 4\n")
        out = tmp_path / "run"
        assert main(["exp-ngt", "--config", cfg, "--eps-prime", "6", "--output", str(out)]) == EXIT_PASS
        echo = (out / "config.txt").read_text()
        assert "eps_prime = 6.0000000000000000e+00" in echo
        assert "eps = 1.0000000000000000e+00" in echo

    def test_config_file_experiment_mismatch(self, tmp_path):
        cfg = write(tmp_path / "c.txt", "experiment = exp-dephasing\n")
        assert main(["exp-ngt", "--config", cfg, "--output", str(tmp_path / "r")]) == EXIT_CONFIG

    def test_missing_required_parameter_exit_code(self, tmp_path, capsys):
        assert main(["exp-jarzynski-classical", "--output", str(tmp_path / "r")]) == EXIT_CONFIG
        assert "beta" in capsys.readouterr().err

    def test_trajectory_csv_header(self, tmp_path):
        out = tmp_path / "r"
        assert main(["exp-free-packet", "--output", str(out)]) == EXIT_PASS
        assert (out / "trajectories.csv").read_text().splitlines()[0] == "traj_id,t,x,v,V,Q,E_local"

    def test_unknown_experiment(self, capsys):
        assert main(["exp-nothing"]) == EXIT_CONFIG

    def test_failed_check_exit_code(self, tmp_path):
        # a single low amplitude never reaches the semiclassical regime and a 64-point grid spoils Ehrenfest
        out = tmp_path / "r"
        code = main(["exp-semiclassical", "--amplitudes", "2", "--n-points", "64", "--n-traj", "20",
                     "--output", str(out)])
        assert code == EXIT_FAIL
        assert json.loads((out / "summary.json").read_text())["passed"] is False

    def test_ngt_zero_eps_prime_note(self, tmp_path, capsys):
        assert main(["exp-ngt", "--eps-prime", "0", "--output", str(tmp_path / "r")]) == EXIT_PASS
        assert "note:" in capsys.readouterr().out

    @pytest.mark.slow
    def test_stationary_run(self, tmp_path):
        out = tmp_path / "r"
        assert main(["run", "exp-stationary", "--output", str(out)]) == EXIT_PASS
        assert (out / "work.csv").read_text().splitlines()[0] == "traj_id,W_M,W_E,dK,dV,dQ"
