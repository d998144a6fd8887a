"""Config validation, experiment runner, and artifact reproducibility."""

import json

import pytest
import yaml

from mflab.cli import build_model, load_config, main, validate_config
from mflab.errors import ConfigError


def write_config(tmp_path, payload, name="config.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(payload))
    return str(path)


MINI_CHAOS = {
    "experiment": "chaos_sweep",
    "seed": 0,
    "model": {"preset": "quadratic"},
    "sweep": {"n_particles": [2]},
    "mcmc": {"n_samples": 800, "n_burnin": 200, "n_pi_samples": 2000,
             "n_bootstrap": 50},
}


class TestConfigValidation:
    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="unknown"):
            validate_config({"experiment": "chaos_sweep", "bogus": 1,
                             "model": {"preset": "quadratic"}})

    def test_unknown_section_key(self):
        with pytest.raises(ConfigError, match="mcmc.bogus"):
            validate_config({"experiment": "chaos_sweep",
                             "model": {"preset": "quadratic"},
                             "mcmc": {"bogus": 3}})

    def test_bad_experiment(self):
        with pytest.raises(ConfigError, match="experiment"):
            validate_config({"experiment": "nope"})

    def test_model_needs_preset_or_kind(self):
        with pytest.raises(ConfigError, match="preset"):
            validate_config({"experiment": "chaos_sweep", "model": {}})

    def test_defaults_filled(self):
        cfg = validate_config(MINI_CHAOS)
        assert cfg["mcmc"]["n_batches"] == 32
        assert cfg["grid"]["n_nodes"] == 2048
        assert cfg["seed"] == 0

    def test_type_checking(self):
        bad = dict(MINI_CHAOS)
        bad["mcmc"] = {"n_samples": "many"}
        with pytest.raises(ConfigError, match="n_samples"):
            validate_config(bad)


class TestBuildModel:
    def test_preset(self):
        model = build_model({"preset": "relu3"})
        assert model.kind == "example_nn"

    def test_explicit_quadratic(self):
        cfg = validate_config({
            "experiment": "bounds_table",
            "model": {"kind": "quadratic_oracle", "kappa": 0.7, "c": 0.1},
        })
        model = build_model(cfg["model"])
        assert model.kappa == 0.7

    def test_explicit_nn_with_inline_data(self):
        cfg = validate_config({
            "experiment": "bounds_table",
            "model": {
                "kind": "example_nn",
                "activation": "tanh",
                "loss": {"type": "squared", "scale": 1.0, "clip_radius": 2.0},
                "data": {"x": [[1.0], [-0.5]], "y": [0.2, -0.1]},
            },
        })
        model = build_model(cfg["model"])
        assert model.activation.name == "tanh"
        assert model.data_x.shape == (2, 1)

    def test_nn_from_csv(self, tmp_path):
        csv = tmp_path / "data.csv"
        csv.write_text("x_1,y\n1.0,0.5\n-0.8,-0.3\n")
        cfg = validate_config({
            "experiment": "bounds_table",
            "model": {"kind": "example_nn", "data_csv": str(csv)},
        })
        model = build_model(cfg["model"])
        assert model.data_x.shape == (2, 1)
        assert model.data_p[0] == 0.5

    def test_unknown_preset(self):
        with pytest.raises(ConfigError, match="unknown preset"):
            build_model({"preset": "not_a_preset"})


class TestRunCommand:
    def test_chaos_sweep_run_and_artifacts(self, tmp_path):
        cfg_path = write_config(tmp_path, MINI_CHAOS)
        out = tmp_path / "out"
        assert main(["run", "--config", cfg_path, "--out", str(out)]) == 0
        assert (out / "chaos_sweep.csv").exists()
        assert (out / "report_N002.json").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["invariants_passed"] is True
        assert manifest["seed"] == 0

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg_path = write_config(tmp_path, MINI_CHAOS)
        out1 = tmp_path / "a"
        out2 = tmp_path / "b"
        assert main(["run", "--config", cfg_path, "--out", str(out1)]) == 0
        assert main(["run", "--config", cfg_path, "--out", str(out2)]) == 0
        assert ((out1 / "chaos_sweep.csv").read_bytes()
                == (out2 / "chaos_sweep.csv").read_bytes())

    def test_seed_override_changes_results(self, tmp_path):
        cfg_path = write_config(tmp_path, MINI_CHAOS)
        out1 = tmp_path / "a"
        out2 = tmp_path / "b"
        main(["run", "--config", cfg_path, "--out", str(out1)])
        main(["run", "--config", cfg_path, "--out", str(out2), "--seed", "9"])
        assert ((out1 / "chaos_sweep.csv").read_bytes()
                != (out2 / "chaos_sweep.csv").read_bytes())

    def test_bad_config_exit_2(self, tmp_path):
        cfg_path = write_config(tmp_path, {"experiment": "nope"})
        assert main(["run", "--config", cfg_path, "--out",
                     str(tmp_path / "x")]) == 2

    def test_missing_config_exit_2(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "none.yaml"),
                     "--out", str(tmp_path / "x")]) == 2

    def test_numeric_failure_exit_3(self, tmp_path):
        cfg = {
            "experiment": "transport_map",
            "model": {"preset": "unit_zero"},
            "grid": {"n_nodes": 256},
            "flow": {"dt": 1e-5, "t_max": 1.0},
        }
        cfg_path = write_config(tmp_path, cfg)
        assert main(["run", "--config", cfg_path, "--out",
                     str(tmp_path / "x")]) == 3

    def test_mfld_run(self, tmp_path):
        cfg = {
            "experiment": "mfld_run",
            "model": {"preset": "standard_zero"},
            "mfld": {"n_particles": 16, "horizon": 1.0, "step": 0.01},
        }
        cfg_path = write_config(tmp_path, cfg)
        out = tmp_path / "out"
        assert main(["run", "--config", cfg_path, "--out", str(out)]) == 0
        assert (out / "trajectory.csv").exists()
        assert (out / "diagnostics.json").exists()

    def test_tilt_profile_reports_threshold(self, tmp_path):
        cfg = {
            "experiment": "tilt_profile",
            "model": {"preset": "relu3"},
            "profile": {"n_times": 10, "svg": False},
        }
        cfg_path = write_config(tmp_path, cfg)
        out = tmp_path / "out"
        assert main(["run", "--config", cfg_path, "--out", str(out)]) == 0
        summary = (out / "summary.txt").read_text()
        assert "t* = 0.05263157894736842" in summary

    def test_bounds_table(self, tmp_path):
        cfg = {"experiment": "bounds_table", "model": {"preset": "relu3"}}
        cfg_path = write_config(tmp_path, cfg)
        out = tmp_path / "out"
        assert main(["run", "--config", cfg_path, "--out", str(out)]) == 0
        rows = json.loads((out / "bounds.json").read_text())
        assert rows["implied_constants"] == 1.0

    def test_bounds_table_zero_model_is_prefactor_only(self, tmp_path):
        cfg = {"experiment": "bounds_table",
               "model": {"preset": "standard_zero"}}
        cfg_path = write_config(tmp_path, cfg)
        out = tmp_path / "out"
        assert main(["run", "--config", cfg_path, "--out", str(out)]) == 0
        rows = json.loads((out / "bounds.json").read_text())
        assert rows["main_bound_generic"] == pytest.approx(2.0**0.5)

    def test_zero_model_sweep_reports_zero_kl(self, tmp_path):
        cfg = dict(MINI_CHAOS)
        cfg["model"] = {"preset": "standard_zero"}
        cfg_path = write_config(tmp_path, cfg)
        out = tmp_path / "out"
        assert main(["run", "--config", cfg_path, "--out", str(out)]) == 0
        report = json.loads((out / "report_N002.json").read_text())
        assert report["kl_estimate"] == 0.0

    def test_worker_pool_does_not_change_bytes(self, tmp_path):
        cfg = dict(MINI_CHAOS)
        cfg["sweep"] = {"n_particles": [2, 4]}
        cfg_path = write_config(tmp_path, cfg)
        out1 = tmp_path / "w1"
        out2 = tmp_path / "w2"
        assert main(["run", "--config", cfg_path, "--out", str(out1)]) == 0
        assert main(["run", "--config", cfg_path, "--out", str(out2),
                     "--workers", "2"]) == 0
        assert ((out1 / "chaos_sweep.csv").read_bytes()
                == (out2 / "chaos_sweep.csv").read_bytes())


class TestReportCommand:
    def test_report_roundtrip(self, tmp_path, capsys):
        cfg_path = write_config(tmp_path, MINI_CHAOS)
        out = tmp_path / "out"
        main(["run", "--config", cfg_path, "--out", str(out)])
        assert main(["report", str(out)]) == 0
        captured = capsys.readouterr()
        assert "chaos sweep" in captured.out

    def test_missing_manifest_exit_2(self, tmp_path):
        assert main(["report", str(tmp_path)]) == 2

    def test_report_propagates_invariant_failure(self, tmp_path):
        manifest = {"experiment": "chaos_sweep", "seed": 0,
                    "versions": {"mflab": "0.1.0"},
                    "invariants_passed": False}
        (tmp_path / "manifest.json").write_text(json.dumps(manifest))
        assert main(["report", str(tmp_path)]) == 1


class TestBoundsCommand:
    def test_lsi_pert_json(self, capsys):
        assert main(["bounds", "lsi-pert", "--alpha", "1",
                     "--lipschitz", "1"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["value"] == pytest.approx(148.4131591025766)

    def test_heatflow_terms(self, capsys):
        assert main(["bounds", "heatflow-lipschitz", "--a", "3"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["value"] == pytest.approx(0.5)

    def test_songbo_domain_error_exit_3(self, capsys):
        assert main(["bounds", "songbo", "--kappa", "3", "--epsilon", "0.1",
                     "--rho", "1", "--n-particles", "2"]) == 3
        payload = json.loads(capsys.readouterr().out)
        assert "error" in payload

    def test_rescale(self, capsys):
        assert main(["bounds", "rescale", "--sigma", "1", "--lam", "4",
                     "--beta-hat", "1", "--B", "1"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["value"]["beta_hat"] == pytest.approx(0.25)
        assert payload["value"]["B"] == pytest.approx(0.5)
