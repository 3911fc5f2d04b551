import json
import math
import os

import numpy as np
import pytest

from fplab.cli import EXIT_CERT, EXIT_OK, EXIT_USAGE, main
from fplab.svgplot import plot_csv, read_csv_columns


def run_cli(tmp_path, *args):
    return main([*args, "--out-dir", str(tmp_path)])


def only_run_dir(tmp_path, sub):
    dirs = [d for d in os.listdir(tmp_path) if d.startswith(sub)]
    assert len(dirs) >= 1
    return os.path.join(tmp_path, sorted(dirs)[-1])


class TestGaussianRates:
    def test_prox_channel_quarters(self, tmp_path):
        code = run_cli(
            tmp_path, "gaussian-rates", "--channel", "prox", "--alpha", "1",
            "--eta", "1", "--m0", "1", "--var0", "1", "--k", "50", "--no-plot",
        )
        assert code == EXIT_OK
        cols = read_csv_columns(os.path.join(only_run_dir(tmp_path, "gaussian-rates"), "trace.csv"))
        fi = np.array(cols["fi"])
        expect = 0.25 ** np.arange(51)
        assert np.max(np.abs(fi - expect) / expect) <= 1e-12

    def test_heat_centered_cubic_decay(self, tmp_path):
        code = run_cli(
            tmp_path, "gaussian-rates", "--channel", "heat", "--alpha", "1",
            "--s", "2", "--m", "0", "--t-max", "40", "--no-plot",
        )
        assert code == EXIT_OK
        cols = read_csv_columns(os.path.join(only_run_dir(tmp_path, "gaussian-rates"), "trace.csv"))
        t = np.array(cols["t"])
        fi = np.array(cols["fi"])
        scaled = fi * (1.0 + t) ** 3
        # (s-1)^2 (1+t)/(s+t) with s=2: rises from 1/2 toward 1, stays bounded
        assert scaled.max() <= 1.0 + 1e-12 and scaled.min() >= 0.5 - 1e-12

    def test_ou_channel_envelope_certified(self, tmp_path):
        code = run_cli(
            tmp_path, "gaussian-rates", "--channel", "ou", "--gamma", "1",
            "--alpha", "0.1", "--beta", "100", "--m", "0", "--no-plot",
        )
        assert code == EXIT_OK

    def test_overdeclared_poincare_constant_fails_cert(self, tmp_path):
        # beta above the true Poincare constant of rho0 gives an envelope
        # below the exact curve: the certificate must fail with exit 2
        code = run_cli(
            tmp_path, "gaussian-rates", "--channel", "heat", "--alpha", "1",
            "--s", "2", "--m", "0", "--beta", "10", "--no-plot",
        )
        assert code == EXIT_CERT

    def test_bad_channel_is_usage_error(self, tmp_path):
        assert run_cli(tmp_path, "gaussian-rates", "--channel", "warp") == EXIT_USAGE


class TestCounterexample:
    def test_small_grid_run(self, tmp_path):
        code = run_cli(
            tmp_path, "counterexample", "--t-points", "8", "--t-max", "2",
            "--gh-order", "64", "--grid-step", "4e-3", "--no-plot",
        )
        assert code == EXIT_OK
        run_dir = only_run_dir(tmp_path, "counterexample")
        for name in ("trace.csv", "bound.csv", "slope.csv", "manifest.json"):
            assert os.path.getsize(os.path.join(run_dir, name)) > 0
        slope_cols = read_csv_columns(os.path.join(run_dir, "slope.csv"))
        assert slope_cols["slope"][0] == pytest.approx(14.7207746964, abs=1e-6)
        trace_cols = read_csv_columns(os.path.join(run_dir, "trace.csv"))
        kl = np.array(trace_cols["kl"])
        assert np.all(np.diff(kl) <= 1e-8)

    def test_domain_validation(self, tmp_path):
        assert run_cli(tmp_path, "counterexample", "--M", "1.0") == EXIT_USAGE


class TestSampler:
    def test_small_run_and_determinism(self, tmp_path):
        args = (
            "sampler", "--d", "2", "--alpha", "1", "--L", "1", "--eta", "0.5",
            "--iters", "2000", "--seed", "42", "--no-plot",
        )
        assert run_cli(tmp_path / "a", *args) == EXIT_OK
        assert run_cli(tmp_path / "b", *args) == EXIT_OK
        csv_a = open(os.path.join(only_run_dir(tmp_path / "a", "sampler"), "run.csv"), "rb").read()
        csv_b = open(os.path.join(only_run_dir(tmp_path / "b", "sampler"), "run.csv"), "rb").read()
        assert csv_a == csv_b

    def test_auto_eta_and_manifest(self, tmp_path):
        code = run_cli(
            tmp_path, "sampler", "--d", "5", "--alpha", "1", "--L", "1",
            "--eta", "auto", "--iters", "4000", "--seed", "7", "--no-plot",
        )
        assert code == EXIT_OK
        run_dir = only_run_dir(tmp_path, "sampler")
        manifest = json.load(open(os.path.join(run_dir, "manifest.json")))
        assert manifest["subcommand"] == "sampler"
        assert manifest["seed"] == 7
        assert manifest["wall_time_ms"] >= 0
        for p in manifest["output_paths"]:
            assert os.path.exists(p) and os.path.getsize(p) > 0
        config = json.load(open(os.path.join(run_dir, "config.json")))
        assert config["eta"] == pytest.approx(0.2)

    def test_csv_header_comment(self, tmp_path):
        run_cli(
            tmp_path, "sampler", "--d", "1", "--alpha", "1", "--L", "1",
            "--eta", "0.5", "--iters", "400", "--seed", "3", "--no-plot",
        )
        path = os.path.join(only_run_dir(tmp_path, "sampler"), "run.csv")
        first = open(path).readline()
        assert first.startswith("# ") and "seed=3" in first

    def test_eta_too_large_usage_error(self, tmp_path):
        code = run_cli(
            tmp_path, "sampler", "--d", "1", "--alpha", "1", "--L", "1",
            "--eta", "1.5", "--iters", "100", "--seed", "0",
        )
        assert code == EXIT_USAGE

    def test_alpha_l_mismatch_usage_error(self, tmp_path):
        code = run_cli(
            tmp_path, "sampler", "--d", "1", "--alpha", "1", "--L", "2",
            "--eta", "0.1", "--iters", "100", "--seed", "0",
        )
        assert code == EXIT_USAGE


class TestGap:
    def test_pass_cases(self, tmp_path):
        assert run_cli(tmp_path, "gap", "--eps", "0.5", "--fi-floor", "10", "--no-plot") == EXIT_OK
        assert run_cli(tmp_path, "gap", "--eps", "0.9", "--fi-floor", "2", "--no-plot") == EXIT_OK

    def test_domain_violation(self, tmp_path):
        assert run_cli(tmp_path, "gap", "--eps", "1.5", "--fi-floor", "10") == EXIT_USAGE
        assert run_cli(tmp_path, "gap", "--eps", "0.5", "--fi-floor", "0.5") == EXIT_USAGE

    def test_csv_written(self, tmp_path):
        run_cli(tmp_path, "gap", "--eps", "0.5", "--fi-floor", "10", "--no-plot")
        cols = read_csv_columns(os.path.join(only_run_dir(tmp_path, "gap"), "gap.csv"))
        assert cols["r_inf"][0] <= 0.5 + 1e-6
        assert cols["fi"][0] >= 10.0 - 1e-6


class TestProxgrad:
    def test_pass(self, tmp_path):
        assert run_cli(tmp_path, "proxgrad", "--no-plot") == EXIT_OK
        run_dir = only_run_dir(tmp_path, "proxgrad")
        cols = read_csv_columns(os.path.join(run_dir, "proxgrad_quadratic.csv"))
        gsq = np.array(cols["grad_sq_norm"])
        assert np.allclose(gsq, 0.25 ** np.arange(gsq.size), rtol=1e-12)

    def test_zero_eta_usage_error(self, tmp_path):
        assert run_cli(tmp_path, "proxgrad", "--eta", "0") == EXIT_USAGE


class TestDriver:
    def test_missing_subcommand(self, tmp_path):
        assert main([]) == EXIT_USAGE

    def test_unknown_flag(self, tmp_path):
        assert run_cli(tmp_path, "gap", "--nope", "3") == EXIT_USAGE

    def test_config_file_precedence(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"eps": 0.3, "fi_floor": 5.0}))
        # config supplies eps/fi_floor; flag overrides eps
        code = main([
            "gap", "--config", str(cfg), "--eps", "0.6", "--no-plot",
            "--out-dir", str(tmp_path),
        ])
        assert code == EXIT_OK
        cols = read_csv_columns(os.path.join(only_run_dir(tmp_path, "gap"), "gap.csv"))
        assert cols["eps"][0] == 0.6  # flag wins
        assert cols["fi_floor"][0] == 5.0  # config beats default

    def test_unknown_config_key_rejected(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"epsilon": 0.3}))
        assert main(["gap", "--config", str(cfg), "--out-dir", str(tmp_path)]) == EXIT_USAGE

    def test_no_plot_suppresses_svg(self, tmp_path):
        run_cli(tmp_path, "gap", "--eps", "0.5", "--fi-floor", "10", "--no-plot")
        run_dir = only_run_dir(tmp_path, "gap")
        assert not any(name.endswith(".svg") for name in os.listdir(run_dir))

    def test_plots_regenerate_from_csv_alone(self, tmp_path):
        run_cli(tmp_path, "gap", "--eps", "0.5", "--fi-floor", "10")
        run_dir = only_run_dir(tmp_path, "gap")
        svg = os.path.join(run_dir, "plot.svg")
        assert os.path.getsize(svg) > 0
        replot = tmp_path / "replot.svg"
        plot_csv(os.path.join(run_dir, "density.csv"), replot, "x",
                 ["nu", "rho_unnormalized"], title="spiked density vs N(0,1)")
        assert replot.read_bytes() == open(svg, "rb").read()

    def test_threads_env_respected(self, tmp_path, monkeypatch):
        monkeypatch.setenv("FPLAB_THREADS", "2")
        code = run_cli(
            tmp_path, "counterexample", "--t-points", "4", "--t-max", "0.5",
            "--gh-order", "64", "--grid-step", "4e-3", "--no-plot",
        )
        assert code == EXIT_OK
        monkeypatch.setenv("FPLAB_THREADS", "zebra")
        code = run_cli(
            tmp_path, "counterexample", "--t-points", "4", "--t-max", "0.5",
            "--gh-order", "64", "--grid-step", "4e-3", "--no-plot",
        )
        assert code == EXIT_USAGE
