"""Experiment driver: slope fitter, configs, sweep reports, check suite, CLI."""

import json

import numpy as np
import pytest

from perihom.cell import cell_pipeline
from perihom.cli import main as cli_main
from perihom.coefficients import CoefficientFamily, make_family
from perihom.errors import BadParameters
from perihom.harness import (
    ExperimentConfig,
    FMode,
    build_f,
    fit_loglog,
    lambda0_diagnostic,
    run_check,
    run_converge,
)
from perihom.spectral import GridSpec


def _d1_config(**overrides):
    base = dict(
        family=CoefficientFamily("d1_profile", (2.0, 1.0)),
        dim=1,
        cell_points=32,
        eps_list=(1 / 4, 1 / 8, 1 / 16),
        f_modes=(FMode((1,), 1.0, 0.3), FMode((2,), 0.5, 1.0)),
        f_mean=0.2,
        tol=1e-11,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestSlopeFit:
    def test_exact_power_law(self):
        eps = np.array([1 / 4, 1 / 8, 1 / 16, 1 / 32])
        for p in (1.0, 2.0, 3.17):
            errs = 2.3 * eps**p
            slope, rms = fit_loglog(eps, errs)
            assert slope == pytest.approx(p, abs=1e-10)
            assert rms < 1e-12


class TestBuildF:
    def test_nodal_values(self):
        g = GridSpec(2, 16)
        f = build_f(g, (FMode((1, 2), 0.7, 0.4),), mean=0.1)
        x, y = g.nodes()
        ref = 0.1 + 0.7 * np.cos(2 * np.pi * (x + 2 * y) + 0.4)
        assert np.max(np.abs(f.values - ref)) < 1e-13

    def test_unresolved_mode_rejected(self):
        g = GridSpec(1, 8)
        with pytest.raises(BadParameters):
            build_f(g, (FMode((5,), 1.0, 0.0),))


class TestConfig:
    def test_validate_accepts_good(self):
        _d1_config().validate()

    def test_rejects_bad_eps(self):
        with pytest.raises(BadParameters):
            _d1_config(eps_list=(0.3,)).validate()
        with pytest.raises(BadParameters):
            _d1_config(eps_list=(0.25, 0.25)).validate()
        with pytest.raises(BadParameters):
            _d1_config(eps_list=(0.6,)).validate()

    def test_rejects_non_power_of_two_cell(self):
        with pytest.raises(BadParameters):
            _d1_config(cell_points=24).validate()

    def test_rejects_unknown_approximant(self):
        with pytest.raises(BadParameters):
            _d1_config(approximants=("u_hat", "bogus")).validate()

    def test_json_roundtrip(self, tmp_path):
        cfg = _d1_config(out_dir=str(tmp_path / "o"))
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(cfg.to_dict()))
        back = ExperimentConfig.from_json(p)
        assert back == cfg


@pytest.fixture(scope="module")
def report(tmp_path_factory):
    out = tmp_path_factory.mktemp("conv")
    cfg = _d1_config(out_dir=str(out))
    return run_converge(cfg), out


class TestRunConverge:
    def test_row_count_and_slopes(self, report):
        rep, _ = report
        assert len(rep.rows) == 3
        assert set(rep.slopes) == {
            "err_l2_u_hat",
            "err_h2_u_tilde",
            "err_l2_w",
            "res_hminus2",
        }
        assert rep.slopes["err_l2_u_hat"]["slope"] >= 1.7

    def test_outputs_written(self, report):
        rep, out = report
        assert (out / "converge.csv").exists()
        assert (out / "converge.json").exists()
        assert (out / "curve_err_l2_w.dat").exists()
        lines = (out / "converge.csv").read_text().strip().splitlines()
        assert lines[0].startswith("eps,n,")
        assert len(lines) == 4

    def test_deterministic_rerun(self, report):
        rep, _ = report
        cfg = _d1_config()
        again = run_converge(cfg)
        assert again.to_csv() == run_converge(cfg).to_csv()
        for r1, r2 in zip(rep.rows, again.rows):
            for key in r1.errors:
                assert r1.errors[key] == r2.errors[key]

    def test_constant_family_columns_at_roundoff(self):
        cfg = ExperimentConfig(
            family=CoefficientFamily("constant"),
            dim=1,
            cell_points=16,
            eps_list=(1 / 4, 1 / 8, 1 / 16),
            f_modes=(FMode((1,), 1.0, 0.0),),
            tol=1e-12,
        )
        rep = run_converge(cfg)
        for row in rep.rows:
            assert row.errors["err_l2_u_hat"] <= 1e-9
            assert row.errors["err_l2_w"] <= 1e-9
            assert row.errors["err_h2_u_tilde"] >= 1e-6  # smoothing defect remains
        assert rep.lambda0 == 0.0

    def test_selective_approximants(self):
        cfg = _d1_config(approximants=("u_hat",), eps_list=(1 / 4, 1 / 8))
        rep = run_converge(cfg)
        assert set(rep.rows[0].errors) == {"err_l2_u_hat"}
        assert rep.slopes == {}  # fewer than 3 eps values

    def test_stress_flag_runs(self):
        cfg = _d1_config(eps_list=(1 / 4, 1 / 8), stress_high_freq=True)
        rep = run_converge(cfg)
        assert len(rep.rows) == 2


class TestLambda0Diagnostic:
    def test_constant_is_zero(self):
        g = GridSpec(2, 8)
        a = make_family(CoefficientFamily("constant"), g)
        cell = cell_pipeline(a, tol=1e-10)
        assert lambda0_diagnostic(cell) == 0.0

    def test_reported_small_for_symmetric_family(self, d2_cell):
        # diagnostic only (the harness never asserts it against zero); for
        # pair-symmetric coefficients it comes out at solver-noise level
        _, cell = d2_cell
        v1 = lambda0_diagnostic(cell, seed=3)
        assert np.isfinite(v1)
        assert v1 < 1e-10


class TestRunCheck:
    def test_passes_with_default_seed(self):
        status, results = run_check(seed=0, trials=6)
        assert status == 0
        assert all(r.passed for r in results)
        ids = {r.check_id for r in results}
        assert "potential-divergence-identity" in ids
        assert "corrector-adjoint-identity" in ids

    def test_zero_trials_is_usage_error(self):
        with pytest.raises(ValueError):
            run_check(trials=0)


class TestCLI:
    def test_kernels(self, capsys):
        assert cli_main(["kernels"]) == 0
        out = capsys.readouterr().out
        assert "0.125" in out

    def test_check_exit_zero(self, capsys):
        assert cli_main(["check", "--trials", "4", "--seed", "5"]) == 0
        assert "overall: pass" in capsys.readouterr().out

    def test_check_trials_usage_error(self):
        assert cli_main(["check", "--trials", "0"]) == 2

    def test_converge_from_config(self, tmp_path, capsys):
        cfg = _d1_config(eps_list=(1 / 4, 1 / 8, 1 / 16))
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(cfg.to_dict()))
        rc = cli_main(
            ["converge", "--config", str(p), "--out", str(tmp_path / "out")]
        )
        assert rc == 0
        out = capsys.readouterr().out
        assert "slope[err_l2_w]" in out
        assert (tmp_path / "out" / "converge.csv").exists()

    def test_cell_and_solve(self, tmp_path, capsys):
        cfg = _d1_config()
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(cfg.to_dict()))
        assert cli_main(["cell", "--config", str(p), "--out", str(tmp_path / "o")]) == 0
        assert (tmp_path / "o" / "cell.json").exists()
        assert cli_main(
            ["solve", "--config", str(p), "--out", str(tmp_path / "o"), "--eps", "0.125"]
        ) == 0
        assert (tmp_path / "o" / "bundle_n8.json").exists()

    def test_solve_bad_eps(self, tmp_path, capsys):
        cfg = _d1_config()
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(cfg.to_dict()))
        assert cli_main(["solve", "--config", str(p), "--eps", "0.3"]) == 2
