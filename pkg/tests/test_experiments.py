"""Configuration, orchestration, CLI surface, and emission tests."""

import dataclasses
import json
import os

import numpy as np
import pytest

import polystar as ps
from polystar.cli import main as cli_main
from polystar.config import (
    ExperimentConfig,
    canonical_json,
    config_from_dict,
    config_hash,
    config_to_dict,
)
from polystar.errors import ConfigError, RateUnavailable

from conftest import make_config


def test_config_defaults_roundtrip():
    cfg = ExperimentConfig()
    cfg.validate()
    again = config_from_dict(config_to_dict(cfg))
    assert canonical_json(again) == canonical_json(cfg)
    assert config_hash(again) == config_hash(cfg)


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        config_from_dict({"mesh": {"n_nodes": 128, "bogus": 1}})
    with pytest.raises(ConfigError):
        config_from_dict({"unknown_section": {}})


def test_config_rejects_bad_values():
    with pytest.raises(ConfigError):
        config_from_dict({"polytrope": {"gamma": 1.1}})
    with pytest.raises(ConfigError):
        config_from_dict({"experiment": {"deltas": [1e-5, 1e-3]}})
    with pytest.raises(ConfigError):
        config_from_dict({"experiment": {"gammas": [2.5]}})
    with pytest.raises(ConfigError):
        config_from_dict({"experiment": {"kind": "explode"}})
    with pytest.raises(ConfigError):
        config_from_dict({"schema_version": 99})


def test_rate_unavailable_on_stable_side():
    cfg = make_config(n_nodes=256, gamma=1.4, kind="instability")
    with pytest.raises(RateUnavailable):
        ps.run_instability_experiment(cfg)


def test_delta_must_be_below_threshold():
    cfg = make_config(n_nodes=256, kind="instability", theta0=1e-2)
    with pytest.raises(ps.PolystarError):
        ps.run_instability_experiment(cfg, delta=2e-2)


def test_instability_quick_run(insta13):
    out = insta13[1e-3]
    rec, fit, mode = out["record"], out["fit"], out["mode"]
    assert rec.status == "escaped"
    assert abs(fit.rate - mode.rate) <= 0.02 * mode.rate
    assert fit.escape_time is not None
    assert fit.escape_time_double is not None
    assert np.all(np.diff(rec.times) > 0)


def test_record_status_consistency(insta13):
    rec = insta13[1e-3]["record"]
    assert rec.status == "escaped"
    # escaped implies the last recorded amplitude reached 2*theta0
    assert np.sqrt(rec.E0[-1]) >= 2e-2 * (1 - 1e-12)


def test_sweep_marginal_and_stable_routing():
    cfg = make_config(n_nodes=256, kind="sweep", gammas=(4 / 3, 1.5))
    rows = ps.sweep(cfg)
    by_gamma = {round(r["gamma"], 6): r for r in rows}
    assert by_gamma[round(4 / 3, 6)]["status"] == "marginal"
    assert by_gamma[1.5]["status"] == "stable"
    assert by_gamma[1.5]["mu0"] < 0


def test_sweep_unstable_rows_and_isolation():
    cfg = make_config(n_nodes=256, kind="sweep", gammas=(1.25, 1.30, 1.32), delta=1e-3)
    broken = dataclasses.replace(
        cfg, polytrope=dataclasses.replace(cfg.polytrope, r_max=10.0)
    )
    rows = ps.sweep(broken)
    by_gamma = {round(r["gamma"], 3): r for r in rows}
    # gamma = 1.25 has R ~ 15 > r_max: the row fails alone
    assert by_gamma[1.25]["status"].startswith("error:")
    for g in (1.30, 1.32):
        assert by_gamma[g]["status"] == "escaped"
        assert by_gamma[g]["mu0"] > 0
    mus = [by_gamma[g]["mu0"] for g in (1.30, 1.32)]
    assert mus[0] > mus[1]


def test_run_status_smallness_exceeded():
    cfg = make_config(n_nodes=256, kind="evolve")
    import dataclasses

    tight = dataclasses.replace(cfg, sim=dataclasses.replace(cfg.sim, theta1=1e-5))
    profile = ps.build_profile(tight)
    _, mode = ps.build_mode(profile, tight.eig.eig_tol)
    rec = ps.evolve_run(
        profile,
        ps.mode_initial_state(mode, 1e-3),
        tight,
        mu0=mode.mu0,
        t_end=50.0,
    )
    assert rec.status == "smallness_exceeded"


def test_run_status_collapsed():
    cfg = make_config(n_nodes=256, kind="evolve")
    import dataclasses

    loose = dataclasses.replace(cfg, sim=dataclasses.replace(cfg.sim, theta1=1e9))
    profile = ps.build_profile(loose)
    _, mode = ps.build_mode(profile, loose.eig.eig_tol)
    # strong inward velocity drives J through zero within a fraction of a
    # sound-crossing time; the run must stop with a structured status
    initial = ps.PerturbationState(
        t=0.0, zeta=np.zeros(profile.n_nodes), zeta_t=-3.0 * mode.phi0
    )
    rec = ps.evolve_run(profile, initial, loose, mu0=mode.mu0, t_end=5.0)
    assert rec.status == "collapsed"


def test_check_battery_passes():
    cfg = make_config(n_nodes=512, kind="check")
    report = ps.check(cfg)
    failed = [c for c in report["checks"] if c["status"] == "fail"]
    assert not failed, failed
    assert report["all_mandatory_pass"]


def test_check_low_resolution_skips():
    cfg = make_config(n_nodes=32, kind="check")
    report = ps.check(cfg)
    status = {c["name"]: c["status"] for c in report["checks"]}
    assert status["radius_convergence"] == "skipped"
    assert status["vacuum_exponent"] == "skipped"
    assert report["all_mandatory_pass"]


# ---------------------------------------------------------------------------
# CLI surface
# ---------------------------------------------------------------------------


def _run_cli(args, tmp_path, monkeypatch, subdir="out"):
    out = tmp_path / subdir
    monkeypatch.setenv("POLYSTAR_OUT", str(out))
    code = cli_main(args)
    return code, out


def test_cli_profile_and_mode_outputs(tmp_path, monkeypatch):
    code, out = _run_cli(["profile", "--nodes", "256"], tmp_path, monkeypatch)
    assert code == 0
    header = (out / "profile.csv").read_text().splitlines()[0]
    assert header == "r,w,w_r,phi"
    side = json.loads((out / "profile.json").read_text())
    for key in ("gamma", "alpha", "K", "c_frak", "R", "mass", "vacuum_exponent"):
        assert key in side
    assert "config_hash" in side and "schema_version" in side

    code, out = _run_cli(["mode", "--nodes", "256"], tmp_path, monkeypatch, "m")
    assert code == 0
    assert (out / "mode.csv").read_text().splitlines()[0] == "r,phi0"
    mj = json.loads((out / "mode.json").read_text())
    for key in ("gamma", "mu0", "rate", "residual", "norm_X", "norm_Y"):
        assert key in mj


def test_cli_float_format_roundtrips(tmp_path, monkeypatch):
    code, out = _run_cli(["profile", "--nodes", "256"], tmp_path, monkeypatch)
    assert code == 0
    line = (out / "profile.csv").read_text().splitlines()[2]
    r_str = line.split(",")[0]
    prof = ps.solve_lane_emden(ps.PolytropeConfig(gamma=1.3), 256)
    assert float(r_str) == prof.grid[1]


def test_cli_deterministic_outputs(tmp_path, monkeypatch):
    _, out1 = _run_cli(["check", "--nodes", "128"], tmp_path, monkeypatch, "a")
    _, out2 = _run_cli(["check", "--nodes", "128"], tmp_path, monkeypatch, "b")
    assert (out1 / "check.json").read_bytes() == (out2 / "check.json").read_bytes()


def test_cli_exit_codes(tmp_path, monkeypatch):
    bad = tmp_path / "bad.json"
    bad.write_text("{\"mesh\": {\"n_nodes\": 4}}")
    code, _ = _run_cli(["profile", "--config", str(bad)], tmp_path, monkeypatch)
    assert code == 2

    code, _ = _run_cli(
        ["instability", "--nodes", "256", "--gamma", "1.4"], tmp_path, monkeypatch
    )
    assert code == 3


def test_cli_instability_emission(tmp_path, monkeypatch):
    code, out = _run_cli(
        ["instability", "--nodes", "256", "--delta", "1e-3"], tmp_path, monkeypatch
    )
    assert code == 0
    files = sorted(os.listdir(out))
    assert any(f.endswith("series.csv") for f in files)
    assert any(f.endswith("fit.json") for f in files)
    assert any(f.endswith("remainder.csv") for f in files)
    series = [f for f in files if f.endswith("series.csv")][0]
    header = (out / series).read_text().splitlines()[0]
    assert header == "t,E0,sqrtE0,H,boundary_radius,sup_zeta,sup_zeta_r,exceeded"
    snap = [f for f in files if "snapshot" in f][0]
    assert (out / snap).read_text().splitlines()[0] == "r,zeta,zeta_t"
    summary = json.loads((out / "instability_summary.json").read_text())
    assert len(summary["runs"]) == 1


def test_cli_instability_ladder_summary(tmp_path, monkeypatch):
    cfgfile = tmp_path / "ladder.json"
    cfgfile.write_text(
        json.dumps(
            {
                "mesh": {"n_nodes": 256},
                "experiment": {
                    "kind": "instability",
                    "deltas": [1e-3, 1e-4],
                    "pair_linear": False,
                },
            }
        )
    )
    code, out = _run_cli(["instability", "--config", str(cfgfile)], tmp_path, monkeypatch)
    assert code == 0
    summary = json.loads((out / "instability_summary.json").read_text())
    assert [r["delta"] for r in summary["runs"]] == [1e-3, 1e-4]
    step = summary["escape_steps"][0]
    assert step["escape_step"] == pytest.approx(step["predicted_step"], rel=0.05)


def test_cli_check_hardy_report(tmp_path, monkeypatch):
    code, out = _run_cli(["check", "--nodes", "128"], tmp_path, monkeypatch)
    assert code == 0
    lines = (out / "hardy.csv").read_text().splitlines()
    assert lines[0] == "family,ratio_max,ratio_mean,n_samples"
    assert {line.split(",")[0] for line in lines[1:]} == {"origin", "boundary"}


def test_cli_evolve_energy_report(tmp_path, monkeypatch):
    cfgfile = tmp_path / "evolve.json"
    cfgfile.write_text(
        json.dumps({"mesh": {"n_nodes": 256}, "sim": {"t_end": 2.0}})
    )
    code, out = _run_cli(
        ["evolve", "--config", str(cfgfile), "--delta", "1e-3"], tmp_path, monkeypatch
    )
    assert code == 0
    rep = json.loads((out / "energies.json").read_text())
    for key in ("E0", "Ej", "Ejk", "frakE", "theta_measure"):
        assert key in rep
    assert len(rep["Ejk"]) == len(rep["Ej"])


def test_cli_sweep_emission(tmp_path, monkeypatch):
    cfgfile = tmp_path / "sweep.json"
    cfgfile.write_text(
        json.dumps(
            {
                "mesh": {"n_nodes": 256},
                "experiment": {"kind": "sweep", "gammas": [1.3, 1.5], "delta": 1e-3},
            }
        )
    )
    code, out = _run_cli(["sweep", "--config", str(cfgfile)], tmp_path, monkeypatch)
    assert code == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0].startswith("gamma,mu0,sqrt_mu0,fitted_rate")
    assert len(lines) == 3
