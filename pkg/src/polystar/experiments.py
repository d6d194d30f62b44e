"""Experiment orchestration: single runs, delta sweeps, gamma sweeps,
and the property-check battery behind the `check` subcommand.

A run freezes its time step at t = 0 (the state stays small up to the
escape threshold, so the CFL bound at equilibrium keeps its margin) and
records the energy series every record_every steps.  Paired linear and
nonlinear runs therefore share grids, steps, and sample times exactly.
"""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import energetics, evolution, polytrope, spectral
from .config import ExperimentConfig, config_hash
from .errors import PolystarError, RateUnavailable, StatePastVacuumCollapse
from .io_utils import write_csv, write_json


@dataclass(eq=False)
class RunRecord:
    """Time series and snapshots of one evolution run."""

    config_hash: str
    gamma: float
    n_nodes: int
    dt: float
    mu0: float
    linear: bool
    profile: polytrope.LaneEmdenProfile = field(repr=False)
    times: list = field(default_factory=list)
    E0: list = field(default_factory=list)
    H: list = field(default_factory=list)
    sup_zeta: list = field(default_factory=list)
    sup_zeta_r: list = field(default_factory=list)
    boundary_radius: list = field(default_factory=list)
    exceeded: list = field(default_factory=list)
    snapshot_times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    status: str = "running"

    @property
    def grid_signature(self) -> str:
        return hashlib.sha256(self.profile.grid.tobytes()).hexdigest()[:16]

    def series_rows(self):
        for i, t in enumerate(self.times):
            yield (
                t,
                self.E0[i],
                math.sqrt(self.E0[i]),
                self.H[i],
                self.boundary_radius[i],
                self.sup_zeta[i],
                self.sup_zeta_r[i],
                int(self.exceeded[i]),
            )


SERIES_HEADER = [
    "t",
    "E0",
    "sqrtE0",
    "H",
    "boundary_radius",
    "sup_zeta",
    "sup_zeta_r",
    "exceeded",
]


def build_profile(cfg: ExperimentConfig, gamma: float | None = None):
    p = cfg.polytrope
    pc = polytrope.PolytropeConfig(
        gamma=gamma if gamma is not None else p.gamma,
        K=p.K,
        ode_rel_tol=p.ode_rel_tol,
        ode_abs_tol=p.ode_abs_tol,
        series_radius=p.series_radius,
        r_max=p.r_max,
    )
    return polytrope.solve_lane_emden(pc, n_nodes=cfg.mesh.n_nodes, grading=cfg.mesh.grading)


def build_mode(profile, eig_tol: float):
    pencil = spectral.assemble_pencil(profile)
    return pencil, spectral.largest_eigenpair(pencil, eig_tol=eig_tol)


def evolve_run(
    profile,
    initial: evolution.PerturbationState,
    cfg: ExperimentConfig,
    mu0: float,
    linear: bool = False,
    stop_amplitude: float | None = None,
    t_end: float | None = None,
    dt: float | None = None,
    max_steps: int = 5_000_000,
) -> RunRecord:
    """March the state with RK4 at a frozen dt, recording the series.

    Stops when sqrt(E0) reaches stop_amplitude (status escaped), when the
    smallness monitor trips theta1 (smallness_exceeded), on collapse, or
    at t_end (completed).
    """
    sim = cfg.sim
    sim_cfg = evolution.SimConfig(
        dt_cfl=sim.dt_cfl,
        t_end=t_end if t_end is not None else sim.t_end,
        record_every=sim.record_every,
        theta1=sim.theta1,
        amplitude_floor=sim.amplitude_floor,
        linear=linear,
        snapshot_every=sim.snapshot_every,
    )
    if dt is None:
        dt = evolution.cfl_dt(initial, profile, sim_cfg)
    sim_cfg = evolution.SimConfig(
        dt_cfl=sim.dt_cfl,
        t_end=sim_cfg.t_end,
        record_every=sim.record_every,
        theta1=sim.theta1,
        amplitude_floor=sim.amplitude_floor,
        linear=linear,
        dt=dt,
        snapshot_every=sim.snapshot_every,
    )

    rec = RunRecord(
        config_hash=config_hash(cfg),
        gamma=profile.gamma,
        n_nodes=profile.n_nodes,
        dt=dt,
        mu0=mu0,
        linear=linear,
        profile=profile,
    )
    R = profile.R

    def record(state, force_snapshot=False):
        e0 = energetics.zero_norm(state.zeta, state.zeta_t, profile) ** 2
        mon = evolution.smallness_monitor(state, profile, sim_cfg)
        rec.times.append(state.t)
        rec.E0.append(e0)
        rec.H.append(evolution.conserved_energy(state, profile))
        rec.sup_zeta.append(mon.sup_zeta)
        rec.sup_zeta_r.append(mon.sup_zeta_r)
        rec.boundary_radius.append((1.0 + state.zeta[-1]) * R)
        rec.exceeded.append(mon.exceeded)
        if force_snapshot or (
            sim_cfg.snapshot_every
            and (len(rec.times) - 1) % sim_cfg.snapshot_every == 0
        ):
            rec.snapshot_times.append(state.t)
            rec.snapshots.append((state.zeta.copy(), state.zeta_t.copy()))
        return e0, mon

    state = initial
    record(state, force_snapshot=True)
    steps = 0
    try:
        while steps < max_steps and state.t < sim_cfg.t_end - 1e-12:
            state = evolution.step(state, profile, sim_cfg)
            steps += 1
            if steps % sim_cfg.record_every:
                continue
            e0, mon = record(state)
            if mon.exceeded:
                rec.status = "smallness_exceeded"
                return rec
            if stop_amplitude is not None and math.sqrt(e0) >= stop_amplitude:
                rec.status = "escaped"
                return rec
        rec.status = "completed"
    except StatePastVacuumCollapse:
        rec.status = "collapsed"
    return rec


def run_instability_experiment(cfg: ExperimentConfig, delta: float | None = None) -> dict:
    """Growing-mode seeded nonlinear run with growth fit; optionally a
    paired linear run feeding the perturbation-remainder series.

    The run continues past the theta0 crossing up to 2*theta0, where the
    linear-envelope prediction ln(2 theta0/delta)/sqrt(mu0) applies.
    """
    exp = cfg.experiment
    delta = exp.delta if delta is None else delta
    theta0 = exp.theta0
    if not 1.2 < cfg.polytrope.gamma < 4.0 / 3.0:
        raise RateUnavailable(
            f"gamma={cfg.polytrope.gamma} outside the unstable range (6/5, 4/3)"
        )
    if delta >= theta0:
        raise PolystarError(
            f"delta={delta} must be well below theta0={theta0} (linear window empty)"
        )
    profile = build_profile(cfg)
    _, mode = build_mode(profile, cfg.eig.eig_tol)
    if mode.mu0 <= 0:
        raise RateUnavailable(f"largest eigenvalue {mode.mu0} is not positive")

    initial = evolution.mode_initial_state(mode, delta)
    record = evolve_run(
        profile,
        initial,
        cfg,
        mu0=mode.mu0,
        linear=False,
        stop_amplitude=2.0 * theta0,
    )
    fit = energetics.growth_fit(record, delta, theta0)
    out = {"record": record, "fit": fit, "mode": mode, "profile": profile, "delta": delta}

    if exp.pair_linear:
        linear_record = evolve_run(
            profile,
            evolution.mode_initial_state(mode, delta),
            cfg,
            mu0=mode.mu0,
            linear=True,
            stop_amplitude=2.0 * theta0,
            dt=record.dt,
        )
        out["linear_record"] = linear_record
        out["remainder"] = energetics.duhamel_remainder(record, linear_record, delta)
    return out


def sweep(cfg: ExperimentConfig) -> list:
    """One row per gamma: eigenvalue, rate, and (when unstable) the
    fitted growth rate and escape diagnostics.  Rows never abort their
    siblings; failures land in the status column."""
    rows = []
    for gamma in sorted(cfg.experiment.gammas):
        row = {
            "gamma": gamma,
            "mu0": float("nan"),
            "sqrt_mu0": float("nan"),
            "fitted_rate": float("nan"),
            "escape_time": float("nan"),
            "predicted_escape": float("nan"),
            "escape_ratio": float("nan"),
            "status": "ok",
        }
        try:
            profile = build_profile(cfg, gamma=gamma)
            _, mode = build_mode(profile, cfg.eig.eig_tol)
            row["mu0"] = mode.mu0
            marginal = abs(mode.mu0) <= 10.0 * profile.n_nodes ** -2.0
            if mode.mu0 > 0 and not marginal:
                row["sqrt_mu0"] = mode.rate
                delta = cfg.experiment.delta
                initial = evolution.mode_initial_state(mode, delta)
                rec = evolve_run(
                    profile,
                    initial,
                    cfg,
                    mu0=mode.mu0,
                    stop_amplitude=2.0 * cfg.experiment.theta0,
                )
                fit = energetics.growth_fit(rec, delta, cfg.experiment.theta0)
                row["fitted_rate"] = fit.rate
                if fit.escape_time_double is not None:
                    row["escape_time"] = fit.escape_time_double
                    row["predicted_escape"] = fit.predicted_escape
                    row["escape_ratio"] = fit.escape_time_double / fit.predicted_escape
                row["status"] = rec.status
            elif marginal:
                row["status"] = "marginal"
            else:
                row["status"] = "stable"
        except PolystarError as exc:
            row["status"] = f"error:{type(exc).__name__}"
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# Property-check battery
# ---------------------------------------------------------------------------


def _seeded_trials(rng, r: np.ndarray, n: int, degree: int = 6) -> np.ndarray:
    """Smooth seeded trial functions: Chebyshev series in 2r/R - 1 with
    decaying coefficients."""
    x = 2.0 * r / r[-1] - 1.0
    decay = 0.5 ** np.arange(degree + 1)
    coeffs = rng.standard_normal((n, degree + 1)) * decay
    return np.polynomial.chebyshev.chebval(x, coeffs.T)


def check(cfg: ExperimentConfig) -> dict:
    """Run the full property battery and report measured values.

    Refinement-based checks are marked skipped below 256 nodes, where a
    doubled mesh would not be meaningfully finer.
    """
    results = []
    rng = np.random.default_rng(cfg.experiment.seed)

    def add(name, status, value=None, threshold=None, note=None):
        results.append(
            {
                "name": name,
                "status": status,
                "value": value,
                "threshold": threshold,
                "note": note,
            }
        )

    n_nodes = max(cfg.mesh.n_nodes, 64)
    refinement_ok = cfg.mesh.n_nodes >= 256

    from dataclasses import replace as dc_replace

    work_cfg = dc_replace(cfg, mesh=dc_replace(cfg.mesh, n_nodes=n_nodes))
    profile = build_profile(work_cfg)

    res = polytrope.substitution_residual(profile)
    add("profile_residual", "pass" if res <= 1e-6 else "fail", res, 1e-6)

    try:
        polytrope.validate_profile(profile)
        add("profile_invariants", "pass")
    except Exception as exc:
        add("profile_invariants", "fail", note=str(exc))

    import dataclasses as _dc

    corrupted = _dc.replace(profile, w_r=-profile.w_r)
    try:
        polytrope.validate_profile(corrupted)
        add("fault_injection_nonmonotone", "fail", note="corrupted profile accepted")
    except PolystarError:
        add("fault_injection_nonmonotone", "pass")

    idx = np.linspace(8, profile.n_nodes - 8, 9).astype(int)
    rel = max(
        abs(polytrope.potential_coefficient(profile, float(profile.grid[j])) - profile.phi[j])
        / profile.phi[j]
        for j in idx
    )
    add("phi_identity", "pass" if rel <= 1e-6 else "fail", float(rel), 1e-6)

    if refinement_ok:
        p = polytrope.vacuum_exponent(profile)
        add("vacuum_exponent", "pass" if 0.99 <= p <= 1.01 else "fail", p, (0.99, 1.01))
    else:
        add("vacuum_exponent", "skipped", note="n_nodes below refinement threshold")

    ee = polytrope.equilibrium_energy(profile)
    add("energy_identity", "pass" if ee.rel_diff <= 1e-4 else "fail", ee.rel_diff, 1e-4)

    if refinement_ok:
        fine = build_profile(
            dc_replace(work_cfg, mesh=dc_replace(work_cfg.mesh, n_nodes=2 * n_nodes))
        )
        dR = abs(fine.R - profile.R)
        add("radius_convergence", "pass" if dR <= 1e-10 * profile.R else "fail", dR)
    else:
        add("radius_convergence", "skipped", note="n_nodes below refinement threshold")

    pencil, mode = build_mode(profile, work_cfg.eig.eig_tol)
    u = rng.standard_normal(pencil.n_interior)
    v = rng.standard_normal(pencil.n_interior)
    sym = abs(pencil.bilinear(u, v) - pencil.bilinear(v, u))
    add("pencil_symmetry", "pass" if sym == 0.0 else "fail", sym, 0.0)

    trials = _seeded_trials(rng, pencil.grid, 100)
    worst = max(spectral.rayleigh_quotient(pencil, trial) for trial in trials)
    dom = worst <= mode.mu0 + work_cfg.eig.eig_tol
    add("rayleigh_dominance", "pass" if dom else "fail", worst, mode.mu0)

    q1 = spectral.rayleigh_quotient(pencil, np.ones(pencil.n_interior))
    add(
        "constant_trial_lower_bound",
        "pass" if mode.mu0 >= q1 - work_cfg.eig.eig_tol else "fail",
        q1,
        mode.mu0,
    )

    eq = evolution.equilibrium_state(profile)
    sim_cfg = evolution.SimConfig(dt_cfl=cfg.sim.dt_cfl, theta1=cfg.sim.theta1)
    state = eq
    dt = evolution.cfl_dt(eq, profile, sim_cfg)
    sim_fixed = evolution.SimConfig(dt_cfl=cfg.sim.dt_cfl, theta1=cfg.sim.theta1, dt=dt)
    for _ in range(200):
        state = evolution.step(state, profile, sim_fixed)
    still = float(np.abs(state.zeta).max() + np.abs(state.zeta_t).max())
    add("equilibrium_preservation", "pass" if still == 0.0 else "fail", still, 0.0)

    drift = _generic_drift(profile, cfg, rng)
    add("conservation_drift", "pass" if drift <= 1e-6 else "fail", drift, 1e-6)

    ratios_o = []
    ratios_b = []
    for i in range(20):
        coeffs = rng.standard_normal(9) * 0.5 ** np.arange(9)
        poly = np.polynomial.Polynomial(coeffs)
        v = poly(profile.grid / profile.R)
        v_r = poly.deriv()(profile.grid / profile.R) / profile.R
        ratios_o.append(energetics.hardy_check_origin(v, profile, v_r).ratio)
        vanishing = v * (1.0 - profile.grid / profile.R)
        van_r = v_r * (1.0 - profile.grid / profile.R) - v / profile.R
        ratios_b.append(
            energetics.hardy_check_boundary(
                vanishing, profile, a=profile.alpha, v_r=van_r
            ).ratio
        )
    fin = all(np.isfinite(ratios_o)) and all(np.isfinite(ratios_b))
    add(
        "hardy_families_finite",
        "pass" if fin else "fail",
        {"origin_max": float(max(ratios_o)), "boundary_max": float(max(ratios_b))},
    )
    hardy_rows = [
        (
            "origin",
            float(max(ratios_o)),
            float(np.mean(ratios_o)),
            len(ratios_o),
        ),
        (
            "boundary",
            float(max(ratios_b)),
            float(np.mean(ratios_b)),
            len(ratios_b),
        ),
    ]

    add("eigen_residual", "pass" if mode.residual <= 1e-6 else "fail", mode.residual, 1e-6)

    # nonlinear/instant energy equivalence: one finite fitted constant
    if mode.mu0 > 0:
        st = evolution.mode_initial_state(mode, 1e-3)
        rep = energetics.instant_energy(st, profile, jmax=1)
        theta = max(rep.theta_measure.values())
        gap_const = abs(rep.frakE[0] - rep.Ej[0]) / (theta * (rep.E0 + rep.Ej[0]))
        total = rep.E0 + sum(x for row in rep.Ejk for x in row)
        inclusion = rep.E0 + sum(rep.Ej) <= total
        ok = np.isfinite(gap_const) and inclusion
        add("energy_equivalence_constant", "pass" if ok else "fail", gap_const)
    else:
        add("energy_equivalence_constant", "skipped", note="no growing mode at this gamma")

    report = {
        "schema_version": 1,
        "config_hash": config_hash(cfg),
        "n_nodes": n_nodes,
        "checks": results,
        "hardy_families": hardy_rows,
        "all_mandatory_pass": all(c["status"] in ("pass", "skipped") for c in results),
    }
    return report


def emit_check(report: dict, out_dir: str) -> None:
    payload = {k: v for k, v in report.items() if k != "hardy_families"}
    write_json(os.path.join(out_dir, "check.json"), payload)
    write_csv(
        os.path.join(out_dir, "hardy.csv"),
        ["family", "ratio_max", "ratio_mean", "n_samples"],
        report["hardy_families"],
    )


def _generic_drift(profile, cfg: ExperimentConfig, rng) -> float:
    """Relative drift of the conserved energy for generic smooth data."""
    r = profile.grid
    x = 2.0 * r / r[-1] - 1.0
    decay = 0.5 ** np.arange(5)
    z0 = 1e-3 * np.polynomial.chebyshev.chebval(x, rng.standard_normal(5) * decay)
    zt0 = 1e-3 * np.polynomial.chebyshev.chebval(x, rng.standard_normal(5) * decay)
    state = evolution.PerturbationState(t=0.0, zeta=z0, zeta_t=zt0)
    sim_cfg = evolution.SimConfig(dt_cfl=cfg.sim.dt_cfl, theta1=cfg.sim.theta1)
    dt = evolution.cfl_dt(state, profile, sim_cfg)
    sim_fixed = evolution.SimConfig(
        dt_cfl=cfg.sim.dt_cfl, theta1=cfg.sim.theta1, dt=dt
    )
    H0 = evolution.conserved_energy(state, profile)
    drift = 0.0
    nsteps = int(round(3.0 / dt))
    for i in range(nsteps):
        state = evolution.step(state, profile, sim_fixed)
        if (i + 1) % 16 == 0:
            drift = max(drift, abs(evolution.conserved_energy(state, profile) - H0))
    return drift / abs(H0)


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------


def emit_profile(profile, cfg: ExperimentConfig, out_dir: str) -> None:
    rows = zip(profile.grid, profile.w, profile.w_r, profile.phi)
    write_csv(os.path.join(out_dir, "profile.csv"), ["r", "w", "w_r", "phi"], rows)
    write_json(
        os.path.join(out_dir, "profile.json"),
        {
            "schema_version": 1,
            "config_hash": config_hash(cfg),
            "gamma": profile.gamma,
            "alpha": profile.alpha,
            "K": profile.K,
            "c_frak": profile.c_frak,
            "R": profile.R,
            "mass": profile.mass,
            "vacuum_exponent": polytrope.vacuum_exponent(profile),
        },
    )


def emit_mode(mode, profile, cfg: ExperimentConfig, out_dir: str) -> None:
    write_csv(
        os.path.join(out_dir, "mode.csv"),
        ["r", "phi0"],
        zip(profile.grid, mode.phi0),
    )
    write_json(
        os.path.join(out_dir, "mode.json"),
        {
            "schema_version": 1,
            "config_hash": config_hash(cfg),
            "gamma": profile.gamma,
            "mu0": mode.mu0,
            "rate": mode.rate,
            "residual": mode.residual,
            "norm_X": mode.norm_X,
            "norm_Y": mode.norm_Y,
        },
    )


def emit_run(record: RunRecord, cfg: ExperimentConfig, out_dir: str, tag: str = "") -> None:
    prefix = f"{tag}_" if tag else ""
    write_csv(
        os.path.join(out_dir, f"{prefix}series.csv"), SERIES_HEADER, record.series_rows()
    )
    for i, (ts, (z, zt)) in enumerate(zip(record.snapshot_times, record.snapshots)):
        write_csv(
            os.path.join(out_dir, f"{prefix}snapshot_{i:05d}.csv"),
            ["r", "zeta", "zeta_t"],
            zip(record.profile.grid, z, zt),
        )
    write_json(
        os.path.join(out_dir, f"{prefix}run.json"),
        {
            "schema_version": 1,
            "config_hash": record.config_hash,
            "gamma": record.gamma,
            "n_nodes": record.n_nodes,
            "dt": record.dt,
            "mu0": record.mu0,
            "linear": record.linear,
            "status": record.status,
            "n_samples": len(record.times),
            "snapshot_times": list(record.snapshot_times),
        },
    )


def emit_fit(fit, cfg: ExperimentConfig, out_dir: str, tag: str = "") -> None:
    prefix = f"{tag}_" if tag else ""
    write_json(
        os.path.join(out_dir, f"{prefix}fit.json"),
        {
            "schema_version": 1,
            "config_hash": config_hash(cfg),
            "rate": fit.rate,
            "window": list(fit.window),
            "r_squared": fit.r_squared,
            "escape_time": fit.escape_time,
            "escape_time_double": fit.escape_time_double,
            "predicted_escape": fit.predicted_escape,
        },
    )


def emit_remainder(remainder: dict, out_dir: str, tag: str = "") -> None:
    prefix = f"{tag}_" if tag else ""
    write_csv(
        os.path.join(out_dir, f"{prefix}remainder.csv"),
        ["t", "remainder", "ratio"],
        zip(remainder["t"], remainder["remainder"], remainder["ratio"]),
    )


def emit_instability_summary(results: list, cfg: ExperimentConfig, out_dir: str) -> None:
    """Side-by-side ladder summary: fitted rates, escape times, and the
    spacing between successive escapes against ln(ratio)/rate."""
    entries = []
    for res in results:
        fit = res["fit"]
        entries.append(
            {
                "delta": res["delta"],
                "status": res["record"].status,
                "mu0": res["mode"].mu0,
                "linear_rate": res["mode"].rate,
                "fitted_rate": fit.rate,
                "escape_time": fit.escape_time,
                "escape_time_double": fit.escape_time_double,
                "predicted_escape": fit.predicted_escape,
            }
        )
    steps = []
    for a, b in zip(entries, entries[1:]):
        if a["escape_time"] is not None and b["escape_time"] is not None:
            rate = b["linear_rate"]
            steps.append(
                {
                    "delta_from": a["delta"],
                    "delta_to": b["delta"],
                    "escape_step": b["escape_time"] - a["escape_time"],
                    "predicted_step": math.log(a["delta"] / b["delta"]) / rate
                    if rate > 0
                    else None,
                }
            )
    write_json(
        os.path.join(out_dir, "instability_summary.json"),
        {
            "schema_version": 1,
            "config_hash": config_hash(cfg),
            "runs": entries,
            "escape_steps": steps,
        },
    )


def emit_energy_report(report, cfg: ExperimentConfig, out_dir: str) -> None:
    write_json(
        os.path.join(out_dir, "energies.json"),
        {
            "schema_version": 1,
            "config_hash": config_hash(cfg),
            "E0": report.E0,
            "Ej": report.Ej,
            "Ejk": report.Ejk,
            "frakE": report.frakE,
            "theta_measure": report.theta_measure,
        },
    )


def emit_sweep(rows: list, cfg: ExperimentConfig, out_dir: str) -> None:
    write_csv(
        os.path.join(out_dir, "sweep.csv"),
        [
            "gamma",
            "mu0",
            "sqrt_mu0",
            "fitted_rate",
            "escape_time",
            "predicted_escape",
            "escape_ratio",
            "status",
        ],
        (
            (
                row["gamma"],
                row["mu0"],
                row["sqrt_mu0"],
                row["fitted_rate"],
                row["escape_time"],
                row["predicted_escape"],
                row["escape_ratio"],
                row["status"],
            )
            for row in rows
        ),
    )
