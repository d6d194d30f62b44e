"""Batch front end.

Subcommands: profile, mode, evolve, instability, sweep, check.  A JSON
config document drives everything; a handful of flags override the most
common keys.  Exit codes: 0 success, 2 config error, 3 numerical
failure, 4 check-suite failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from . import experiments
from .config import ExperimentConfig, config_hash, load_config
from .energetics import instant_energy as energetics_report
from .errors import ConfigError, PolystarError


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="polystar",
        description="Lane-Emden equilibria, growing modes, and nonlinear "
        "instability runs for self-gravitating polytropes.",
    )
    ap.add_argument("command", choices=["profile", "mode", "evolve", "instability", "sweep", "check"])
    ap.add_argument("--config", help="JSON configuration file")
    ap.add_argument("--out", help="output directory (default: $POLYSTAR_OUT or ./out)")
    ap.add_argument("--gamma", type=float, help="override polytrope.gamma")
    ap.add_argument("--delta", type=float, help="override experiment.delta")
    ap.add_argument("--nodes", type=int, help="override mesh.n_nodes")
    ap.add_argument("--seed", type=int, help="override experiment.seed")
    return ap


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if args.gamma is not None:
        cfg = dataclasses.replace(
            cfg, polytrope=dataclasses.replace(cfg.polytrope, gamma=args.gamma)
        )
    if args.delta is not None:
        cfg = dataclasses.replace(
            cfg, experiment=dataclasses.replace(cfg.experiment, delta=args.delta)
        )
    if args.nodes is not None:
        cfg = dataclasses.replace(cfg, mesh=dataclasses.replace(cfg.mesh, n_nodes=args.nodes))
    if args.seed is not None:
        cfg = dataclasses.replace(
            cfg, experiment=dataclasses.replace(cfg.experiment, seed=args.seed)
        )
    out_dir = args.out or os.environ.get("POLYSTAR_OUT") or cfg.output_dir
    cfg = dataclasses.replace(cfg, output_dir=out_dir)
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        cfg = _apply_overrides(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    out = cfg.output_dir
    try:
        if args.command == "profile":
            profile = experiments.build_profile(cfg)
            experiments.emit_profile(profile, cfg, out)
            print(f"profile gamma={profile.gamma} R={profile.R:.12g} -> {out}")

        elif args.command == "mode":
            profile = experiments.build_profile(cfg)
            _, mode = experiments.build_mode(profile, cfg.eig.eig_tol)
            experiments.emit_mode(mode, profile, cfg, out)
            print(f"mode gamma={profile.gamma} mu0={mode.mu0:.12g} rate={mode.rate:.12g} -> {out}")

        elif args.command == "evolve":
            from . import evolution

            profile = experiments.build_profile(cfg)
            _, mode = experiments.build_mode(profile, cfg.eig.eig_tol)
            initial = evolution.mode_initial_state(mode, cfg.experiment.delta)
            record = experiments.evolve_run(
                profile, initial, cfg, mu0=mode.mu0, t_end=cfg.sim.t_end
            )
            experiments.emit_run(record, cfg, out)
            if record.snapshots:
                z, zt = record.snapshots[-1]
                final = evolution.PerturbationState(
                    t=record.snapshot_times[-1], zeta=z, zeta_t=zt
                )
                experiments.emit_energy_report(
                    energetics_report(final, profile, cfg.experiment.jmax), cfg, out
                )
            print(f"evolve status={record.status} samples={len(record.times)} -> {out}")

        elif args.command == "instability":
            deltas = (args.delta,) if args.delta is not None else cfg.experiment.deltas
            results = []
            for delta in deltas:
                result = experiments.run_instability_experiment(cfg, delta=delta)
                tag = f"delta{delta:.0e}"
                experiments.emit_run(result["record"], cfg, out, tag=tag)
                experiments.emit_fit(result["fit"], cfg, out, tag=tag)
                if "remainder" in result:
                    experiments.emit_remainder(result["remainder"], out, tag=tag)
                results.append(result)
                fit = result["fit"]
                print(
                    f"delta={delta:.0e} status={result['record'].status} "
                    f"rate={fit.rate:.6g} escape={fit.escape_time} "
                    f"escape_2theta={fit.escape_time_double} predicted={fit.predicted_escape}"
                )
            experiments.emit_instability_summary(results, cfg, out)
            print(f"instability ladder ({len(results)} runs) -> {out}")

        elif args.command == "sweep":
            rows = experiments.sweep(cfg)
            experiments.emit_sweep(rows, cfg, out)
            for row in rows:
                print(f"gamma={row['gamma']:.6g} mu0={row['mu0']:.6g} status={row['status']}")

        elif args.command == "check":
            report = experiments.check(cfg)
            experiments.emit_check(report, out)
            for c in report["checks"]:
                print(f"[{c['status']:>7}] {c['name']}")
            if not report["all_mandatory_pass"]:
                return 4
            print(f"all checks pass (config {config_hash(cfg)})")

    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PolystarError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
