"""Command line entry point: ``efdyn {solve,verify,simulate,kinematics,report}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import beat, io, kinematics, pipeline
from .ep import PoleProximityError, RootCountError
from .model import ConfigError

log = logging.getLogger("efdyn")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _load(args) -> tuple[pipeline.RunConfig, dict]:
    data = io.load_config(args.config)
    over = {"seed": args.seed, "policy": args.policy}
    if getattr(args, "trials", None) is not None:
        over["trials"] = args.trials
    if getattr(args, "steps", None) is not None:
        over["steps"] = args.steps
    cfg = pipeline.RunConfig.from_dict(data, **over)
    cfg.out = Path(args.out)
    cfg.fault_trial = getattr(args, "inject_fault", None)
    return cfg, data


def _report(cfg, data, command: str, t0: float, **sections) -> dict:
    return {
        "command": command,
        "input_digest": io.digest(data),
        "effective_config": {"run": cfg.echo(), "system": cfg.system},
        **sections,
        "wall_time_s": time.perf_counter() - t0,
    }


def cmd_solve(args) -> int:
    t0 = time.perf_counter()
    cfg, data = _load(args)
    res = pipeline.solve_config(cfg)
    pipeline.write_solve_artifacts(res, cfg.out)
    summary = pipeline.solve_summary(res)
    ok = res.oracle_deviation <= cfg.oracle_tol
    summary["oracle_pass"] = ok
    io.write_report(cfg.out / "report.json", _report(cfg, data, "solve", t0, solve=summary))
    print(f"roots={summary['roots']} realisations={summary['realisations']} "
          f"C={summary['complexity']:.6g} regime={summary['regime']} "
          f"oracle_dev={res.oracle_deviation:.3e} {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_verify(args) -> int:
    t0 = time.perf_counter()
    if args.config:
        cfg, data = _load(args)
    else:
        data = {}
        cfg = pipeline.RunConfig.from_dict({"run": {}}, seed=args.seed, trials=args.trials)
        cfg.out = Path(args.out)
        cfg.fault_trial = args.inject_fault
    results = pipeline.run_verify(cfg.trials, cfg.seed, cfg.max_channels, cfg.max_points,
                                  cfg.oracle_tol, cfg.fault_trial)
    io.write_csv(cfg.out / "verify.csv",
                 ["trial", "n_q", "n_xi", "roots", "expected", "max_rel_deviation", "passed", "error"],
                 ((r.trial, r.n_q, r.n_xi, r.roots, r.expected, r.deviation, r.passed, r.error)
                  for r in results))
    failed = [r.trial for r in results if not r.passed]
    worst = max(r.deviation for r in results)
    summary = {"trials": len(results), "failed_trials": failed, "max_relative_deviation": worst,
               "count_mismatches": [r.trial for r in results if r.roots != r.expected],
               "pass": not failed}
    io.write_report(cfg.out / "report.json", _report(cfg, data, "verify", t0, verify=summary))
    for t in failed:
        print(f"trial {t}: FAIL")
    print(f"verify: {len(results) - len(failed)}/{len(results)} passed, max deviation {worst:.3e}")
    return EXIT_OK if not failed else EXIT_FAIL


def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    cfg, data = _load(args)
    res = pipeline.solve_config(cfg)
    pipeline.write_solve_artifacts(res, cfg.out)
    bc = pipeline.beat_config_from(res, cfg)
    traj = beat.simulate(bc)
    pipeline.write_trajectory(traj, cfg.out / "trajectory.csv")
    dd = beat.drift_and_diffusion(traj) if traj.steps >= 2 else None
    ft = beat.frequency_test(traj)
    io.write_csv(cfg.out / "frequencies.csv", ["index", "centre", "alpha", "count", "frequency", "deviation"],
                 ((r, bc.centres[r], bc.alpha[r], traj.counts[r], traj.frequencies[r], ft.deviations[r])
                  for r in range(len(bc.alpha))))
    ledger_ok = bool(np.all(traj.actions == bc.initial_action - np.arange(1, traj.steps + 1) * bc.action_quantum))
    stats = {
        "steps": traj.steps,
        "chi2": ft.statistic, "dof": ft.dof, "critical": ft.critical, "p_value": ft.p_value,
        "frequency_pass": ft.passed, "action_ledger_exact": ledger_ok,
    }
    if dd is not None:
        stats.update(drift=dd.drift, variance=dd.variance, theoretical_drift=dd.theoretical_drift,
                     drift_z=dd.z)
    report = _report(cfg, data, "simulate", t0, solve=pipeline.solve_summary(res), simulation=stats)
    io.write_report(cfg.out / "report.json", report)
    ok = ft.passed and ledger_ok and res.oracle_deviation <= cfg.oracle_tol
    print(f"steps={traj.steps} chi2={ft.statistic:.4g} (crit {ft.critical:.4g}, dof {ft.dof}) "
          f"{'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_kinematics(args) -> int:
    if args.sweep:
        betas = np.linspace(args.beta_min, args.beta_max, args.sweep)
        states = kinematics.sweep(args.m0, betas)
        keys = list(states[0].as_dict())
        worst = 0.0
        rows = []
        for s in states:
            r = kinematics.identity_residuals(s)
            worst = max(worst, max(r.values()))
            rows.append([s.as_dict()[k] if s.as_dict()[k] is not None else "" for k in keys]
                        + [max(r.values())])
        out = Path(args.out) / "kinematics_sweep.csv"
        io.write_csv(out, keys + ["max_identity_residual"], rows)
        print(f"wrote {out} ({len(rows)} rows), worst identity residual {worst:.3e}")
        return EXIT_OK if worst <= 1e-12 else EXIT_FAIL
    s = kinematics.derive(args.m0, args.v)
    for k, v in s.as_dict().items():
        print(f"{k:>10} = {'absent' if v is None else format(v, '.10g')}")
    res = kinematics.identity_residuals(s)
    print("identity residuals (relative):")
    for k, v in res.items():
        print(f"{k:>18} = {v:.3e}")
    return EXIT_OK if max(res.values()) <= 1e-12 else EXIT_FAIL


def cmd_report(args) -> int:
    path = Path(args.out) / "report.json"
    if not path.exists():
        print(f"no report at {path}", file=sys.stderr)
        return EXIT_CONFIG
    rep = json.loads(path.read_text(encoding="utf-8"))
    print(f"command: {rep.get('command')}  digest: {rep.get('input_digest', '')[:16]}")
    for section in ("solve", "verify", "simulation"):
        if section in rep:
            print(f"[{section}]")
            for k, v in rep[section].items():
                print(f"  {k}: {v}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="efdyn", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="JSON run/system config")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--policy", default=None, help="elementary | cluster:<delta>")

    sp = sub.add_parser("solve", help="reduce, find all roots, group realisations")
    common(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("verify", help="randomised oracle campaign")
    common(sp, config_required=False)
    sp.add_argument("--trials", type=int, default=None)
    sp.add_argument("--inject-fault", type=int, default=None, metavar="TRIAL",
                    help="test hook: shift one pole of TRIAL so it must fail")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("simulate", help="solve, then run the realisation jump process")
    common(sp)
    sp.add_argument("--steps", type=int, default=None)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("kinematics", help="derived kinematic table for (m0, v)")
    sp.add_argument("--m0", type=float, default=kinematics.ELECTRON_MASS)
    sp.add_argument("--v", type=float, default=0.0)
    sp.add_argument("--sweep", type=int, default=0, metavar="N", help="write an N-point beta sweep CSV")
    sp.add_argument("--beta-min", type=float, default=0.01)
    sp.add_argument("--beta-max", type=float, default=0.999)
    sp.add_argument("--out", default="out")
    sp.set_defaults(func=cmd_kinematics)

    sp = sub.add_parser("report", help="print the report stored in --out")
    sp.add_argument("--out", default="out")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "verify" and args.seed is None:
        args.seed = 0
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RootCountError, PoleProximityError) as exc:
        print(f"ep-solver error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (ValueError, RuntimeError) as exc:
        print(f"error ({type(exc).__module__}): {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
