"""Command line entry point: ``pmu-fdia {simulate,identify,attack,se,montecarlo}``."""
from __future__ import annotations

import argparse
import dataclasses
import math
import sys
from pathlib import Path

import numpy as np

from . import experiment, grid_model, state_estimation, stochastic_sim, system_id
from .attack_builder import AttackSpec, build_attack_vector, determine_region, read_attack_csv, write_attack_csv
from .errors import FdiaError
from .system_id import IdentifiedModel


def _add_config_flags(p: argparse.ArgumentParser, skip=("seed",)):
    p.add_argument("--config", help="key = value configuration file")
    for f in dataclasses.fields(experiment.ExperimentConfig):
        if f.name in skip:
            continue
        p.add_argument("--" + f.name.replace("_", "-"), dest=f"cfg_{f.name}", metavar="VALUE",
                       help=f"override '{f.name}' from the configuration")


def _config(args, **extra) -> experiment.ExperimentConfig:
    overrides = {}
    for f in dataclasses.fields(experiment.ExperimentConfig):
        raw = getattr(args, f"cfg_{f.name}", None)
        if raw is not None:
            overrides[f.name] = experiment._parse_value(f.name, raw)
    overrides.update({k: v for k, v in extra.items() if v is not None})
    if args.config:
        return experiment.load_config(args.config, **overrides)
    return experiment.ExperimentConfig(**overrides)


def _case(path):
    return grid_model.ieee39() if path is None else grid_model.load_case_file(path)


def cmd_simulate(args):
    cfg = _config(args)
    seed = experiment.trial_seed(args.seed, args.trial)
    traj, trace = experiment.simulate_trace(cfg, seed)
    stochastic_sim.write_trace_csv(trace, args.out)
    if args.measurements_out:
        case, _, meas = experiment.scenario(cfg)
        x = meas.state_vector(traj.full_angles()[-1], case)
        z = state_estimation.draw_measurements(meas, x, stochastic_sim.child_rng(seed, 2), cfg.rtu_sigma)
        state_estimation.write_measurements_csv(args.measurements_out, meas, z)
    print(f"wrote {trace.n_samples} samples for buses {list(trace.buses)} to {args.out}")


def cmd_identify(args):
    trace = stochastic_sim.read_trace_csv(args.trace, args.target)
    case = _case(args.case)
    region = determine_region(case, trace.target)
    trace = stochastic_sim.PmuTrace(trace.times, region.buses,
                                    trace.angles[:, [trace.buses.index(b) for b in region.buses]],
                                    trace.target, trace.injection,
                                    trace.angle_noise_std, trace.injection_noise_std)
    model = system_id.identify(trace, region, args.lag, args.n_injection)
    truth = {j: case.line_coefficient(trace.target, j) for j in region.neighbors} if args.truth else None
    rows = system_id.identification_rows(model, args.true_tau, truth)
    system_id.write_identification_csv(rows, args.out)
    for q, _, est, _ in rows:
        print(f"{q} = {est:.6g}")


def cmd_attack(args):
    case = _case(args.case)
    meas = grid_model.build_measurement_jacobian(case)
    tau, coeffs, target = system_id.read_identification_csv(args.identification)
    region = determine_region(case, target)
    model = IdentifiedModel(np.zeros((region.size, region.size)), tau, coeffs, target, region.buses)
    trace = stochastic_sim.read_trace_csv(args.trace, target)
    spec = AttackSpec.from_trace(trace, math.radians(args.angle), args.window)
    attack = build_attack_vector(region, model, spec, meas)
    write_attack_csv(attack, meas, args.out)
    print(f"attack on bus {target}: c = {math.degrees(attack.c):.4f} deg, {len(attack.deltas)} measurements")


def cmd_se(args):
    case = _case(args.case)
    meas = grid_model.build_measurement_jacobian(case)
    z = state_estimation.read_measurements_csv(args.measurements, meas)
    before = state_estimation.wls_estimate(meas, z, args.gamma)
    after = before
    if args.attack:
        after = state_estimation.wls_estimate(meas, z + read_attack_csv(args.attack, meas), args.gamma)
    state_estimation.write_estimation_report(
        args.out, meas.state_buses, np.degrees(before.x_hat), np.degrees(after.x_hat),
        after.residual, args.gamma)
    verdict = "" if after.passed is None else (" pass" if after.passed else " FAIL")
    print(f"residual {after.residual:.5f}{verdict}")


def cmd_montecarlo(args):
    cfg = _config(args, seed=args.seed)

    def progress(k, total):
        if k % max(1, total // 20) == 0 or k == total:
            print(f"\r{k}/{total} trials", end="", file=sys.stderr, flush=True)

    summary = experiment.run_montecarlo(cfg, workers=args.workers, progress=progress)
    print(file=sys.stderr)
    paths = experiment.emit_report(summary, args.out)
    print(f"gamma = {summary.gamma:.5f}; failed identifications: {summary.failed_trials}/{cfg.trials}")
    for row in summary.rows:
        print(f"  angle {row.angle_deg:6g} deg: bypass {100 * row.bypass_rate:5.1f}%")
    print("reports: " + ", ".join(str(p) for p in paths.values()))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pmu-fdia", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="emit a PMU trace CSV")
    _add_config_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--measurements-out", help="also write RTU measurements at the end of the record")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("identify", help="trace -> identification CSV")
    p.add_argument("--trace", required=True)
    p.add_argument("--case")
    p.add_argument("--target", type=int)
    p.add_argument("--lag", type=int, default=1)
    p.add_argument("--n-injection", type=int, default=10)
    p.add_argument("--truth", action="store_true", help="include true line values from the case")
    p.add_argument("--true-tau", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("attack", help="identification + angle -> attack vector CSV")
    p.add_argument("--case")
    p.add_argument("--identification", required=True)
    p.add_argument("--trace", required=True, help="PMU trace supplying the reference angles")
    p.add_argument("--angle", type=float, required=True, help="target angle in degrees")
    p.add_argument("--window", type=int, default=60)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("se", help="measurements (+ attack) -> estimation report")
    p.add_argument("--case")
    p.add_argument("--measurements", required=True)
    p.add_argument("--attack")
    p.add_argument("--gamma", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_se)

    p = sub.add_parser("montecarlo", help="full campaign -> CSV reports")
    _add_config_flags(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_montecarlo)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (FdiaError, OSError) as exc:
        print(f"pmu-fdia {args.command}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
