"""End-to-end attack trials and Monte Carlo campaigns.

A trial simulates ambient PMU data, identifies the target's line
parameters, builds one attack per requested angle and runs the operator's
estimator and bad data detection on fresh RTU measurements.  All
randomness in trial ``k`` derives from ``(master_seed, k)``.
"""
from __future__ import annotations

import csv
import dataclasses
import functools
import math
import os
from importlib import resources
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import grid_model, stochastic_sim
from .attack_builder import AttackSpec, build_attack_vector, determine_region
from .errors import FdiaError
from .state_estimation import bdd_check, calibrate_threshold, draw_measurements, wls_estimate
from .system_id import IdentifiedModel, identify

CASE_STUDY_TAU = {14: 0.1, 15: 27.88, 16: 206.01}


@dataclass(frozen=True)
class ExperimentConfig:
    case_path: str | None = None  # None selects the bundled IEEE 39-bus case
    target: int = 15
    angles_deg: tuple[float, ...] = (0.0, 10.0, 20.0, 26.0)
    trials: int = 1000
    duration: float = 300.0
    rate: float = 60.0
    n_injection: int = 10
    lag: int = 1
    rtu_sigma: float = 0.05
    pmu_noise_factor: float = 0.10
    quantile: float = 0.95
    seed: int | None = None
    region_tau: Mapping[int, float] = field(default_factory=lambda: dict(CASE_STUDY_TAU))
    default_tau: float = 5.0
    sigma_p: float = 1.0
    reference_window: int = 60
    reidentify: bool = True
    mode: str = stochastic_sim.EXACT
    oracle_parameters: bool = False

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not all(math.isfinite(a) for a in self.angles_deg):
            raise ValueError("attack angles must be finite")
        if self.n_injection < 2 or self.lag < 1 or self.reference_window < 1:
            raise ValueError("n_injection >= 2, lag >= 1 and reference_window >= 1 required")
        if not 0 < self.quantile < 1:
            raise ValueError("quantile must lie in (0, 1)")
        if self.rtu_sigma <= 0 or self.pmu_noise_factor < 0 or self.sigma_p < 0:
            raise ValueError("noise levels must be non-negative (RTU sigma positive)")
        object.__setattr__(self, "angles_deg", tuple(float(a) for a in self.angles_deg))
        object.__setattr__(self, "region_tau", dict(self.region_tau))
        stochastic_sim.TrajectoryConfig(self.duration, self.rate, 0, self.mode)

    def _key(self):
        return (self.case_path, tuple(sorted(self.region_tau.items())),
                self.default_tau, self.sigma_p)


# ---------------------------------------------------------------------------
# config files

def _parse_value(name: str, text: str):
    kind = {f.name: f for f in dataclasses.fields(ExperimentConfig)}[name]
    text = text.strip()
    if name == "angles_deg":
        return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())
    if name == "region_tau":
        out = {}
        for item in text.split(","):
            if item.strip():
                b, t = item.split(":")
                out[int(b)] = float(t)
        return out
    if name in ("case_path",):
        return text or None
    if name == "seed":
        return None if text.lower() in ("", "none") else int(text)
    if name == "mode":
        return text
    if name in ("reidentify", "oracle_parameters"):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {text!r}")
    default = kind.default
    return int(text) if isinstance(default, int) else float(text)


def parse_config(text: str, **overrides) -> ExperimentConfig:
    """``key = value`` lines (``#`` comments) mirroring :class:`ExperimentConfig`."""
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep or key not in names:
            raise ValueError(f"config line {lineno}: unknown or malformed entry {raw!r}")
        values[key] = _parse_value(key, val)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def load_config(path, **overrides) -> ExperimentConfig:
    cfg = parse_config(Path(path).read_text(), **overrides)
    if cfg.case_path and not os.path.isabs(cfg.case_path):
        cfg = dataclasses.replace(cfg, case_path=str(Path(path).parent / cfg.case_path))
    return cfg


def default_config(**overrides) -> ExperimentConfig:
    """The shipped case-study configuration (``case_study.cfg``)."""
    text = resources.files("pmu_fdia.data").joinpath("case_study.cfg").read_text()
    return parse_config(text, **overrides)


def config_to_text(cfg: ExperimentConfig) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if f.name == "angles_deg":
            v = ", ".join(f"{a:g}" for a in v)
        elif f.name == "region_tau":
            v = ", ".join(f"{b}:{t:g}" for b, t in sorted(v.items()))
        elif v is None:
            v = ""
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# scenario set-up (cached per process)

@functools.lru_cache(maxsize=8)
def _case(path: str | None) -> grid_model.GridCase:
    return grid_model.ieee39() if path is None else grid_model.load_case_file(path)


@functools.lru_cache(maxsize=8)
def _scenario(key):
    path, region_tau, default_tau, sigma_p = key
    case = _case(path)
    dyn = stochastic_sim.LoadDynamicsConfig.uniform(
        case, tau=default_tau, sigma=sigma_p, tau_overrides=dict(region_tau))
    system = stochastic_sim.assemble_ou(case, dyn)
    meas = grid_model.build_measurement_jacobian(case)
    return case, system, meas


def scenario(cfg: ExperimentConfig):
    """``(case, OU system, measurement model)`` for a configuration."""
    return _scenario(cfg._key())


def true_model(cfg: ExperimentConfig) -> IdentifiedModel:
    """Identification result holding the exact parameters (for bypass runs)."""
    case, system, _ = scenario(cfg)
    region = determine_region(case, cfg.target)
    idx = system.index
    sub = [idx[b] for b in region.buses]
    return IdentifiedModel(
        system.A[np.ix_(sub, sub)], cfg.region_tau.get(cfg.target, cfg.default_tau),
        {j: case.line_coefficient(cfg.target, j) for j in sorted(region.neighbors)},
        cfg.target, region.buses)


# ---------------------------------------------------------------------------
# trials

@dataclass
class AngleOutcome:
    angle_deg: float
    residual: float | None  # post-attack residual; None when no attack was built
    target_estimate_deg: float | None
    region_after_deg: dict[int, float] | None
    passed: bool | None = None


@dataclass
class TrialResult:
    trial: int
    seed: tuple
    pre_residual: float
    region_before_deg: dict[int, float]
    tau_hat: float | None = None
    susceptances: dict[int, float] | None = None
    outcomes: list[AngleOutcome] = field(default_factory=list)
    failure: str | None = None

    @property
    def failed(self) -> bool:
        return self.failure is not None


def trial_seed(master: int, trial: int) -> tuple[int, int]:
    return (int(master), int(trial))


def simulate_trace(cfg: ExperimentConfig, seed):
    """Noiseless trajectory and emulated PMU trace for one seed."""
    case, system, _ = scenario(cfg)
    region = determine_region(case, cfg.target)
    tcfg = stochastic_sim.TrajectoryConfig(cfg.duration, cfg.rate, seed, cfg.mode)
    traj = stochastic_sim.simulate_ou(system, tcfg)
    trace = stochastic_sim.emulate_pmu(traj, region.buses, cfg.target, tcfg,
                                       cfg.pmu_noise_factor, cfg.n_injection)
    return traj, trace


def run_trial(cfg: ExperimentConfig, trial: int, master_seed: int | None = None,
              fixed_model: IdentifiedModel | None = None) -> TrialResult:
    """Simulate, identify, attack and estimate for one seeded trial.

    Identification failures do not raise; they are recorded in
    ``TrialResult.failure`` and the trial carries no attack outcomes.
    """
    master = cfg.seed if master_seed is None else master_seed
    if master is None:
        raise ValueError("a master seed is required")
    seed = trial_seed(master, trial)
    case, system, meas = scenario(cfg)
    region = determine_region(case, cfg.target)

    traj, trace = simulate_trace(cfg, seed)
    # RTU snapshot of the true state at the end of the PMU record
    x_true = meas.state_vector(traj.full_angles()[-1], case)
    rng = stochastic_sim.child_rng(seed, 2)
    col = meas.column_index

    def region_deg(x):
        return {b: math.degrees(x[col[b]]) for b in region.buses if b in col}

    z0 = draw_measurements(meas, x_true, rng, cfg.rtu_sigma)
    est0 = wls_estimate(meas, z0)
    result = TrialResult(trial, seed, est0.residual, region_deg(est0.x_hat))

    try:
        if cfg.oracle_parameters:
            model = true_model(cfg)
        elif fixed_model is not None:
            model = fixed_model
        else:
            model = identify(trace, region, cfg.lag, cfg.n_injection)
    except FdiaError as exc:
        result.failure = f"{type(exc).__name__}: {exc}"
        return result
    result.tau_hat = model.tau
    result.susceptances = model.susceptances

    for ang in cfg.angles_deg:
        spec = AttackSpec.from_trace(trace, math.radians(ang), cfg.reference_window)
        attack = build_attack_vector(region, model, spec, meas)
        z = draw_measurements(meas, x_true, rng, cfg.rtu_sigma)
        est = wls_estimate(meas, attack.apply(z.z))
        result.outcomes.append(AngleOutcome(
            ang, est.residual, math.degrees(est.x_hat[col[cfg.target]]), region_deg(est.x_hat)))
    return result


def _run_one(args):
    cfg, k, fixed = args
    return run_trial(cfg, k, fixed_model=fixed)


# ---------------------------------------------------------------------------
# campaigns

@dataclass
class SummaryRow:
    angle_deg: float
    bypass_rate: float
    trials: int
    passed: int
    failed_identification: int


@dataclass
class SummaryTable:
    config: ExperimentConfig
    gamma: float
    rows: list[SummaryRow]
    results: list[TrialResult]
    true_tau: float
    true_susceptances: dict[int, float]

    @property
    def failed_trials(self) -> int:
        return sum(r.failed for r in self.results)

    def parameter_stats(self) -> dict[str, tuple[float, float, float]]:
        """quantity -> (mean, std, median) over trials with an identification."""
        ok = [r for r in self.results if not r.failed]
        out = {}
        if not ok:
            return out
        taus = np.array([r.tau_hat for r in ok])
        out[f"tau_{self.config.target}"] = (taus.mean(), taus.std(ddof=0), float(np.median(taus)))
        for j in sorted(self.true_susceptances):
            b = np.array([r.susceptances[j] for r in ok])
            out[f"B_{j}_{self.config.target}"] = (b.mean(), b.std(ddof=0), float(np.median(b)))
        return out


def bypass_rates(results: Sequence[TrialResult], angles, gamma: float) -> list[SummaryRow]:
    rows = []
    K = len(results)
    for k, ang in enumerate(angles):
        passed = sum(1 for r in results if not r.failed and bdd_check(r.outcomes[k].residual, gamma))
        failed = sum(r.failed for r in results)
        rows.append(SummaryRow(ang, passed / K, K, passed, failed))
    return rows


def run_montecarlo(cfg: ExperimentConfig, workers: int = 1, progress=None) -> SummaryTable:
    """``cfg.trials`` seeded trials; the BDD threshold is the configured
    quantile of the trials' pre-attack residuals."""
    if cfg.seed is None:
        raise ValueError("run_montecarlo requires cfg.seed")
    case, _, _ = scenario(cfg)
    determine_region(case, cfg.target)

    fixed = None
    if not cfg.reidentify and not cfg.oracle_parameters:
        # identify once from the first trial's record and reuse it
        _, trace = simulate_trace(cfg, trial_seed(cfg.seed, 0))
        fixed = identify(trace, determine_region(case, cfg.target), cfg.lag, cfg.n_injection)

    jobs = [(cfg, k, fixed) for k in range(cfg.trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs, chunksize=max(1, cfg.trials // (8 * workers))))
    else:
        results = []
        for job in jobs:
            results.append(_run_one(job))
            if progress:
                progress(len(results), cfg.trials)
    results.sort(key=lambda r: r.trial)

    gamma = calibrate_threshold([r.pre_residual for r in results], cfg.quantile) \
        if len(results) >= 100 else float(np.quantile([r.pre_residual for r in results], cfg.quantile))
    for r in results:
        for o in r.outcomes:
            o.passed = bdd_check(o.residual, gamma)
    truth = true_model(cfg)
    return SummaryTable(cfg, gamma, bypass_rates(results, cfg.angles_deg, gamma), results,
                        truth.tau, truth.susceptances)


# ---------------------------------------------------------------------------
# reports

def emit_report(summary: SummaryTable, outdir) -> dict[str, Path]:
    """Write summary, per-trial, identification and bypass-curve CSV files."""
    if summary is None or not summary.results:
        raise ValueError("no trial results to report")
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {k: out / f"{k}.csv" for k in ("summary", "trials", "identification", "bypass_curve")}
    g = summary.gamma

    with open(paths["summary"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["angle_deg", "bypass_rate", "trials", "gamma"])
        for row in summary.rows:
            w.writerow([f"{row.angle_deg:g}", repr(float(row.bypass_rate)), row.trials, repr(float(g))])

    with open(paths["trials"], "w", newline="") as fh:
        w = csv.writer(fh)
        nb = sorted(summary.true_susceptances)
        w.writerow(["trial", "seed", "failure", "tau_hat"] + [f"B_{j}_{summary.config.target}" for j in nb]
                   + ["pre_residual", "angle_deg", "post_residual", "pass", "target_angle_deg"])
        for r in summary.results:
            base = [r.trial, ":".join(map(str, r.seed)), r.failure or "",
                    "" if r.tau_hat is None else repr(float(r.tau_hat))]
            base += ["" if r.failed else repr(float(r.susceptances[j])) for j in nb]
            base.append(repr(float(r.pre_residual)))
            if r.failed:
                for ang in summary.config.angles_deg:
                    w.writerow(base + [f"{ang:g}", "", False, ""])
            for o in r.outcomes:
                w.writerow(base + [f"{o.angle_deg:g}", "" if o.residual is None else repr(float(o.residual)), o.passed,
                                   "" if o.target_estimate_deg is None else repr(float(o.target_estimate_deg))])

    stats = summary.parameter_stats()
    truths = {f"tau_{summary.config.target}": summary.true_tau}
    truths.update({f"B_{j}_{summary.config.target}": b for j, b in summary.true_susceptances.items()})
    with open(paths["identification"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantity", "true", "estimated", "rel_error"])
        for q, truth in truths.items():
            if q in stats:
                est = stats[q][2]
                w.writerow([q, repr(float(truth)), repr(float(est)), repr(float(abs(est - truth) / abs(truth)))])
            else:
                w.writerow([q, repr(float(truth)), "", ""])

    with open(paths["bypass_curve"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["angle_deg", "bypass_probability"])
        for row in summary.rows:
            w.writerow([f"{row.angle_deg:g}", repr(float(row.bypass_rate))])
    return paths
