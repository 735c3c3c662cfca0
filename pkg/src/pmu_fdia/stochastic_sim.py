"""Ambient load dynamics as a multi-dimensional Ornstein-Uhlenbeck process.

Each load bus follows

    tau_i * d(delta_i)/dt = Ps_i * (1 + sigma_i * xi_i) - P_i(delta)

with ``P_i`` the DC injection and ``xi_i`` white Gaussian noise.  Generator
angles are held at the DC operating point, so only load-bus angles are
states.  Linearised around the operating point this is
``d(delta) = A (delta - delta_eq) dt + S dW``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg

from .errors import (
    MissingDynamicsError,
    StepSizeError,
    UnknownBusError,
    UnstableSystemError,
)
from .grid_model import GridCase, dc_power_flow

EXACT = "exact"
EULER = "euler-maruyama"


def child_rng(seed, stream: int) -> np.random.Generator:
    """Independent generator for ``stream`` derived from ``seed``.

    ``seed`` is an int or a tuple of ints; the derivation is pure, so the
    same ``(seed, stream)`` always yields the same generator state.
    """
    entropy = list(seed) if isinstance(seed, (tuple, list)) else seed
    return np.random.default_rng(np.random.SeedSequence(entropy, spawn_key=(stream,)))


@dataclass(frozen=True)
class LoadDynamicsConfig:
    tau: Mapping[int, float]  # seconds
    sigma: Mapping[int, float]

    def __post_init__(self):
        for b, t in self.tau.items():
            if not t > 0:
                raise ValueError(f"bus {b}: time constant must be positive, got {t}")
        for b, s in self.sigma.items():
            if s < 0:
                raise ValueError(f"bus {b}: noise intensity must be non-negative, got {s}")

    @classmethod
    def uniform(cls, case: GridCase, tau: float = 5.0, sigma: float = 1.0,
                tau_overrides: Mapping[int, float] | None = None,
                sigma_overrides: Mapping[int, float] | None = None) -> "LoadDynamicsConfig":
        taus = {b: tau for b in case.load_buses}
        sigmas = {b: sigma for b in case.load_buses}
        taus.update(tau_overrides or {})
        sigmas.update(sigma_overrides or {})
        return cls(taus, sigmas)


@dataclass(frozen=True, eq=False)
class OUSystem:
    A: np.ndarray  # drift, 1/s
    S: np.ndarray  # noise input
    buses: tuple[int, ...]  # modelled (load) buses, row order of A
    equilibrium: np.ndarray  # operating-point angles of the modelled buses
    theta_op: np.ndarray  # operating-point angles of every bus, case order
    case: GridCase | None = None

    @classmethod
    def from_matrices(cls, A, S, buses=None, equilibrium=None) -> "OUSystem":
        """Free-standing system without a grid behind it (no ``full_angles``)."""
        A = np.atleast_2d(np.asarray(A, float))
        S = np.atleast_2d(np.asarray(S, float))
        n = A.shape[0]
        if A.shape != (n, n) or S.shape[0] != n:
            raise ValueError("A must be square and S must have one row per state")
        buses = tuple(range(n)) if buses is None else tuple(buses)
        eq = np.zeros(n) if equilibrium is None else np.asarray(equilibrium, float)
        return cls(A, S, buses, eq, eq.copy(), None)

    @property
    def index(self) -> dict[int, int]:
        return {b: k for k, b in enumerate(self.buses)}

    def stationary_covariance(self) -> np.ndarray:
        """Solution ``C`` of ``A C + C A^T + S S^T = 0``."""
        return scipy.linalg.solve_continuous_lyapunov(self.A, -self.S @ self.S.T)


def assemble_ou(case: GridCase, cfg: LoadDynamicsConfig) -> OUSystem:
    buses = case.load_buses
    missing = [b for b in buses if b not in cfg.tau or b not in cfg.sigma]
    if missing:
        raise MissingDynamicsError(f"no time constant / noise intensity for load buses {missing}")
    idx = [case.index[b] for b in buses]
    tau = np.array([cfg.tau[b] for b in buses])
    sigma = np.array([cfg.sigma[b] for b in buses])
    ps = case.static_injections[idx]

    # Rows of the Laplacian restricted to load buses: generator neighbours
    # only contribute to the diagonal.
    J = case.laplacian[np.ix_(idx, idx)]
    A = -J / tau[:, None]
    S = np.diag(ps * sigma / tau)

    eig = np.linalg.eigvals(A)
    worst = eig[np.argmax(eig.real)]
    if worst.real >= 0:
        raise UnstableSystemError(f"drift matrix has eigenvalue {worst} with non-negative real part")

    theta = dc_power_flow(case)
    return OUSystem(A, S, buses, theta[idx], theta, case)


@dataclass(frozen=True)
class TrajectoryConfig:
    duration: float = 300.0  # seconds
    rate: float = 60.0  # Hz
    seed: int | tuple = 0
    mode: str = EXACT
    internal_step: float = 1e-3  # seconds, euler mode only

    def __post_init__(self):
        if self.mode not in (EXACT, EULER):
            raise ValueError(f"unknown discretization mode {self.mode!r}")
        if not (self.duration > 0 and self.rate > 0):
            raise StepSizeError("duration and rate must be positive")
        if self.n_samples < 2:
            raise ValueError("trajectory needs at least two samples")
        if self.mode == EULER and not self.internal_step > 0:
            raise StepSizeError("internal step must be positive")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.rate))

    @property
    def interval(self) -> float:
        return 1.0 / self.rate


@dataclass(frozen=True, eq=False)
class AngleTrajectory:
    times: np.ndarray
    angles: np.ndarray  # (N, n_states), absolute radians
    system: OUSystem

    @property
    def buses(self) -> tuple[int, ...]:
        return self.system.buses

    def full_angles(self) -> np.ndarray:
        """(N, n_bus) angles including the fixed generator buses."""
        case = self.system.case
        if case is None:
            return np.array(self.angles)
        out = np.tile(self.system.theta_op, (len(self.times), 1))
        out[:, [case.index[b] for b in self.buses]] = self.angles
        return out


def exact_discretization(A: np.ndarray, S: np.ndarray, h: float):
    """Transition ``Phi = exp(A h)`` and noise covariance
    ``Q = int_0^h exp(A s) S S^T exp(A^T s) ds``.

    ``Q`` is evaluated as ``C - Phi C Phi^T`` where ``C`` is the stationary
    covariance; this stays accurate for stiff ``A`` where block-exponential
    formulas overflow.
    """
    if not h > 0:
        raise StepSizeError(f"step must be positive, got {h}")
    Phi = scipy.linalg.expm(A * h)
    if not np.all(np.isfinite(Phi)):
        raise FloatingPointError("matrix exponential did not return finite values")
    C = scipy.linalg.solve_continuous_lyapunov(A, -S @ S.T)
    Q = C - Phi @ C @ Phi.T
    return Phi, 0.5 * (Q + Q.T)


def _psd_factor(Q: np.ndarray) -> np.ndarray:
    w, U = np.linalg.eigh(Q)
    return U * np.sqrt(np.clip(w, 0.0, None))


def simulate_ou(system: OUSystem, cfg: TrajectoryConfig) -> AngleTrajectory:
    """Sample path at the PMU rate, starting at the equilibrium."""
    A, S = system.A, system.S
    n, N, h = A.shape[0], cfg.n_samples, cfg.interval
    rng = child_rng(cfg.seed, 0)
    x = np.zeros((N, n))

    if cfg.mode == EXACT:
        Phi, Q = exact_discretization(A, S, h)
        w = rng.standard_normal((N - 1, n)) @ _psd_factor(Q).T
        PhiT = Phi.T
        for k in range(N - 1):
            x[k + 1] = x[k] @ PhiT + w[k]
    else:
        dt = cfg.internal_step
        sub = max(1, int(round(h / dt)))
        dt = h / sub
        step = np.eye(n) + A * dt
        if np.max(np.abs(np.linalg.eigvals(step))) >= 1.0:
            raise StepSizeError(f"internal step {dt:g}s is unstable for this drift matrix")
        stepT = step.T
        noise = S.T * np.sqrt(dt)
        state = np.zeros(n)
        for k in range(N - 1):
            xi = rng.standard_normal((sub, n)) @ noise
            for j in range(sub):
                state = state @ stepT + xi[j]
            x[k + 1] = state
    times = np.arange(N) * h
    return AngleTrajectory(times, x + system.equilibrium, system)


# ---------------------------------------------------------------------------
# PMU emulation

@dataclass(frozen=True, eq=False)
class PmuTrace:
    times: np.ndarray
    buses: tuple[int, ...]
    angles: np.ndarray  # (N, k) radians
    target: int
    injection: np.ndarray  # (n,) per-unit target-bus injection
    angle_noise_std: float = 0.0
    injection_noise_std: float = 0.0

    def __post_init__(self):
        if self.angles.shape != (len(self.times), len(self.buses)):
            raise ValueError("angle samples do not match timestamps / buses")
        if len(self.injection) > len(self.times):
            raise ValueError("injection series longer than the angle series")
        if self.target not in self.buses:
            raise UnknownBusError(f"target {self.target} is not among the traced buses")

    @property
    def n_samples(self) -> int:
        return len(self.times)

    @property
    def interval(self) -> float:
        return float(self.times[1] - self.times[0])

    def angle(self, bus: int) -> np.ndarray:
        return self.angles[:, self.buses.index(bus)]


def _largest_step(series: np.ndarray) -> float:
    if len(series) < 2:
        return 0.0
    return float(np.max(np.abs(np.diff(series, axis=0))))


def emulate_pmu(traj: AngleTrajectory, region: Sequence[int], target: int,
                cfg: TrajectoryConfig, noise_factor: float = 0.10,
                injection_samples: int = 10) -> PmuTrace:
    """Noisy PMU view of ``region`` plus the target-bus injection series.

    Noise standard deviation is ``noise_factor`` times the largest change
    between consecutive samples, taken over all traced buses (angles) or
    over the injection series.  The injection is evaluated from the
    noiseless angles and truncated to ``injection_samples`` samples.
    """
    region = tuple(region)
    if target not in region:
        raise UnknownBusError(f"target {target} is outside the region {region}")
    idx = traj.system.index
    absent = [b for b in region if b not in idx]
    if absent:
        raise UnknownBusError(f"buses {absent} are not modelled in the trajectory")
    if injection_samples < 2 or injection_samples > len(traj.times):
        raise ValueError("injection_samples must lie in [2, N]")

    rng = child_rng(cfg.seed, 1)
    clean = traj.angles[:, [idx[b] for b in region]]
    case = traj.system.case
    full = traj.full_angles()
    p_clean = full @ case.laplacian[case.index[target]]

    s_ang = noise_factor * _largest_step(clean)
    s_inj = noise_factor * _largest_step(p_clean)
    angles = clean + rng.normal(0.0, 1.0, clean.shape) * s_ang
    p = p_clean + rng.normal(0.0, 1.0, p_clean.shape) * s_inj
    return PmuTrace(traj.times.copy(), region, angles, target,
                    p[:injection_samples], s_ang, s_inj)


def write_trace_csv(trace: PmuTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# target: {trace.target}\n")
        fh.write(f"# angle_noise_std: {float(trace.angle_noise_std)!r}\n")
        fh.write(f"# injection_noise_std: {float(trace.injection_noise_std)!r}\n")
        w = csv.writer(fh)
        w.writerow(["t"] + [f"delta_{b}" for b in trace.buses] + ["P_t"])
        n = len(trace.injection)
        for k, t in enumerate(trace.times):
            p = repr(float(trace.injection[k])) if k < n else ""
            w.writerow([repr(float(t))] + [repr(float(v)) for v in trace.angles[k]] + [p])


def read_trace_csv(path, target: int | None = None) -> PmuTrace:
    meta = {}
    rows = []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                meta[key.strip()] = value.strip()
            else:
                rows.append(line)
    reader = csv.reader(rows)
    header = next(reader)
    if header[0] != "t" or header[-1] != "P_t":
        raise ValueError(f"{path}: unexpected trace header {header}")
    buses = tuple(int(h.removeprefix("delta_")) for h in header[1:-1])
    times, angles, inj = [], [], []
    for row in reader:
        if not row:
            continue
        times.append(float(row[0]))
        angles.append([float(v) for v in row[1:-1]])
        if row[-1] != "":
            inj.append(float(row[-1]))
    if target is None:
        target = int(meta["target"])
    return PmuTrace(np.array(times), buses, np.array(angles), target, np.array(inj),
                    float(meta.get("angle_noise_std", 0.0)),
                    float(meta.get("injection_noise_std", 0.0)))
