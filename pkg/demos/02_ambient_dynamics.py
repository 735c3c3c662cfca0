# # Ambient load dynamics and the PMU view
#
# Load-bus angles wander around the operating point as an
# Ornstein-Uhlenbeck process; generators hold their angles.

import numpy as np

from pmu_fdia import experiment, stochastic_sim as ss

cfg = experiment.default_config()
case, system, meas = experiment.scenario(cfg)
print("states:", len(system.buses), "load buses")
print("slowest / fastest mode (s):",
      (-1 / np.linalg.eigvals(system.A).real).max().round(2),
      (-1 / np.linalg.eigvals(system.A).real).min().round(4))

# ## One 300 s record at 60 Hz

tcfg = ss.TrajectoryConfig(duration=cfg.duration, rate=cfg.rate, seed=(0, 0))
traj = ss.simulate_ou(system, tcfg)
idx = [system.index[b] for b in (14, 15, 16)]
print("N =", len(traj.times))
print("sample std (deg):", np.degrees(traj.angles[:, idx].std(axis=0)).round(3))
print("stationary std (deg):",
      np.degrees(np.sqrt(np.diag(system.stationary_covariance())[idx])).round(3))

# ## What the adversary records
#
# PMU noise is 10% of the largest sample-to-sample change.  The injection
# series of the target is only kept for the first 10 samples.

trace = ss.emulate_pmu(traj, (14, 15, 16), 15, tcfg, cfg.pmu_noise_factor, cfg.n_injection)
print("angle noise std (rad):", round(trace.angle_noise_std, 5))
print("injection noise std (pu):", round(trace.injection_noise_std, 5))
print("P_15 samples:", trace.injection.round(4))
