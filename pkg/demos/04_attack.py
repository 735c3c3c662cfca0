# # Building the attack and running the operator's estimator
#
# The adversary rewrites two line flows and three injections so that the
# operator sees bus 15 at 10 degrees.

import math

import numpy as np

from pmu_fdia import experiment, grid_model, stochastic_sim as ss
from pmu_fdia.attack_builder import (
    AttackSpec,
    build_attack_vector,
    determine_region,
    estimated_jacobian,
    predict_residual_shift,
)
from pmu_fdia.state_estimation import draw_measurements, wls_estimate

cfg = experiment.default_config()
case, system, meas = experiment.scenario(cfg)
region = determine_region(case, 15)
traj, trace = experiment.simulate_trace(cfg, (0, 3))
x = meas.state_vector(traj.full_angles()[-1], case)
z = draw_measurements(meas, x, ss.child_rng((0, 3), 2)).z
col = meas.column_index

# ## Perfect knowledge
#
# With the true coefficients the attack is a = H c and the residual does
# not move.

model = experiment.true_model(cfg)
spec = AttackSpec.from_trace(trace, math.radians(10.0), window=60)
a = build_attack_vector(region, model, spec, meas)
for row, d in sorted(a.deltas.items()):
    print(f"{meas.measurements[row].label:>8s} {d:+.4f}")

before, after = wls_estimate(meas, z), wls_estimate(meas, a.apply(z))
print("residual before / after:", round(before.residual, 6), round(after.residual, 6))
for b in region.buses:
    print(b, np.degrees(before.x_hat[col[b]]).round(3), "->", np.degrees(after.x_hat[col[b]]).round(3))

# ## Imperfect knowledge
#
# Coefficients off by 13% and 4% leave a residual term that grows with c.

rough = experiment.IdentifiedModel(model.A_hat, model.tau, {14: 39.634, 16: 101.64}, 15, region.buses)
H_hat = estimated_jacobian(meas, case, rough)
for deg in (0, 10, 20, 26):
    spec = AttackSpec.from_trace(trace, math.radians(deg), window=60)
    a = build_attack_vector(region, rough, spec, meas)
    c = np.zeros(38)
    c[col[15]] = a.c
    r = wls_estimate(meas, a.apply(z)).residual
    print(f"{deg:2d} deg: c = {math.degrees(a.c):6.2f} deg, residual {r:.3f}, "
          f"model-error term {predict_residual_shift(meas.H, H_hat, c):.3f}")
