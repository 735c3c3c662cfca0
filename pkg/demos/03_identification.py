# # Learning the line parameters from PMU data
#
# The lag-one correlation of the region angles gives the drift matrix,
# a short regression on the injection series gives the time constant of
# bus 15, and their product gives the line coefficients.

import numpy as np

from pmu_fdia import experiment, system_id as si
from pmu_fdia.attack_builder import determine_region

cfg = experiment.default_config()
case, system, _ = experiment.scenario(cfg)
region = determine_region(case, 15)
sub = [system.index[b] for b in region.buses]
A_true = system.A[np.ix_(sub, sub)]

_, trace = experiment.simulate_trace(cfg, (0, 0))
corr = si.lag_correlation(trace, M=1)
A_hat = si.estimate_A(corr)
print("row 15 of A, true:     ", A_true[1].round(4))
print("row 15 of A, estimated:", A_hat[1].round(4))

# The PMU noise (10% of the largest step) inflates C(0) against the small
# one-sample decorrelation, which scales the estimate up.  Without it the
# row comes back close to the truth.

_, clean = experiment.simulate_trace(experiment.default_config(pmu_noise_factor=0.0), (0, 0))
print("row 15 of A, no PMU noise:", si.estimate_A(si.lag_correlation(clean))[1].round(4))

# ## Time constant
#
# Ten samples at 60 Hz cover one sixth of a second.  Over that window the
# angle increments are dominated by the white load noise, so the fit is
# erratic; it settles only with much longer windows.

print("10 samples ->", round(si.time_constant_normal_equation(trace, 10), 3), "s (true 27.88 s)")
_, long_trace = experiment.simulate_trace(
    experiment.default_config(n_injection=18000), (0, 0))
for n in (100, 1000, 18000):
    print(n, "samples ->", round(si.time_constant_normal_equation(long_trace, n), 3), "s")

# ## Line estimates from the noise-free record, true time constant

model = si.extract_line_params(si.estimate_A(si.lag_correlation(clean)), 27.88, region)
truth = {j: case.line_coefficient(15, j) for j in region.neighbors}
for q, t, e, err in si.identification_rows(model, 27.88, truth)[1:]:
    print(f"{q}: true {t:.3f}, estimated {e:.3f} ({100 * err:.1f}%)")
