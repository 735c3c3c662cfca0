# # The grid and the operator's measurement model
#
# The IEEE 39-bus case ships with the package.  Bus 31 is the reference
# generator; the operator measures every bus injection and every line flow.

import numpy as np

from pmu_fdia import grid_model

case = grid_model.ieee39()
print(len(case.buses), "buses,", len(case.branches), "branches, reference bus", case.reference_bus)
print("generators:", case.generator_buses)

# ## Measurement Jacobian
#
# 39 injection rows followed by 46 flow rows; the reference column is dropped.

meas = grid_model.build_measurement_jacobian(case)
print("H:", meas.H.shape)
print([m.label for m in meas.measurements[:3]], "...", [m.label for m in meas.measurements[-3:]])

# Row of the bus 15 injection: nonzeros only at 15 and its neighbours.
row = meas.H[meas.injection_row(15)]
print({meas.state_buses[k]: round(float(v), 3) for k, v in enumerate(row) if v})

# ## Operating point
#
# DC power flow with the static injections; angles in degrees.

theta = grid_model.dc_power_flow(case)
for b in (14, 15, 16):
    print(b, round(float(np.degrees(theta[case.index[b]])), 3))

# Line coefficients W = 1/x on the lines touching bus 15.  The reported
# susceptance is the negative of W.
for j in sorted(grid_model.neighbors(case, 15)):
    w = case.line_coefficient(15, j)
    print(f"line {j}-15: W = {w:.3f}, B = {-w:.3f}")
