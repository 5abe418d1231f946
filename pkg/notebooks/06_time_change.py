# %% [markdown]
# # Time changes
#
# Flowing each point for time `tau(x, v)` maps orbits to orbits and pushes the
# geodesic field to `q X` with `1/q = 1 + X tau`.

# %%
import numpy as np

from twistorlab.flow import TimeFunction, time_change_check
from twistorlab.geometry import ConformalMetric

m = ConformalMetric.parse("bump:0.3:0.5")
tau = TimeFunction.parse("quadcos:0.05")
rep = time_change_check(m, tau, np.array([0.2, -0.3, 1.1]))
print("q =", rep.q, " 1/(1 + X tau) =", 1 / rep.one_plus_x_tau)
print("components off the flow direction:", rep.transverse_residual)
