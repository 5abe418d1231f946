# %% [markdown]
# # Jacobi fields, convexity and the glancing identity
#
# Variations of a thermostat orbit are written in the frame `X, H, V` with
# coefficients `(a, b, c)`. They obey `a' = lam b`, `b' = c`,
# `c' = (V lam) c - kappa b` with `kappa = K - H lam + lam^2`.

# %%
import numpy as np

from twistorlab import PhasePoint, ThermostatField
from twistorlab.geometry import ConformalMetric
from twistorlab.jacobi import (VariationalState, conjugate_point_scan, fd_variation,
                               glancing_identity, variational_flow)

# %% [markdown]
# In the flat disk the Jacobi field with `b(0) = 0, b'(0) = 1` is `b(t) = t`.

# %%
tr = variational_flow(ThermostatField.parse("zero"), PhasePoint(0.1, 0.2, 0.3), T=1.0)
print("b(1) =", tr.at(1.0)[1].b)

# %% [markdown]
# On a curved metric with a turning rate, the variational ODE agrees with finite
# differences of the flow map.

# %%
F = ThermostatField.parse("bump:0.3:0.5", "const:0.2")
p0 = np.array([0.1, -0.2, 0.7])
xi0 = VariationalState(0.3, -0.5, 1.0)
ode = variational_flow(F, p0, xi0, T=0.5).at(0.5)[1]
fd = fd_variation(F, p0, xi0, 0.5)
print("ODE", ode.array, "FD", fd.array)

# %% [markdown]
# At a glancing boundary vector the second fundamental form and the fiber
# derivative of the travel time satisfy `Pi^lam(v, v) V(tau) = +-2`.
# The derivative is extrapolated from rays approaching the boundary tangent.

# %%
for side in (0, 1):
    rep = glancing_identity(ThermostatField.parse("zero", "const:0.3"), beta=0.7, side=side)
    print(f"side {side}: product {rep.product:+.8f}, residual {rep.residual:.1e}")

# %% [markdown]
# Conjugate points are detected as zeros of `b` along boundary-to-boundary
# geodesics.

# %%
print(conjugate_point_scan(ConformalMetric.parse("bump:0.3:0.5"), n_rays=36))
