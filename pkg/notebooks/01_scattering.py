# %% [markdown]
# # Scattering relations of conformal disks
#
# A metric `exp(2 sigma)|dx|^2` on the closed unit disk is given by a preset
# string. A boundary ray `(beta, gamma)` sits at `exp(i beta)` and makes angle
# `gamma` with the boundary tangent; inward rays have `sin(gamma) > 0`.
# The scattering relation sends an inward ray to the exit ray of its orbit.

# %%
import math

from twistorlab import BoundaryRay, ThermostatField, scattering, scattering_table
from twistorlab.flow import angle_distance, chord_scattering

# %% [markdown]
# In the flat disk orbits are chords, so the integrator can be compared with the
# chord formula. The travel time is `2 sin(gamma)`.

# %%
euclid = ThermostatField.parse("zero")
ray = BoundaryRay(0.3, 1.1)
r = scattering(euclid, ray)
ref, tau = chord_scattering(ray)
print("exit", r.ray, "chord", ref)
print("travel time", r.tau_tilde, "2 sin(gamma) =", 2 * math.sin(1.1))

# %% [markdown]
# For geodesic flows the scattering relation is an involution: scattering the
# exit ray returns the original ray.

# %%
bump = ThermostatField.parse("bump:0.3:0.5")
out = scattering(bump, BoundaryRay(1.0, 0.8)).ray
back = scattering(bump, out).ray
print("alpha(alpha(r)) - r:", angle_distance(back.beta, 1.0), angle_distance(back.gamma, 0.8))

# %% [markdown]
# A thermostat `F = X + lam V` turns at rate `lam`. With a constant turning
# rate, flipping the exit vector no longer retraces the orbit.

# %%
magnetic = ThermostatField.parse("zero", "const:0.5")
out = scattering(magnetic, BoundaryRay(0.3, 1.0)).ray
rev = scattering(magnetic, BoundaryRay(out.beta, math.pi + out.gamma)).ray
print("reversed orbit lands at beta =", rev.beta, "instead of 0.3")

# %% [markdown]
# Whole tables are computed in parallel (capped by `TWISTORLAB_THREADS`) and
# serialize to CSV or JSON.

# %%
tab = scattering_table(bump, 8, 6)
print(tab.to_csv().splitlines()[:3])
