# %% [markdown]
# # The scattering relation sees the turning rate
#
# The thermostat with `lam = dsigma'(v^perp)` has a different scattering
# relation from the geodesic flow unless `sigma'` is locally constant. It is
# conjugate to the geodesic flow of the rescaled metric `exp(2 sigma') g`.

# %%
import numpy as np

from twistorlab import ThermostatField, scattering_table
from twistorlab.flow import angle_distance
from twistorlab.scenarios import ScenarioConfig, run_scenario

# %%
plain = scattering_table(ThermostatField.parse("zero"), 8, 8)
tilted = scattering_table(ThermostatField.parse("zero", "conformal:linreal:0.1"), 8, 8)
gap = np.max(angle_distance(plain.beta_out, tilted.beta_out))
print("largest change of exit point:", gap)

# %% [markdown]
# The conjugation check compares the thermostat with the rescaled geodesic flow
# for the exponents 2 and 1, and records which one agrees.

# %%
rep = run_scenario(ScenarioConfig("conformal-conjugation", grid=(8, 8), out="twistorlab-out/nb03"))
for a in rep.assertions:
    print(f"{a.name:28s} {a.value:.2e}")
print("validated exponent:", rep.metrics["validated_exponent"])
