# %% [markdown]
# # The Euclidean transport twistor space
#
# Points are `(z, mu)` with `|mu| <= 1`. The structure is spanned by
# `d/dconj(z) + mu^2 d/dz` and `d/dconj(mu)`. Euclidean motions, scalings and
# shears preserve it; the conjugate shear does not.

# %%
import numpy as np

from twistorlab.geometry import ConformalMetric
from twistorlab.twistor import (holomorphy_residual, invariant_extension_check, parse_map,
                                pestov_uhlmann_euclid, random_twistor_points)

rng = np.random.default_rng(0)
pts = random_twistor_points(rng, 200)
for spec in ("shear:0.7", "antipodal", "rot:0.5", "trans:0.3:-1.0", "scale:2.5", "badshear:0.5"):
    res = max(holomorphy_residual(parse_map(spec), p) for p in pts)
    print(f"{spec:16s} residual {res:.1e}")

# %% [markdown]
# Holomorphic functions on the disk extend to holomorphic functions on twistor
# space through `z - mu^2 conj(z)`.

# %%
ext = pestov_uhlmann_euclid([0, 0, 1])  # h(z) = z^2
print(ext)

# %% [markdown]
# Boundary data that is holomorphic on twistor space, transported along
# straight lines, stays fibrewise holomorphic at interior points.

# %%
reps = invariant_extension_check(ConformalMetric(), lambda z, mu: mu, [0.2 + 0.1j, -0.4j], n=16)
print([f"{r.max_negative:.1e}" for r in reps])
reps = invariant_extension_check(ConformalMetric(), lambda z, mu: z.conjugate(), [0.2 + 0.1j], n=16)
print("control conj z:", reps[0].max_negative)
