# %% [markdown]
# # Fourier analysis on the circle and rigidity of circle maps
#
# A function on a fiber circle is fibrewise holomorphic when its negative
# Fourier modes vanish. The ratio `(a mu + b conj mu) / |a mu + b conj mu|`
# is holomorphic in this sense exactly when `b = 0`.

# %%
import numpy as np

from twistorlab import FourierSeries
from twistorlab.circle import (circle_map_from_argument, circlediff_rigidity,
                               holomorphic_extension, moebius_ratio_test, rkc_check)

# %%
for b in (0.0, 1e-3, 0.4):
    rep = moebius_ratio_test(1.0 + 0.5j, b)
    print(f"b = {b:<6} extendable: {rep.extendable}  max negative mode {rep.max_negative:.1e}")

# %% [markdown]
# Hardy data extends holomorphically to the disk.

# %%
f = FourierSeries.from_function(lambda mu: mu ** 2 / (2 - mu))
ext = holomorphic_extension(f)
print("extension at 0.5:", ext(0.5), "exact:", 0.25 / 1.5)

# %% [markdown]
# A circle diffeomorphism that fixes 1, commutes with the antipodal map and has
# Hardy boundary values must be the identity. Each perturbation below breaks one
# hypothesis, and the harmonic extension stays a diffeomorphism of the disk.

# %%
candidates = {
    "identity": circle_map_from_argument(lambda t: t),
    "rotation": FourierSeries.from_function(lambda mu: np.exp(1j * np.pi / 3) * mu),
    "blaschke": FourierSeries.from_function(lambda mu: (mu - 0.3) / (1 - 0.3 * mu)),
    "t + 0.3 sin 2t": circle_map_from_argument(lambda t: t + 0.3 * np.sin(2 * t)),
}
for name, psi in candidates.items():
    v = circlediff_rigidity(psi)
    print(f"{name:15s} failed: {v.failed or '-'}  min Jacobian {rkc_check(psi, 48, 48).min_jacobian:.3f}")
