"""
The same limit seen as a fixed point
====================================

The map ``J g(x) = g(2x) / 2`` is a strict contraction for the probe metric
``d(g, h) = max ||g(x) - h(x)|| / phi(x, x)``.  Iterating it from ``f``
retraces the Hyers approximants bit for bit and comes with an a priori
certificate ``d(f, y*) <= d(f, Jf) / (1 - L)``.
"""

# %%
import numpy as np

from hyersulam import (
    Bump,
    ContractionOperator,
    MapPoint,
    ModuleDescriptor,
    approximant,
    build_perturbed,
    dm_iterate,
    power_control,
    probe_set,
    verify_dm_conclusions,
)
from hyersulam.maps import random_homomorphism_spec

desc = ModuleDescriptor(dim=2, rank=2)
phi = power_control(theta=0.1, p=0.5, direction="expand")
base = random_homomorphism_spec(desc, seed=4)
f = build_perturbed(base, Bump(seed=1), phi, desc)
g = build_perturbed(base, Bump(seed=2), phi, desc)
J = ContractionOperator.for_control(phi)
probes = probe_set(desc, 24)

# %%
# Distances are taken on the probes closed under a few doublings, where J
# contracts exactly.
a = dm_iterate(MapPoint(f), J, phi, probes, closure_depth=8)
b = dm_iterate(MapPoint(g), J, phi, probes, closure_depth=8)
print("step distances:", [f"{d:.3g}" for d in a.distances])
print("d(f, y*) =", a.measured, "<= certificate", a.certificate_bound)
print(verify_dm_conclusions(a, b).to_dict())

# %%
# J^5 f agrees with the fifth Hyers approximant exactly.
h = MapPoint(f)
for _ in range(5):
    h = J(h)
print("bitwise equal:", np.array_equal(h(probes), approximant(f, 5, "expand", probes)))
