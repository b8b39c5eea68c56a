"""
A perturbation that meets the error bound exactly
=================================================

A constant shift ``f(x) = x + c`` satisfies the additive hypothesis with
the constant control ``phi = theta (||x||^0 + ||y||^0) = 2 theta`` as an
equality when ``||c|| = 2 theta``.  The expanding iteration
``H_n(x) = f(2^n x) / 2^n = x + c / 2^n`` then approaches ``H = id`` and the
distance ``||f - H_n|| = ||c|| (1 - 2^-n)`` climbs to the bound.
"""

# %%
# Build the map and the control.
from hyersulam import (
    ConstantShift,
    HomomorphismSpec,
    ModuleDescriptor,
    build_perturbed,
    power_control,
    probe_set,
    stabilize,
    verify_error_bound,
)
from hyersulam.module import random_unit_element

desc = ModuleDescriptor(dim=2, rank=2)
phi = power_control(theta=0.15, p=0.0, direction="expand")
c = 0.3 * random_unit_element(desc, seed=1)
f = build_perturbed(HomomorphismSpec(), ConstantShift(c), phi, desc)

# %%
# Run thirty steps over 200 probes spread across four decades of norm.
probes = probe_set(desc, 200)
result = stabilize(f, phi, N=30, probes=probes)

for rec in result.records[::5]:
    print(f"n={rec.n:2d}  increment={rec.sup_cauchy_increment:.3e}  "
          f"additive={rec.sup_additive_defect:.3e}  distance={rec.sup_distance_to_f:.12f}")

# %%
# The bound constant is 1 / (2 - 2L) = 1 at L = 1/2, so the bound is phi(x, x) = 0.3.
report = verify_error_bound(result, phi)
print("bound holds:", report.passed, " tightness:", round(report.tightness, 12))
