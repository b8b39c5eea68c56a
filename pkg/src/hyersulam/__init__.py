"""Hyers-Ulam stability of approximate homomorphisms between Hilbert C*-modules.

Elements of the algebra M_k(C) are ``(..., k, k)`` complex arrays; elements of
the standard module of rank n are ``(..., n, k, k)`` arrays.
"""

from .control import (
    ControlFunction,
    Direction,
    bound_constant,
    check_domination,
    custom_control,
    power_control,
)
from .cstar import AlgebraDescriptor, operator_norm
from .fixed_point import ContractionOperator, MapPoint, dm_iterate, verify_dm_conclusions
from .maps import (
    ApproxMap,
    Bump,
    ConstantShift,
    HomomorphismSpec,
    Homogeneous,
    build_homomorphism,
    build_perturbed,
    certify,
)
from .module import ModuleDescriptor, check_axioms, inner_product, module_action, norm_of, probe_set
from .stabilizer import (
    approximant,
    check_linearity,
    defect_decay,
    stabilize,
    verify_error_bound,
    write_csv,
)

__version__ = "0.1.0"
