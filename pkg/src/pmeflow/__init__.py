"""Porous medium equation coupled to Ricci flow on model manifolds.

The package simulates the forced nonlinear diffusion u_t = Lap(u^p) + R u on
metrics evolving by Ricci flow, and certifies the differential Harnack
estimates, evolution identities and conservation laws that the combination
satisfies, at desk scale and with measured convergence orders.
"""

__version__ = "0.1.0"

from . import geometry, harnack, history, identities, pme, ricci_flow  # noqa: F401
from .geometry import (  # noqa: F401
    ManifoldKind,
    ManifoldState,
    ScalarField,
    flat_torus,
    round_sphere,
    rotsym_surface,
)
