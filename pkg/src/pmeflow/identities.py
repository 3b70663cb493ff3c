"""Numerical verification of the evolution identities behind the estimates.

Every check evaluates the two sides of one displayed identity on a stored
trajectory with deliberately independent routes: the left side only
differences stored fields in time, the right side is assembled from
geometric primitives, and the only shared intermediate is the pressure
itself.  A transcription error in any term breaks the measured convergence
order, which is the property the suite certifies.

Residuals are measured over interior space-time nodes only (two nodes away
from the poles, two stored times away from the ends) so one-sided stencils
do not pollute the order measurement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    ManifoldKind,
    ManifoldState,
    as_values,
    gradient_inner,
    gradient_norm_sq,
    hessian_norm_sq,
    laplacian,
    ricci_quadratic,
)
from .history import (
    curvature_rate_history,
    grad_inner_history,
    grad_sq_history,
    hessian_sq_history,
    lap_history,
    metric_stacks,
    ricci_norm_sq_history,
    ricci_quad_history,
    ricci_hessian_history,
)
from .pme import time_derivative


@dataclass
class IdentityResidual:
    """Worst interior residual of one identity at one resolution."""

    identity_id: str
    max_abs_residual: float
    resolution: int
    dt: float
    measured_order: float = None   # filled when >= 2 resolutions were run

    def as_dict(self) -> dict:
        return {
            "identity_id": self.identity_id,
            "max_abs_residual": self.max_abs_residual,
            "resolution": self.resolution,
            "dt": self.dt,
            "measured_order": self.measured_order,
        }


def _interior_nodes(kind: ManifoldKind):
    return slice(None) if kind is ManifoldKind.FLAT_TORUS else slice(2, -2)


def _interior_max(traj, resid) -> float:
    if resid.shape[0] < 5:
        raise ValueError("need at least five stored times for interior residuals")
    sub = resid[2:-2, _interior_nodes(traj.kind)]
    return float(np.max(np.abs(sub)))


def _residual(traj, identity_id, resid) -> IdentityResidual:
    return IdentityResidual(
        identity_id=identity_id,
        max_abs_residual=_interior_max(traj, resid),
        resolution=traj.states[0].resolution,
        dt=float(traj.times[1] - traj.times[0]),
    )


def parabolic_operator(traj, hist) -> np.ndarray:
    """The linearizing operator d/dt - (p-1) v Lap applied to a field history."""
    hist = np.asarray(hist, dtype=float)
    return time_derivative(hist, traj.times) \
        - (traj.p - 1) * traj.v * lap_history(traj, hist)


def quotient_rule_residual(traj, f_hist, g_hist) -> IdentityResidual:
    """Product/quotient rule of the parabolic operator on f/g (g > 0)."""
    f_hist = np.asarray(f_hist, dtype=float)
    g_hist = np.asarray(g_hist, dtype=float)
    if np.any(g_hist <= 0):
        raise ValueError("denominator history must be positive")
    q = f_hist / g_hist
    lhs = parabolic_operator(traj, q)
    rhs = (parabolic_operator(traj, f_hist) / g_hist
           - (f_hist / g_hist ** 2) * parabolic_operator(traj, g_hist)
           + 2 * (traj.p - 1) * traj.v
           * grad_inner_history(traj, q, np.log(g_hist)))
    return _residual(traj, "quotient_rule", lhs - rhs)


def _core_fields(traj, b, c):
    """Shared ingredients of the evolution checks, geometry route only."""
    p, a = traj.p, traj.a
    stacks = metric_stacks(traj)
    v = traj.v
    r = traj.r_history
    gsq = grad_sq_history(traj, stacks=stacks)
    lap_v = lap_history(traj, v, stacks=stacks)
    f_exp = -b * (p - 1) * lap_v + (1 - b) * gsq / v - a * b * (p - 1) * r + c * r / v
    return {
        "stacks": stacks, "v": v, "r": r, "gsq": gsq, "lap_v": lap_v,
        "f_exp": f_exp,
        "rt": curvature_rate_history(traj),
        "rg": grad_inner_history(traj, r, v, stacks=stacks),
        "rq": ricci_quad_history(traj, v, stacks=stacks),
        "rh": ricci_hessian_history(traj, v, stacks=stacks),
        "h2": hessian_sq_history(traj, v, stacks=stacks),
        "rc2": ricci_norm_sq_history(traj),
        "grad_f_v": grad_inner_history(traj, f_exp, v, stacks=stacks),
    }


def _f_direct(traj, b, c):
    gsq = grad_sq_history(traj)
    return gsq / traj.v - b * traj.v_t / traj.v + c * traj.r_history / traj.v


def harnack_evolution_residual(traj, b: float, c: float) -> IdentityResidual:
    """Evolution identity of the Harnack quantity for free coefficients.

    Valid on trajectories of u_t = Lap(u^p) + a R u for any forcing
    coefficient a (taken from the trajectory); b and c are free.
    """
    p, a = traj.p, traj.a
    g = _core_fields(traj, b, c)
    v, r, gsq, lap_v = g["v"], g["r"], g["gsq"], g["lap_v"]
    lhs = parabolic_operator(traj, _f_direct(traj, b, c))
    rhs = (2 * p * g["grad_f_v"]
           + (c * g["rt"] - 2 * c * g["rg"] + 2 * (1 - b) * g["rq"]) / v
           - (p - 1) * ((a * b + c) * g["rt"] - 2 * a * g["rg"] + 2 * g["rq"])
           - 2 * (p - 1) * g["h2"] - 2 * b * (p - 1) * g["rh"]
           + 2 * c * (p - 1) * g["rc2"]
           - b * (p - 1) ** 2 * lap_v ** 2
           + 2 * (1 - b) * (p - 1) * (gsq / v) * lap_v
           - a * b * (p - 1) ** 2 * r * lap_v
           + a * (1 - b) * (p - 1) * (gsq / v) * r
           + (1 - b) * gsq ** 2 / v ** 2
           + c * (gsq / v ** 2) * r
           - a * c * (p - 1) * r ** 2 / v)
    return _residual(traj, "harnack_evolution", lhs - rhs)


def harnack_evolution_grouped_residual(traj, b: float) -> IdentityResidual:
    """Same identity in its completed-square grouping (forcing a = 1, c = 1-b).

    Coded independently of :func:`harnack_evolution_residual`; the two right
    sides are algebraically identical, so on one trajectory they must agree
    to roundoff, which the tests assert.
    """
    if traj.a != 1.0:
        raise ValueError("the grouped form assumes the mass-conserving forcing a = 1")
    if b == 0:
        raise ValueError("b must be nonzero")
    p = traj.p
    c = 1.0 - b
    g = _core_fields(traj, b, c)
    v, r, gsq = g["v"], g["r"], g["gsq"]
    f_exp = g["f_exp"]
    y = gsq / v + r / v
    lhs = parabolic_operator(traj, _f_direct(traj, b, c))
    completed_sq = g["h2"] + b * g["rh"] + (b * b / 4) * g["rc2"]
    rhs = (2 * p * g["grad_f_v"]
           - ((b - 1) / v + (p - 1)) * (g["rt"] - 2 * g["rg"] + 2 * g["rq"])
           - 2 * (p - 1) * completed_sq
           + ((b - 2) ** 2 / 2) * (p - 1) * g["rc2"]
           - f_exp ** 2 / b
           - ((p - 1) * r + (2 * (b - 1) / b) * (r / v)) * f_exp
           - ((b - 1) / b) * y ** 2
           - ((b - 1) * (b - 2) / b) * y * r / v)
    return _residual(traj, "harnack_evolution_grouped", lhs - rhs)


def bochner_residual(f, state: ManifoldState) -> IdentityResidual:
    """Bochner formula residual for one field on one state."""
    vals = as_values(f, state)
    lhs = laplacian(gradient_norm_sq(vals, state).values, state).values
    rhs = (2 * gradient_inner(laplacian(vals, state).values, vals, state).values
           + 2 * hessian_norm_sq(vals, state).values
           + 2 * ricci_quadratic(vals, state).values)
    resid = lhs - rhs
    sub = resid[_interior_nodes(state.kind)]
    return IdentityResidual("bochner", float(np.max(np.abs(sub))),
                            state.resolution, 0.0)


def split_residual(traj, b: float):
    """Consistency of the spatial/temporal split of the Harnack quantity.

    Returns (algebraic split residual, pressure-equation form residual);
    the first is pure algebra and must sit at roundoff, the second holds for
    the mass-conserving forcing and carries discretization error.
    """
    v, r = traj.v, traj.r_history
    gsq = grad_sq_history(traj)
    y = gsq / v + r / v
    z = traj.v_t / v + r / v
    first = _residual(traj, "split", _f_direct(traj, b, 1.0 - b) - (y - b * z))
    second = None
    if traj.a == 1.0:
        p = traj.p
        lap_v = lap_history(traj, v)
        second = _residual(traj, "split_pressure_form",
                           (y - z) + (p - 1) * lap_v + (p - 1) * r)
    return first, second


def pressure_evolution_residual(traj) -> IdentityResidual:
    """Cached v_t against the pressure evolution equation right side."""
    p, a = traj.p, traj.a
    v, r = traj.v, traj.r_history
    rhs = (p - 1) * v * lap_history(traj, v) + grad_sq_history(traj) \
        + a * (p - 1) * r * v
    return _residual(traj, "pressure_evolution", traj.v_t - rhs)


def convergence_orders(residuals, refinement: float = 2.0):
    """Observed orders between successive residuals under grid refinement."""
    res = [float(x) for x in residuals]
    if len(res) < 2:
        raise ValueError("need residuals from at least two resolutions")
    out = []
    for coarse, fine in zip(res[:-1], res[1:]):
        if fine <= 0:
            out.append(math.inf)
        else:
            out.append(math.log(coarse / fine) / math.log(refinement))
    return out
