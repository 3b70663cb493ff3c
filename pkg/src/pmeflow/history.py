"""Vectorized geometric operators over a whole stored trajectory.

Field histories are (num_times, num_nodes) arrays; the per-time metric data
is stacked once and the stencil kernels broadcast over the leading axis, so
estimate and identity scans stay cheap even with thousands of stored states.
"""

from __future__ import annotations

import numpy as np

from .geometry import (
    ManifoldKind,
    _cot_interior,
    _d1_bounded,
    _d1_periodic,
    _hessian_sphere,
    _hessian_surface,
    _lap_sphere,
    _lap_surface,
    _lap_torus,
)


def metric_stacks(traj) -> dict:
    """Per-time metric coefficient arrays for a trajectory or metric history."""
    states = traj.states
    kind = states[0].kind
    if kind is ManifoldKind.ROUND_SPHERE:
        return {"rho_sq": np.array([s.rho_sq for s in states])[:, None]}
    if kind is ManifoldKind.ROTSYM_SURFACE:
        return {"w": np.stack([s.w for s in states]),
                "m": np.stack([s.m for s in states])}
    return {}


def lap_history(traj, hist, stacks=None) -> np.ndarray:
    """Laplace-Beltrami of a field history on the evolving metric."""
    s0 = traj.states[0]
    hist = np.asarray(hist, dtype=float)
    if s0.kind is ManifoldKind.FLAT_TORUS:
        return _lap_torus(hist, s0.h)
    stacks = metric_stacks(traj) if stacks is None else stacks
    if s0.kind is ManifoldKind.ROUND_SPHERE:
        return _lap_sphere(hist, s0.h, s0.n, _cot_interior(s0.grid), stacks["rho_sq"])
    return _lap_surface(hist, s0.h, stacks["w"], stacks["m"])


def grad_inner_history(traj, f_hist, g_hist, stacks=None) -> np.ndarray:
    """<grad f, grad g> along the trajectory."""
    s0 = traj.states[0]
    f_hist = np.asarray(f_hist, dtype=float)
    g_hist = np.asarray(g_hist, dtype=float)
    if s0.kind is ManifoldKind.FLAT_TORUS:
        return _d1_periodic(f_hist, s0.h) * _d1_periodic(g_hist, s0.h)
    stacks = metric_stacks(traj) if stacks is None else stacks
    prod = _d1_bounded(f_hist, s0.h) * _d1_bounded(g_hist, s0.h)
    if s0.kind is ManifoldKind.ROUND_SPHERE:
        return prod / stacks["rho_sq"]
    return prod / stacks["m"] ** 2


def grad_sq_history(traj, hist=None, stacks=None) -> np.ndarray:
    """|grad f|^2 along the trajectory (defaults to the pressure history)."""
    hist = traj.v if hist is None else hist
    return grad_inner_history(traj, hist, hist, stacks=stacks)


def hessian_sq_history(traj, hist, stacks=None) -> np.ndarray:
    """Squared Frobenius norm of the Hessian along the trajectory."""
    s0 = traj.states[0]
    hist = np.asarray(hist, dtype=float)
    if s0.kind is ManifoldKind.FLAT_TORUS:
        from .geometry import _d2_periodic
        return _d2_periodic(hist, s0.h) ** 2
    stacks = metric_stacks(traj) if stacks is None else stacks
    if s0.kind is ManifoldKind.ROUND_SPHERE:
        rad, ang = _hessian_sphere(hist, s0.h, _cot_interior(s0.grid), stacks["rho_sq"])
    else:
        rad, ang = _hessian_surface(hist, s0.h, stacks["w"], stacks["m"])
    return rad ** 2 + (s0.n - 1) * ang ** 2


def ricci_quad_history(traj, hist, stacks=None) -> np.ndarray:
    """Ric(grad f, grad f) along the trajectory."""
    s0 = traj.states[0]
    if s0.kind is ManifoldKind.FLAT_TORUS:
        return np.zeros_like(np.asarray(hist, dtype=float))
    return (traj.r_history / s0.n) * grad_inner_history(traj, hist, hist, stacks=stacks)


def ricci_hessian_history(traj, hist, stacks=None) -> np.ndarray:
    """Ric : Hess f along the trajectory."""
    s0 = traj.states[0]
    if s0.kind is ManifoldKind.FLAT_TORUS:
        return np.zeros_like(np.asarray(hist, dtype=float))
    return (traj.r_history / s0.n) * lap_history(traj, hist, stacks=stacks)


def ricci_norm_sq_history(traj) -> np.ndarray:
    """|Ric|^2 along the trajectory."""
    s0 = traj.states[0]
    if s0.kind is ManifoldKind.FLAT_TORUS:
        return np.zeros_like(traj.r_history)
    return traj.r_history ** 2 / s0.n


def curvature_rate_history(traj) -> np.ndarray:
    """dR/dt along the trajectory: exact on sphere/torus, differenced on surfaces."""
    from .pme import time_derivative
    s0 = traj.states[0]
    if s0.kind is ManifoldKind.FLAT_TORUS:
        return np.zeros_like(traj.r_history)
    if s0.kind is ManifoldKind.ROUND_SPHERE:
        return 2.0 * traj.r_history ** 2 / s0.n
    return time_derivative(traj.r_history, traj.times)
