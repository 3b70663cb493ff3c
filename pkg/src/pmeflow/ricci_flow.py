"""Ricci flow on the model families, plus the flow-side estimate machinery.

The flat torus is a fixed point.  The round sphere evolves exactly:
rho^2(t) = rho_0^2 - 2(n-1) t, extinct at rho_0^2 / (2(n-1)).  The
rotationally symmetric surface evolves conformally (in dimension two
Ric = (R/2) g): each step integrates the conformal log-factor with RK4
relative to the current metric, so positivity of the metric is automatic
and the pole closure is preserved exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    ManifoldKind,
    ManifoldState,
    ScalarField,
    _lap_surface,
    _scalar_curvature_values,
    field_on,
    as_values,
    flat_torus,
    gradient_inner,
    laplacian,
    ricci_norm_sq,
    ricci_quadratic,
    rotsym_surface,
    round_sphere,
    scalar_curvature,
)

CFL_FLOW = 0.2
TOL_HYP = 1e-8


class ExtinctionError(RuntimeError):
    """The requested step would run the metric past its extinction time."""


class CflError(RuntimeError):
    """The requested step violates the stability restriction."""


def extinction_time(state: ManifoldState) -> float:
    """Time at which the metric ceases to exist (inf for the torus/surface)."""
    if state.kind is ManifoldKind.ROUND_SPHERE:
        return state.time + state.rho_sq / (2 * (state.n - 1))
    return float("inf")


def flow_cfl_limit(state: ManifoldState) -> float:
    """Largest admissible flow step for the explicit surface update."""
    if state.kind is not ManifoldKind.ROTSYM_SURFACE:
        return float("inf")
    r_max = float(np.max(np.abs(_scalar_curvature_values(state))))
    h2 = state.h * state.h
    diffusive = CFL_FLOW * h2 * float(np.min(state.m)) ** 2
    if r_max == 0.0:
        return diffusive
    return min(CFL_FLOW * h2 / r_max, diffusive)


def _surface_step(state: ManifoldState, dt: float) -> ManifoldState:
    r0 = _scalar_curvature_values(state)

    def rhs(phi):
        # d(phi)/dt = -R/2 with R = exp(-2 phi) (R0 - 2 Lap0 phi) relative
        # to the step's base metric
        return -0.5 * np.exp(-2 * phi) * (r0 - 2 * _lap_surface(phi, state.h, state.w, state.m))

    zero = np.zeros(state.num_nodes)
    k1 = rhs(zero)
    k2 = rhs(0.5 * dt * k1)
    k3 = rhs(0.5 * dt * k2)
    k4 = rhs(dt * k3)
    phi = (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    scale = np.exp(phi)
    if not np.all(np.isfinite(scale)):
        raise CflError("surface flow step produced non-finite metric")
    return rotsym_surface(state.w * scale, state.m * scale, time=state.time + dt)


def evolve_metric(state: ManifoldState, dt: float) -> ManifoldState:
    """Advance the metric by one step of Ricci flow."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if state.kind is ManifoldKind.FLAT_TORUS:
        return flat_torus(state.resolution, state.lengths, time=state.time + dt)
    if state.kind is ManifoldKind.ROUND_SPHERE:
        rho_sq = state.rho_sq - 2 * (state.n - 1) * dt
        if rho_sq <= 0:
            raise ExtinctionError(
                f"extinction at t = {extinction_time(state):.6g}, "
                f"requested t = {state.time + dt:.6g}"
            )
        return round_sphere(state.n, rho_sq, state.resolution, time=state.time + dt)
    limit = flow_cfl_limit(state)
    if dt > limit:
        raise CflError(f"flow step {dt:.3g} exceeds the stability limit {limit:.3g}")
    return _surface_step(state, dt)


def interpolate_state(a: ManifoldState, b: ManifoldState, frac: float = 0.5) -> ManifoldState:
    """Metric at an intermediate time, for use at Runge-Kutta stages.

    The sphere interpolation is exact (rho^2 is linear in t); the surface is
    interpolated geometrically, preserving positivity to O(dt^2).
    """
    if a.kind is not b.kind:
        raise ValueError("cannot interpolate between different manifold kinds")
    t = (1 - frac) * a.time + frac * b.time
    if a.kind is ManifoldKind.FLAT_TORUS:
        return flat_torus(a.resolution, a.lengths, time=t)
    if a.kind is ManifoldKind.ROUND_SPHERE:
        rho_sq = (1 - frac) * a.rho_sq + frac * b.rho_sq
        return round_sphere(a.n, rho_sq, a.resolution, time=t)
    w = a.w ** (1 - frac) * b.w ** frac
    w = np.where((a.w == 0) | (b.w == 0), 0.0, w)
    m = a.m ** (1 - frac) * b.m ** frac
    return rotsym_surface(w, m, time=t)


@dataclass(frozen=True)
class MetricHistory:
    """A pure metric trajectory (no solution field attached)."""

    states: tuple
    times: np.ndarray

    @property
    def r_history(self) -> np.ndarray:
        return np.stack([_scalar_curvature_values(s) for s in self.states])


def flow_history(state: ManifoldState, dt: float, steps: int, store_every: int = 1) -> MetricHistory:
    """Run the flow for ``steps`` steps, storing every ``store_every``-th state."""
    states = [state]
    cur = state
    for k in range(steps):
        cur = evolve_metric(cur, dt)
        if (k + 1) % store_every == 0:
            states.append(cur)
    return MetricHistory(tuple(states), np.array([s.time for s in states]))


@dataclass(frozen=True)
class FlowHypothesisReport:
    """Outcome of scanning curvature bounds over a stored trajectory."""

    r_min: float
    r_max: float
    curvature_nonneg: bool
    pre_extinction: bool

    @property
    def satisfied(self) -> bool:
        return self.curvature_nonneg and self.pre_extinction


def _states_and_r(traj):
    states = tuple(traj.states)
    if not states:
        raise ValueError("empty trajectory")
    r = getattr(traj, "r_history", None)
    if r is None:
        r = np.stack([_scalar_curvature_values(s) for s in states])
    return states, np.asarray(r)


def verify_hypotheses(traj) -> FlowHypothesisReport:
    """Check bounded nonnegative curvature over all stored states.

    For the two-dimensional families R >= 0 is equivalent to nonnegativity of
    the curvature operator; the exact sphere satisfies it automatically.
    """
    states, r = _states_and_r(traj)
    r_min = float(np.min(r))
    r_max = float(np.max(r))
    pre_ext = all(
        s.kind is not ManifoldKind.ROUND_SPHERE or s.rho_sq > 0 for s in states
    )
    return FlowHypothesisReport(
        r_min=r_min,
        r_max=r_max,
        curvature_nonneg=bool(r_min >= -TOL_HYP),
        pre_extinction=pre_ext,
    )


def curvature_rate(state: ManifoldState):
    """Analytic dR/dt where available (torus, sphere); None on surfaces."""
    if state.kind is ManifoldKind.FLAT_TORUS:
        return np.zeros(state.num_nodes)
    if state.kind is ManifoldKind.ROUND_SPHERE:
        r = state.n * (state.n - 1) / state.rho_sq
        return np.full(state.num_nodes, 2 * r * r / state.n)
    return None


def _interior(kind: ManifoldKind):
    """Nodes away from the one-sided pole stencils."""
    return slice(None) if kind is ManifoldKind.FLAT_TORUS else slice(2, -2)


def scalar_evolution_residual(traj) -> float:
    """Worst deviation from dR/dt = Lap R + 2 |Ric|^2 over interior nodes/times."""
    states, r = _states_and_r(traj)
    times = np.asarray(traj.times, dtype=float)
    if len(states) < 5:
        raise ValueError("need at least five stored states")
    kind = states[0].kind
    sl = _interior(kind)
    worst = 0.0
    for k in range(2, len(states) - 2):
        s = states[k]
        rate = curvature_rate(s)
        if rate is None:
            rate = (r[k + 1] - r[k - 1]) / (times[k + 1] - times[k - 1])
        resid = rate - laplacian(r[k], s).values - 2 * ricci_norm_sq(s).values
        worst = max(worst, float(np.max(np.abs(resid[sl]))))
    return worst


def trace_harnack(state: ManifoldState, potential=None, t: float = None,
                  dr_dt=None) -> ScalarField:
    """Hamilton's trace quantity t dR/dt + R + 2t <grad R, V> + 2t Ric(V, V).

    ``potential`` is the scalar whose gradient is the vector field V; pass
    the negated pressure to obtain the quantity used by the coupled
    estimates.  Nonnegative on flows with bounded nonnegative curvature
    operator for t > 0.
    """
    t = state.time if t is None else float(t)
    if t <= 0:
        raise ValueError("the trace quantity needs t > 0")
    if dr_dt is None:
        dr_dt = curvature_rate(state)
        if dr_dt is None:
            raise ValueError("surfaces need an explicit dR/dt (time-differenced)")
    r = _scalar_curvature_values(state)
    q = t * np.asarray(dr_dt, dtype=float) + r
    if potential is not None:
        psi = as_values(potential, state)
        q = q + 2 * t * gradient_inner(r, psi, state).values
        q = q + 2 * t * ricci_quadratic(psi, state).values
    return field_on(state, q)


def trace_harnack_min(traj, t_min: float = 0.0):
    """Minimum of the trace quantity with V = -grad(pressure) over a trajectory.

    Returns ``(min_value, (node_index, time))`` scanned over interior nodes
    and stored times in (max(t_min, 0), T]; surface dR/dt is obtained by
    centered differencing of the stored curvature history.
    """
    states, r = _states_and_r(traj)
    times = np.asarray(traj.times, dtype=float)
    v = np.asarray(traj.v, dtype=float)
    kind = states[0].kind
    sl = _interior(kind)
    numeric_rate = curvature_rate(states[0]) is None
    best = None
    for k, s in enumerate(states):
        if times[k] <= max(t_min, 0.0):
            continue
        if numeric_rate:
            if k == 0 or k == len(states) - 1:
                continue
            rate = (r[k + 1] - r[k - 1]) / (times[k + 1] - times[k - 1])
        else:
            rate = curvature_rate(s)
        q = trace_harnack(s, potential=-v[k], t=times[k], dr_dt=rate).values[sl]
        idx = int(np.argmin(q))
        if best is None or q[idx] < best[0]:
            offset = sl.start or 0
            best = (float(q[idx]), (idx + offset, float(times[k])))
    if best is None:
        raise ValueError("no stored times above t_min")
    return best
