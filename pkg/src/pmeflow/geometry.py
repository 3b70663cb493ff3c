"""Model manifolds with one-dimensional symmetry and their discrete operators.

Three families are supported, each reduced to a single coordinate:

* ``FLAT_TORUS``   -- flat n-torus, fields depend on the first coordinate only,
  grid of ``resolution`` points on [0, L) with periodic wrap.
* ``ROUND_SPHERE`` -- round n-sphere of radius rho, metric rho^2 times the unit
  round metric, fields depend on the polar angle theta in [0, pi].
* ``ROTSYM_SURFACE`` -- rotationally symmetric 2-surface with metric
  m(s)^2 ds^2 + w(s)^2 dphi^2 on the fixed chart s in [0, pi].  A freshly
  constructed surface has m = 1 (arc-length profile); the radial coefficient
  m is carried explicitly because the conformal Ricci flow scales both
  coefficients and the chart then ceases to be arc length.

All operators use centered second-order stencils in the interior.  At the
poles of the sphere/surface the singular first-order terms are replaced by
their smooth-closure limits (Laplacian -> n * f'' at a sphere pole, 2 * f''
on a surface); the pole second derivative uses the even-reflection ghost
stencil, which is second-order for smooth symmetric data and keeps explicit
time stepping stable.  All stencils are written in neighbor-difference form
so that spatially uniform fields differentiate to exact floating-point zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

MIN_RESOLUTION = 16


class ManifoldKind(Enum):
    FLAT_TORUS = "flat_torus"
    ROUND_SPHERE = "round_sphere"
    ROTSYM_SURFACE = "rotsym_surface"


def _readonly(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ManifoldState:
    """Immutable snapshot of a model manifold at one time.

    Use the constructors :func:`flat_torus`, :func:`round_sphere` and
    :func:`rotsym_surface` rather than instantiating directly.
    """

    kind: ManifoldKind
    n: int
    grid: np.ndarray
    time: float = 0.0
    lengths: tuple = ()          # FLAT_TORUS side lengths
    rho_sq: float = 0.0          # ROUND_SPHERE conformal factor rho^2
    w: np.ndarray = field(default=None, repr=False)   # ROTSYM_SURFACE warp
    m: np.ndarray = field(default=None, repr=False)   # ROTSYM_SURFACE radial coeff

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("dimension must be >= 1")
        if self.time < 0:
            raise ValueError("time must be >= 0")
        if self.resolution < MIN_RESOLUTION:
            raise ValueError(f"need at least {MIN_RESOLUTION} grid intervals")
        if self.kind is ManifoldKind.ROUND_SPHERE:
            if self.n < 2:
                raise ValueError("round sphere needs n >= 2")
            if self.rho_sq <= 0:
                raise ValueError("rho^2 must be positive (pre-extinction)")
        if self.kind is ManifoldKind.FLAT_TORUS:
            if len(self.lengths) != self.n:
                raise ValueError("need one side length per dimension")
            if any(L <= 0 for L in self.lengths):
                raise ValueError("side lengths must be positive")
        if self.kind is ManifoldKind.ROTSYM_SURFACE:
            _validate_surface_profile(self.w, self.m, self.h)

    @property
    def num_nodes(self) -> int:
        return self.grid.size

    @property
    def resolution(self) -> int:
        """Number of grid intervals."""
        if self.kind is ManifoldKind.FLAT_TORUS:
            return self.grid.size
        return self.grid.size - 1

    @property
    def h(self) -> float:
        return float(self.grid[1] - self.grid[0])

    @property
    def periodic(self) -> bool:
        return self.kind is ManifoldKind.FLAT_TORUS


def _validate_surface_profile(w, m, h):
    if w is None or m is None:
        raise ValueError("rotationally symmetric surface needs w and m arrays")
    if w.shape != m.shape:
        raise ValueError("w and m must have the same shape")
    if abs(w[0]) > 1e-12 or abs(w[-1]) > 1e-12:
        raise ValueError("warp must vanish at both poles")
    if np.any(w[1:-1] <= 0):
        raise ValueError("warp must be positive in the interior")
    if np.any(m <= 0):
        raise ValueError("radial coefficient must be positive")
    # smooth closure: |dw/ds| = 1 at the poles, where ds = m * dchart
    wl = (-3 * w[0] + 4 * w[1] - w[2]) / (2 * h) / m[0]
    wr = (3 * w[-1] - 4 * w[-2] + w[-3]) / (2 * h) / m[-1]
    tol = max(1e-6, 20 * h * h)
    if abs(wl - 1.0) > tol or abs(wr + 1.0) > tol:
        raise ValueError(
            f"profile closes unsmoothly at the poles: dw/ds = {wl:.6g}, {wr:.6g}"
        )


def flat_torus(resolution: int, lengths=(2 * math.pi,), time: float = 0.0) -> ManifoldState:
    """Flat torus with the given side lengths; fields vary along the first side."""
    lengths = tuple(float(L) for L in lengths)
    grid = _readonly(np.arange(resolution) * (lengths[0] / resolution))
    return ManifoldState(ManifoldKind.FLAT_TORUS, len(lengths), grid,
                         time=time, lengths=lengths)


def round_sphere(n: int, rho_sq: float, resolution: int, time: float = 0.0) -> ManifoldState:
    """Round n-sphere with metric rho^2 times the unit round metric."""
    grid = _readonly(np.linspace(0.0, math.pi, resolution + 1))
    return ManifoldState(ManifoldKind.ROUND_SPHERE, n, grid,
                         time=time, rho_sq=float(rho_sq))


def rotsym_surface(w, m=None, time: float = 0.0) -> ManifoldState:
    """Surface of revolution from nodal warp values on a uniform [0, pi] chart.

    ``w`` gives the radius of the circle of revolution per node; ``m`` the
    radial metric coefficient (defaults to 1, i.e. the chart is arc length).
    """
    w = _readonly(w)
    m = _readonly(np.ones_like(w) if m is None else m)
    grid = _readonly(np.linspace(0.0, math.pi, w.size))
    return ManifoldState(ManifoldKind.ROTSYM_SURFACE, 2, grid, time=time, w=w, m=m)


@dataclass(frozen=True)
class ScalarField:
    """Real values on the grid of one ManifoldState."""

    values: np.ndarray
    parent: ManifoldState

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.shape != (self.parent.num_nodes,):
            raise ValueError(
                f"field has {self.values.shape} values for a grid of "
                f"{self.parent.num_nodes} nodes"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")

    def __array__(self, dtype=None):
        return np.asarray(self.values, dtype=dtype)

    def __len__(self):
        return self.values.size


def field_on(state: ManifoldState, values) -> ScalarField:
    return ScalarField(np.asarray(values, dtype=float), state)


def as_values(f, state: ManifoldState) -> np.ndarray:
    """Accept a ScalarField or a bare array, validated against ``state``."""
    if isinstance(f, ScalarField):
        if f.parent.num_nodes != state.num_nodes:
            raise ValueError("field lives on a different grid")
        values = f.values
    else:
        values = np.asarray(f, dtype=float)
        if values.shape[-1] != state.num_nodes:
            raise ValueError(
                f"expected {state.num_nodes} nodal values, got {values.shape[-1]}"
            )
    if not np.all(np.isfinite(values)):
        raise ValueError("field contains non-finite values")
    return values


# ---------------------------------------------------------------------------
# stencils; all act on the last axis so field histories (K, N) broadcast

def _d1_periodic(f, h):
    return (np.roll(f, -1, axis=-1) - np.roll(f, 1, axis=-1)) / (2 * h)


def _d2_periodic(f, h):
    up = np.roll(f, -1, axis=-1)
    down = np.roll(f, 1, axis=-1)
    return ((up - f) - (f - down)) / (h * h)


def _d1_bounded(f, h):
    # one-sided second-order stencils at the ends, written as combinations of
    # neighbor differences so that uniform fields differentiate to exact zero
    out = np.empty_like(f)
    out[..., 1:-1] = (f[..., 2:] - f[..., :-2]) / (2 * h)
    out[..., 0] = (-3 * (f[..., 0] - f[..., 1]) + (f[..., 1] - f[..., 2])) / (2 * h)
    out[..., -1] = (3 * (f[..., -1] - f[..., -2]) - (f[..., -2] - f[..., -3])) / (2 * h)
    return out


def _d2_bounded(f, h):
    out = np.empty_like(f)
    out[..., 1:-1] = ((f[..., 2:] - f[..., 1:-1]) - (f[..., 1:-1] - f[..., :-2])) / (h * h)
    out[..., 0] = (2 * (f[..., 0] - f[..., 1]) - 3 * (f[..., 1] - f[..., 2])
                   + (f[..., 2] - f[..., 3])) / (h * h)
    out[..., -1] = (2 * (f[..., -1] - f[..., -2]) - 3 * (f[..., -2] - f[..., -3])
                    + (f[..., -3] - f[..., -4])) / (h * h)
    return out


def _cot_interior(grid):
    """cot(theta) with unused placeholder zeros at the two pole nodes."""
    c = np.zeros_like(grid)
    c[1:-1] = np.cos(grid[1:-1]) / np.sin(grid[1:-1])
    return c


def _d2_pole_even(f, h):
    """Second derivative at the two poles of a field even under reflection.

    Ghost-node form 2 (f_1 - f_0) / h^2: second-order accurate for smooth
    rotationally symmetric scalars, exactly zero on uniform fields, and with
    the diffusive sign that keeps explicit time stepping stable (a genuinely
    one-sided stencil has a positive diagonal there and blows up).
    """
    left = 2 * (f[..., 1] - f[..., 0]) / (h * h)
    right = 2 * (f[..., -2] - f[..., -1]) / (h * h)
    return left, right


# raw-array kernels, shared by the per-state API and the history helpers

def _lap_torus(f, h):
    return _d2_periodic(f, h)


def _lap_sphere(f, h, n, cot, rho_sq):
    d1 = _d1_bounded(f, h)
    d2 = _d2_bounded(f, h)
    out = (d2 + (n - 1) * cot * d1) / rho_sq
    pl, pr = _d2_pole_even(f, h)
    out[..., 0] = n * pl / _last(rho_sq)
    out[..., -1] = n * pr / _last(rho_sq)
    return out


def _lap_surface(f, h, w, m):
    d1 = _d1_bounded(f, h)
    d2 = _d2_bounded(f, h)
    wd = _d1_bounded(w, h)
    md = _d1_bounded(m, h)
    out = np.empty(np.broadcast(f, w).shape)
    coeff = wd[..., 1:-1] / w[..., 1:-1] - md[..., 1:-1] / m[..., 1:-1]
    out[..., 1:-1] = (d2[..., 1:-1] + coeff * d1[..., 1:-1]) / m[..., 1:-1] ** 2
    pl, pr = _d2_pole_even(f, h)
    out[..., 0] = 2 * pl / m[..., 0] ** 2
    out[..., -1] = 2 * pr / m[..., -1] ** 2
    return out


def _last(x):
    """Scalar or per-time column: value aligned with the last node axis."""
    return x if np.ndim(x) == 0 else x[..., -1]


def _metric_arrays(state: ManifoldState):
    if state.kind is ManifoldKind.ROUND_SPHERE:
        return {"cot": _cot_interior(state.grid), "rho_sq": state.rho_sq}
    if state.kind is ManifoldKind.ROTSYM_SURFACE:
        return {"w": state.w, "m": state.m}
    return {}


# ---------------------------------------------------------------------------
# public operators

def laplacian(f, state: ManifoldState) -> ScalarField:
    """Discrete Laplace-Beltrami of a symmetry-reduced field."""
    v = as_values(f, state)
    if state.kind is ManifoldKind.FLAT_TORUS:
        out = _lap_torus(v, state.h)
    elif state.kind is ManifoldKind.ROUND_SPHERE:
        out = _lap_sphere(v, state.h, state.n, _cot_interior(state.grid), state.rho_sq)
    else:
        out = _lap_surface(v, state.h, state.w, state.m)
    return field_on(state, out)


def _grad_inner_values(f, g, state: ManifoldState):
    if state.kind is ManifoldKind.FLAT_TORUS:
        return _d1_periodic(f, state.h) * _d1_periodic(g, state.h)
    df = _d1_bounded(f, state.h)
    dg = _d1_bounded(g, state.h)
    if state.kind is ManifoldKind.ROUND_SPHERE:
        return df * dg / state.rho_sq
    return df * dg / state.m ** 2


def gradient_norm_sq(f, state: ManifoldState) -> ScalarField:
    """|grad f|^2 using the inverse metric."""
    v = as_values(f, state)
    return field_on(state, _grad_inner_values(v, v, state))


def gradient_inner(f, g, state: ManifoldState) -> ScalarField:
    """<grad f, grad g> using the inverse metric."""
    return field_on(
        state, _grad_inner_values(as_values(f, state), as_values(g, state), state)
    )


def _hessian_sphere(f, h, cot, rho_sq):
    d1 = _d1_bounded(f, h)
    d2 = _d2_bounded(f, h)
    pl, pr = _d2_pole_even(f, h)
    rad = d2 / rho_sq
    rad[..., 0] = pl / _last(rho_sq)
    rad[..., -1] = pr / _last(rho_sq)
    ang = np.empty_like(rad)
    ang[..., 1:-1] = cot[1:-1] * d1[..., 1:-1] / rho_sq
    # at the poles every frame direction carries f'' (isotropy limit)
    ang[..., 0] = rad[..., 0]
    ang[..., -1] = rad[..., -1]
    return rad, ang


def _hessian_surface(f, h, w, m):
    d1 = _d1_bounded(f, h)
    d2 = _d2_bounded(f, h)
    pl, pr = _d2_pole_even(f, h)
    md = _d1_bounded(m, h)
    wd = _d1_bounded(w, h)
    rad = (d2 - (md / m) * d1) / m ** 2
    rad[..., 0] = pl / m[..., 0] ** 2
    rad[..., -1] = pr / m[..., -1] ** 2
    ang = np.empty_like(rad)
    ang[..., 1:-1] = wd[..., 1:-1] * d1[..., 1:-1] / (m[..., 1:-1] ** 2 * w[..., 1:-1])
    ang[..., 0] = rad[..., 0]
    ang[..., -1] = rad[..., -1]
    return rad, ang


def _hessian_components(f, state: ManifoldState):
    """Orthonormal-frame Hessian: radial component and the repeated angular one."""
    h = state.h
    if state.kind is ManifoldKind.FLAT_TORUS:
        rad = _d2_periodic(f, h)
        return rad, np.zeros_like(rad)
    if state.kind is ManifoldKind.ROUND_SPHERE:
        return _hessian_sphere(f, h, _cot_interior(state.grid), state.rho_sq)
    return _hessian_surface(f, h, state.w, state.m)


def hessian_norm_sq(f, state: ManifoldState) -> ScalarField:
    """Squared Frobenius norm of the Hessian of a symmetric field."""
    v = as_values(f, state)
    rad, ang = _hessian_components(v, state)
    reps = state.n - 1 if state.kind is not ManifoldKind.FLAT_TORUS else 0
    return field_on(state, rad ** 2 + reps * ang ** 2)


def unit_sphere_area(k: int) -> float:
    """Surface area of the unit k-sphere."""
    return 2 * math.pi ** ((k + 1) / 2) / math.gamma((k + 1) / 2)


def volume_weights(state: ManifoldState) -> np.ndarray:
    """Quadrature weights so that integrate(f) = sum(weights * f)."""
    h = state.h
    if state.kind is ManifoldKind.FLAT_TORUS:
        cross = float(np.prod(state.lengths[1:])) if state.n > 1 else 1.0
        return np.full(state.num_nodes, h * cross)
    if state.kind is ManifoldKind.ROUND_SPHERE:
        dens = (state.rho_sq ** (state.n / 2)
                * np.sin(state.grid) ** (state.n - 1)
                * unit_sphere_area(state.n - 1))
    else:
        dens = 2 * math.pi * state.m * state.w
    wts = dens * h
    wts[0] *= 0.5
    wts[-1] *= 0.5
    return wts


def integrate(f, state: ManifoldState) -> float:
    """Integral of f against the Riemannian volume element (trapezoid rule)."""
    return float(np.dot(volume_weights(state), as_values(f, state)))


def _even_pole_fill(vals):
    """Fill pole entries of an even field by quadratic-in-s^2 extrapolation."""
    vals[..., 0] = (4 * vals[..., 1] - vals[..., 2]) / 3
    vals[..., -1] = (4 * vals[..., -2] - vals[..., -3]) / 3
    return vals


def _scalar_curvature_values(state: ManifoldState):
    if state.kind is ManifoldKind.FLAT_TORUS:
        return np.zeros(state.num_nodes)
    if state.kind is ManifoldKind.ROUND_SPHERE:
        return np.full(state.num_nodes, state.n * (state.n - 1) / state.rho_sq)
    w, m, h = state.w, state.m, state.h
    wd = _d1_bounded(w, h)
    wdd = _d2_bounded(w, h)
    md = _d1_bounded(m, h)
    out = np.empty(state.num_nodes)
    core = wdd[1:-1] - (md[1:-1] / m[1:-1]) * wd[1:-1]
    out[1:-1] = -2 * core / (m[1:-1] ** 2 * w[1:-1])
    return _even_pole_fill(out)


def scalar_curvature(state: ManifoldState) -> ScalarField:
    """Scalar curvature field: 0, n(n-1)/rho^2, or -2 w''/w respectively."""
    return field_on(state, _scalar_curvature_values(state))


def ricci_quadratic(f, state: ManifoldState) -> ScalarField:
    """Ric(grad f, grad f); the reduced Ricci tensor is (R/n) g on these families."""
    v = as_values(f, state)
    if state.kind is ManifoldKind.FLAT_TORUS:
        return field_on(state, np.zeros_like(v))
    r = _scalar_curvature_values(state)
    return field_on(state, (r / state.n) * _grad_inner_values(v, v, state))


def ricci_norm_sq(state: ManifoldState) -> ScalarField:
    """|Ric|^2; equals R^2/n for the Einstein families here."""
    if state.kind is ManifoldKind.FLAT_TORUS:
        return field_on(state, np.zeros(state.num_nodes))
    r = _scalar_curvature_values(state)
    return field_on(state, r ** 2 / state.n)


def ricci_hessian(f, state: ManifoldState) -> ScalarField:
    """Full contraction Ric : Hess f, i.e. (R/n) * Laplacian(f) here."""
    v = as_values(f, state)
    if state.kind is ManifoldKind.FLAT_TORUS:
        return field_on(state, np.zeros_like(v))
    r = _scalar_curvature_values(state)
    return field_on(state, (r / state.n) * laplacian(v, state).values)


def geodesic_distance(state: ManifoldState, i: int, j: int) -> float:
    """Distance between two grid nodes within the symmetry class."""
    i, j = int(i), int(j)
    if not (0 <= i < state.num_nodes and 0 <= j < state.num_nodes):
        raise ValueError("node index out of range")
    if i == j:
        return 0.0
    if state.kind is ManifoldKind.FLAT_TORUS:
        L = state.lengths[0]
        d = abs(state.grid[i] - state.grid[j])
        return float(min(d, L - d))
    if state.kind is ManifoldKind.ROUND_SPHERE:
        return float(math.sqrt(state.rho_sq) * abs(state.grid[i] - state.grid[j]))
    lo, hi = min(i, j), max(i, j)
    seg = state.m[lo:hi + 1]
    return float(np.trapezoid(seg, dx=state.h))
