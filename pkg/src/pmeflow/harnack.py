"""Differential Harnack constants, margins, and integrated path inequalities.

The central pointwise estimate bounds, for a positive solution of the forced
nonlinear diffusion on a flow with bounded nonnegative curvature operator,

    |grad v|^2 / v  -  b v_t / v  -  (b-1) R / v  -  d/t  -  c0 |b-2| R_max

from above by zero, where v is the pressure and (alpha, d, c0) depend on the
variant.  Margin scans report the worst (most positive) value of that
expression over stored space-time nodes; a pass means it stays below the
discretization tolerance.  Integrating the estimate along space-time curves
yields multiplicative and additive two-point inequalities which are checked
per curve against randomized piecewise-linear families.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .geometry import ManifoldKind, ManifoldState, as_values, field_on, geodesic_distance
from .geometry import scalar_curvature, gradient_norm_sq, laplacian
from .history import grad_sq_history, metric_stacks
from .ricci_flow import FlowHypothesisReport

DEFAULT_TOL_INEQ = 1e-2
DEFAULT_TOL_PATH = 1e-6
DEFAULT_T_MIN_FRAC = 0.05


class Variant(Enum):
    """Which constant set the margin uses."""

    GENERAL = "general"                    # one-parameter family, b in [1, inf)
    B2 = "b2"                              # the b = 2 case; curvature correction vanishes
    B1_LIMIT = "b1_limit"                  # the b -> 1 endpoint of the family
    B1_BOUNDED_GRAD = "b1_bounded_grad"    # b = 1 with bounded pressure gradient


@dataclass(frozen=True)
class HarnackConstants:
    """The tuple (alpha, d, c0) plus the classical kappa for given (n, p, b)."""

    variant: Variant
    n: int
    p: float
    b: float
    alpha: float
    d: float
    c0: float
    kappa: float


def constants(n: int, p: float, b: float = None,
              variant: Variant = Variant.GENERAL) -> HarnackConstants:
    """Constant set for the requested estimate variant."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if p <= 1:
        raise ValueError("constants are defined for p > 1")
    kappa = n / (2 + n * (p - 1))
    x = n * (p - 1)
    if variant is Variant.GENERAL:
        if b is None or b < 1:
            raise ValueError("the general family needs b >= 1")
        alpha = b * x / (2 + b * x)
        d = max(b * alpha, b / 2)
        if b >= 2:
            c0 = 2 * alpha / n + math.sqrt(b * alpha * (p - 1) / 2)
        else:
            c0 = math.sqrt(b * alpha * (p - 1) * (n - 1) / (2 * n))
    elif variant is Variant.B2:
        if b not in (None, 2, 2.0):
            raise ValueError("this variant fixes b = 2")
        b = 2.0
        alpha = x / (1 + x)
        d = max(2 * alpha, 1.0)
        c0 = 0.0
    elif variant is Variant.B1_LIMIT:
        if b not in (None, 1, 1.0):
            raise ValueError("this variant fixes b = 1")
        b = 1.0
        alpha = x / (2 + x)
        d = max(alpha, 0.5)
        c0 = math.sqrt(alpha * (p - 1) * (n - 1) / (2 * n))
    elif variant is Variant.B1_BOUNDED_GRAD:
        if b not in (None, 1, 1.0):
            raise ValueError("this variant fixes b = 1")
        b = 1.0
        d = x / (2 + x)
        alpha = d  # the 1/t coefficient itself; no 1/2 floor in this variant
        c0 = math.sqrt(alpha * (p - 1) * (n - 1) / (2 * n))
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return HarnackConstants(variant, n, float(p), float(b), float(alpha),
                            float(d), float(c0), float(kappa))


@dataclass
class MarginReport:
    """Worst-case margin of one estimate over a trajectory."""

    estimate_id: str
    worst_margin: float
    location: tuple            # (node index, time) of the worst margin
    tolerance: float
    passed: bool
    valid: bool = True         # False when the curvature hypotheses fail
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        loc = None if self.location is None else [self.location[0], self.location[1]]
        return {
            "estimate_id": self.estimate_id,
            "worst_margin": self.worst_margin,
            "location": loc,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "valid": self.valid,
            "details": dict(self.details),
        }


def invalid_report(estimate_id: str, tolerance: float, reason: str) -> MarginReport:
    return MarginReport(estimate_id, float("nan"), None, tolerance,
                        passed=False, valid=False, details={"reason": reason})


@dataclass(frozen=True)
class HarnackQuantity:
    """The pointwise quantity in its two algebraically equal forms."""

    direct: np.ndarray      # |grad v|^2/v - b v_t/v + c R/v
    expanded: np.ndarray    # via the pressure evolution equation
    difference: np.ndarray


def harnack_quantity(state: ManifoldState, v, v_t, p: float, a: float,
                     b: float, c: float) -> HarnackQuantity:
    """Evaluate the Harnack quantity pointwise on one state.

    The difference of the two forms is a discretization diagnostic: it tests
    the pressure evolution substitution, not the estimate itself.
    """
    v = as_values(v, state)
    v_t = as_values(v_t, state)
    if np.any(v <= 0):
        raise ValueError("pressure must be positive")
    r = scalar_curvature(state).values
    gsq = gradient_norm_sq(v, state).values
    direct = gsq / v - b * v_t / v + c * r / v
    expanded = (-b * (p - 1) * laplacian(v, state).values
                + (1 - b) * gsq / v - a * b * (p - 1) * r + c * r / v)
    return HarnackQuantity(direct, expanded, direct - expanded)


def _time_mask(traj, t_min):
    t = np.asarray(traj.times, dtype=float)
    if t_min is None:
        t_min = DEFAULT_T_MIN_FRAC * t[-1]
    return t, (t >= t_min) & (t > 0)


def _worst(margins, times, keep, grid):
    """Max margin over kept times and its location."""
    sub = margins[keep]
    k, i = np.unravel_index(np.argmax(sub), sub.shape)
    kept_times = times[keep]
    return float(sub[k, i]), (int(i), float(kept_times[k]))


def margin_history(traj, consts: HarnackConstants, r_max: float = None) -> np.ndarray:
    """Pointwise margin of the main estimate at every stored node and time.

    Rows at t <= 0 are NaN (the d/t barrier needs t > 0).
    """
    if traj.a != 1.0:
        raise ValueError("the estimates hold for the mass-conserving forcing a = 1")
    r_max = traj.r_max if r_max is None else float(r_max)
    gsq = grad_sq_history(traj)
    t = np.asarray(traj.times, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        barrier = np.where(t > 0, consts.d / np.where(t > 0, t, 1.0), np.nan)[:, None]
    b = consts.b
    out = (gsq / traj.v - b * traj.v_t / traj.v - (b - 1) * traj.r_history / traj.v
           - barrier - consts.c0 * abs(b - 2) * r_max)
    return out


def harnack_margin(traj, consts: HarnackConstants, t_min: float = None,
                   tol: float = DEFAULT_TOL_INEQ,
                   hypothesis: FlowHypothesisReport = None,
                   estimate_id: str = None) -> MarginReport:
    """Worst-case margin of the main pointwise estimate over a trajectory."""
    eid = estimate_id or f"harnack_{consts.variant.value}_b{consts.b:g}"
    if hypothesis is not None and not hypothesis.satisfied:
        return invalid_report(eid, tol, "curvature hypotheses not satisfied")
    times, keep = _time_mask(traj, t_min)
    if not np.any(keep):
        raise ValueError("no stored times above t_min")
    margins = margin_history(traj, consts)
    worst, loc = _worst(margins, times, keep, traj.grid)
    return MarginReport(eid, worst, loc, tol, passed=bool(worst <= tol),
                        details={"b": consts.b, "d": consts.d, "c0": consts.c0,
                                 "alpha": consts.alpha, "r_max": traj.r_max,
                                 "variant": consts.variant.value})


def static_liyau_margin(traj, alpha: float, t_min: float = None,
                        tol: float = DEFAULT_TOL_INEQ) -> MarginReport:
    """Sharp-constant gradient estimate on static flat space.

    Checks |grad v|^2/v - alpha v_t/v <= (p-1) kappa alpha^2 / t with
    kappa = n/(2 + n(p-1)), valid for alpha > 1 on a flat static background.
    """
    if traj.kind is not ManifoldKind.FLAT_TORUS:
        raise ValueError("this estimate is checked on the static flat torus only")
    if alpha <= 1:
        raise ValueError("needs alpha > 1")
    n = traj.states[0].n
    p = traj.p
    kappa = n / (2 + n * (p - 1))
    times, keep = _time_mask(traj, t_min)
    gsq = grad_sq_history(traj)
    with np.errstate(divide="ignore"):
        barrier = np.where(times > 0, 1.0 / np.where(times > 0, times, 1.0), np.nan)
    margins = gsq / traj.v - alpha * traj.v_t / traj.v \
        - (p - 1) * kappa * alpha * alpha * barrier[:, None]
    worst, loc = _worst(margins, times, keep, traj.grid)
    return MarginReport(f"liyau_alpha{alpha:g}", worst, loc, tol,
                        passed=bool(worst <= tol),
                        details={"alpha": alpha, "kappa": kappa})


# ---------------------------------------------------------------------------
# self-similar source-type solution on static flat space (sharp equality case)

@dataclass(frozen=True)
class SourceTypeProfile:
    """Compactly supported self-similar solution of u_t = Lap(u^p) on R^n."""

    n: int
    p: float
    c: float = 1.0     # free constant fixing the mass

    def __post_init__(self):
        if self.p <= 1 or self.n < 1 or self.c <= 0:
            raise ValueError("need p > 1, n >= 1, c > 0")

    @property
    def kappa(self) -> float:
        return self.n / (2 + self.n * (self.p - 1))

    @property
    def k(self) -> float:
        return self.kappa * (self.p - 1) / (2 * self.p * self.n)

    def support_radius(self, t: float) -> float:
        return math.sqrt(self.c / self.k) * t ** (self.kappa / self.n)

    def u(self, r, t):
        core = self.c - self.k * np.asarray(r) ** 2 * t ** (-2 * self.kappa / self.n)
        return t ** (-self.kappa) * np.maximum(core, 0.0) ** (1 / (self.p - 1))

    def v(self, r, t):
        core = self.c - self.k * np.asarray(r) ** 2 * t ** (-2 * self.kappa / self.n)
        amp = self.p / (self.p - 1)
        return amp * t ** (-self.kappa * (self.p - 1)) * np.maximum(core, 0.0)

    def _pressure_curvature(self, t: float) -> float:
        # v_rr = (1/r) v_r = this value everywhere inside the support
        amp = self.p / (self.p - 1)
        expo = self.kappa * (self.p - 1) + 2 * self.kappa / self.n
        return -2 * amp * self.k * t ** (-expo)

    def lap_v(self, r, t):
        return np.full_like(np.asarray(r, dtype=float),
                            self.n * self._pressure_curvature(t))


def aronson_benilan_residual(profile: SourceTypeProfile, t: float,
                             samples: int = 129) -> float:
    """Deviation of Lap v from -kappa/t on the inner half of the support.

    The profile is the equality case of the classical second-order bound
    Lap v >= -kappa/t on static flat space, so the residual is pure roundoff
    of the closed forms.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    r = np.linspace(0.0, 0.5 * profile.support_radius(t), samples)
    resid = profile.lap_v(r, t) + profile.kappa / t
    return float(np.max(np.abs(resid)))


# ---------------------------------------------------------------------------
# integrated (two-point) inequalities along space-time curves

@dataclass(frozen=True)
class SpaceTimeCurve:
    """Piecewise-linear path: waypoint times (strictly increasing) and positions.

    Positions are chart coordinates; on the torus they may wind outside the
    fundamental interval and are wrapped only when sampling fields.
    """

    times: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "positions", np.asarray(self.positions, dtype=float))
        if self.times.size != self.positions.size or self.times.size < 2:
            raise ValueError("need matching times/positions with >= 2 waypoints")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("waypoint times must increase strictly")


def interp_field(traj, hist, x, t):
    """Space-time bilinear interpolation of a stored field history.

    ``x`` and ``t`` may be scalars or matching arrays; time interpolation is
    linear between stored states, space is linear between grid nodes (with
    periodic wrap on the torus).
    """
    times = np.asarray(traj.times, dtype=float)
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(t < times[0] - 1e-12) or np.any(t > times[-1] + 1e-12):
        raise ValueError("time outside the stored window")
    hist = np.asarray(hist, dtype=float)
    k = np.clip(np.searchsorted(times, t) - 1, 0, len(times) - 2)
    wt = np.clip((t - times[k]) / (times[k + 1] - times[k]), 0.0, 1.0)

    s0 = traj.states[0]
    h = s0.h
    n_nodes = hist.shape[-1]
    if s0.kind is ManifoldKind.FLAT_TORUS:
        xm = np.mod(x, s0.lengths[0])
        idx = np.floor(xm / h).astype(int) % n_nodes
        frac = xm / h - np.floor(xm / h)
        nxt = (idx + 1) % n_nodes
    else:
        xc = np.clip(x, s0.grid[0], s0.grid[-1])
        idx = np.minimum(np.floor(xc / h).astype(int), n_nodes - 2)
        frac = (xc - idx * h) / h
        nxt = idx + 1
    lo = (1 - frac) * hist[k, idx] + frac * hist[k, nxt]
    hi = (1 - frac) * hist[k + 1, idx] + frac * hist[k + 1, nxt]
    out = (1 - wt) * lo + wt * hi
    return out if out.ndim else float(out)


def _metric_factor(traj, stacks, x, t):
    """g_xx at (x, t): 1, rho^2(t), or m(x, t)^2; vectorized like interp_field."""
    kind = traj.states[0].kind
    x = np.asarray(x, dtype=float)
    if kind is ManifoldKind.FLAT_TORUS:
        return np.ones_like(x)
    if kind is ManifoldKind.ROUND_SPHERE:
        rho = stacks["rho_sq"][:, 0]
        return np.interp(t, traj.times, rho) * np.ones_like(x)
    m = interp_field(traj, stacks["m"], x, t)
    return m ** 2


def curve_action(traj, curve: SpaceTimeCurve, b: float) -> float:
    """Action of a curve: integral of (b-1)/b R + (b/4) |speed|^2 along it.

    Quadrature is trapezoid per waypoint segment, refined with every stored
    time falling inside the segment; the coordinate speed is constant on a
    segment so the integrand is smooth there.
    """
    stacks = metric_stacks(traj)
    times = np.asarray(traj.times, dtype=float)
    total = 0.0
    for seg in range(curve.times.size - 1):
        ta, tb = curve.times[seg], curve.times[seg + 1]
        xa, xb = curve.positions[seg], curve.positions[seg + 1]
        speed = (xb - xa) / (tb - ta)
        inner = times[(times > ta) & (times < tb)]
        taus = np.concatenate(([ta], inner, [tb]))
        xs = xa + speed * (taus - ta)
        r_vals = interp_field(traj, traj.r_history, xs, taus)
        g_vals = _metric_factor(traj, stacks, xs, taus)
        vals = ((b - 1) / b) * r_vals + (b / 4) * g_vals * speed * speed
        total += float(np.trapezoid(vals, taus))
    return total


def path_check_multiplicative(traj, consts: HarnackConstants,
                              curve: SpaceTimeCurve,
                              v_min: float = None, r_max: float = None) -> float:
    """Signed slack of the multiplicative two-point inequality along a curve.

    Nonnegative slack means v(x1, t1) is indeed bounded by the grown and
    action-corrected value of v(x2, t2); the per-curve form is checked, so no
    infimum over curves is required.
    """
    t1, t2 = float(curve.times[0]), float(curve.times[-1])
    if t1 <= 0:
        raise ValueError("t1 must be positive")
    v_min = traj.v_min if v_min is None else float(v_min)
    r_max = traj.r_max if r_max is None else float(r_max)
    if v_min <= 0:
        raise ValueError("the multiplicative inequality needs v_min > 0")
    b, d, c0 = consts.b, consts.d, consts.c0
    v1 = float(interp_field(traj, traj.v, curve.positions[0], t1))
    v2 = float(interp_field(traj, traj.v, curve.positions[-1], t2))
    gamma = curve_action(traj, curve, b)
    grow = (t2 / t1) ** (d / b)
    # wild curves carry huge actions; the bound is then trivially loose and
    # a capped exponent keeps the slack finite
    expo = min(gamma / v_min + (abs(b - 2) / b) * c0 * r_max * (t2 - t1), 700.0)
    return v2 * grow * math.exp(expo) - v1


def path_check_additive(traj, consts: HarnackConstants, i1: int, k1: int,
                        i2: int, k2: int, v_max: float = None,
                        r_max: float = None) -> float:
    """Signed slack of the additive two-point inequality (geodesic form).

    Endpoints are (node i1, stored time k1) and (node i2, stored time k2);
    the connecting curve is the constant-speed geodesic at the earlier time,
    so only the earlier-time distance enters.
    """
    t1, t2 = float(traj.times[k1]), float(traj.times[k2])
    if not 0 < t1 < t2:
        raise ValueError("need 0 < t1 < t2")
    v_max = traj.v_max if v_max is None else float(v_max)
    r_max = traj.r_max if r_max is None else float(r_max)
    b, d, c0 = consts.b, consts.d, consts.c0
    dist = geodesic_distance(traj.states[k1], i1, i2)
    v1 = float(traj.v[k1, i1])
    v2 = float(traj.v[k2, i2])
    lower = (-(d / b) * v_max * math.log(t2 / t1)
             - ((b - 1) / b + (abs(b - 2) / b) * c0 * v_max) * r_max * (t2 - t1)
             - (b / 4) * dist * dist / (t2 - t1))
    return (v2 - v1) - lower


def random_curves(traj, count: int, seed: int, t_min: float = None,
                  max_waypoints: int = 3):
    """Seeded family of piecewise-linear space-time curves on stored data.

    Each curve draws from an independent generator keyed by (seed, index),
    so the family is reproducible regardless of evaluation order.  Endpoints
    sit exactly on stored nodes and times; interior waypoints are free.
    """
    times, keep = _time_mask(traj, t_min)
    valid = np.flatnonzero(keep)
    if valid.size < 2:
        raise ValueError("not enough stored times above t_min")
    s0 = traj.states[0]
    periodic = s0.kind is ManifoldKind.FLAT_TORUS
    width = s0.lengths[0] if periodic else math.pi
    curves = []
    for idx in range(count):
        rng = np.random.default_rng((int(seed), idx))
        k1, k2 = np.sort(rng.choice(valid, size=2, replace=False))
        i1 = int(rng.integers(0, s0.num_nodes))
        i2 = int(rng.integers(0, s0.num_nodes))
        x1, x2 = s0.grid[i1], s0.grid[i2]
        if periodic and rng.random() < 0.3:
            x2 += width * rng.choice((-1.0, 1.0))  # wind once around
        n_mid = int(rng.integers(0, max_waypoints + 1))
        t_mid = np.sort(rng.uniform(times[k1], times[k2], size=n_mid))
        if periodic:
            lo, hi = min(x1, x2) - 0.5 * width, max(x1, x2) + 0.5 * width
        else:
            lo, hi = 0.0, math.pi
        x_mid = rng.uniform(lo, hi, size=n_mid)
        curve = SpaceTimeCurve(
            np.concatenate(([times[k1]], t_mid, [times[k2]])),
            np.concatenate(([x1], x_mid, [x2])),
        )
        curves.append({"curve": curve, "ends": (i1, int(k1), i2, int(k2))})
    return curves


def path_sweep(traj, consts: HarnackConstants, count: int, seed: int,
               tol: float = DEFAULT_TOL_PATH, t_min: float = None,
               hypothesis: FlowHypothesisReport = None):
    """Check both two-point inequalities over a seeded random curve family.

    Returns (multiplicative report, additive report); the reported margin is
    the negated worst slack, so pass means every slack >= -tol.
    """
    base = f"path_{{form}}_b{consts.b:g}"
    if hypothesis is not None and not hypothesis.satisfied:
        return (invalid_report(base.format(form="mult"), tol, "hypotheses fail"),
                invalid_report(base.format(form="add"), tol, "hypotheses fail"))
    worst_m = worst_a = -math.inf
    loc_m = loc_a = None
    for entry in random_curves(traj, count, seed, t_min=t_min):
        curve = entry["curve"]
        i1, k1, i2, k2 = entry["ends"]
        sm = path_check_multiplicative(traj, consts, curve)
        sa = path_check_additive(traj, consts, i1, k1, i2, k2)
        if -sm > worst_m:
            worst_m, loc_m = -sm, (i1, float(curve.times[0]))
        if -sa > worst_a:
            worst_a, loc_a = -sa, (i1, float(traj.times[k1]))
    rep_m = MarginReport(base.format(form="mult"), worst_m, loc_m, tol,
                         passed=bool(worst_m <= tol),
                         details={"curves": count, "seed": seed, "b": consts.b})
    rep_a = MarginReport(base.format(form="add"), worst_a, loc_a, tol,
                         passed=bool(worst_a <= tol),
                         details={"curves": count, "seed": seed, "b": consts.b})
    return rep_m, rep_a


def action_infimum_estimate(traj, b: float, i1: int, k1: int, i2: int, k2: int,
                            time_stride: int = 8) -> float:
    """Dynamic-programming estimate of the infimum action between two events.

    Diagnostic only: the per-curve checks above are what the estimates
    guarantee; this lattice shortest path (straight segments between kept
    times, trapezoid action per edge) indicates how far a given curve family
    sits from the optimal one.
    """
    if not 0 <= k1 < k2 < len(traj.states):
        raise ValueError("need stored indices k1 < k2")
    kept = list(range(k1, k2, time_stride)) + [k2]
    s0 = traj.states[0]
    n_nodes = s0.num_nodes
    grid = s0.grid

    def dist_matrix(state):
        if state.kind is ManifoldKind.FLAT_TORUS:
            L = state.lengths[0]
            diff = np.abs(grid[:, None] - grid[None, :])
            return np.minimum(diff, L - diff)
        if state.kind is ManifoldKind.ROUND_SPHERE:
            return math.sqrt(state.rho_sq) * np.abs(grid[:, None] - grid[None, :])
        arc = np.concatenate(([0.0], np.cumsum(0.5 * (state.m[1:] + state.m[:-1]) * state.h)))
        return np.abs(arc[:, None] - arc[None, :])

    inf = np.full(n_nodes, np.inf)
    cost = inf.copy()
    cost[i1] = 0.0
    for a_idx, b_idx in zip(kept[:-1], kept[1:]):
        dt = float(traj.times[b_idx] - traj.times[a_idx])
        r_mean = 0.5 * (traj.r_history[a_idx][:, None] + traj.r_history[b_idx][None, :])
        dist = dist_matrix(traj.states[a_idx])
        edge = ((b - 1) / b) * r_mean * dt + (b / 4) * dist ** 2 / dt
        cost = np.min(cost[:, None] + edge, axis=0)
    return float(cost[i2])
