"""Reference solutions and quantitative diagnostics for solved problems.

The Hopf-Lax evaluator here is a deliberately brute-force independent
oracle: it never touches the finite-difference machinery, so rate studies
measure the scheme against something that cannot share its bugs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, UnsupportedDimensionError
from .scheme import SchemeParams, solve_hjb_direct

ORACLE_TOL = 1e-6       # sampling is doubled until the minimum moves less than this
ORACLE_SAMPLES = 1001   # initial samples per axis
_DEGENERATE = 1e-12     # below this every error is treated as identically zero


def _ball_min_1d(q, center, radius, samples):
    y = center + np.linspace(-radius, radius, samples)
    vals = np.asarray(q(y[:, None]), dtype=float)
    k = int(np.argmin(vals))
    return float(vals[k]), y[k:k + 1]


def _ball_min_2d(q, center, radius, samples):
    offs = np.linspace(-radius, radius, samples)
    yy, zz = np.meshgrid(center[0] + offs, center[1] + offs, indexing="ij")
    pts = np.stack([yy.ravel(), zz.ravel()], axis=-1)
    inside = np.sum((pts - center) ** 2, axis=-1) <= radius * radius * (1 + 1e-12)
    pts = pts[inside]
    vals = np.asarray(q(pts), dtype=float)
    k = int(np.argmin(vals))
    return float(vals[k]), pts[k]


def _hopf_lax_scan(q, t, T, x, speed, initial_samples, tol):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    dim = x.size
    if dim > 2:
        raise UnsupportedDimensionError("hopf-lax oracle supports 1 and 2 dimensions only")
    radius = speed * (T - t)
    if radius < 0:
        raise ConfigurationError(f"oracle asked for t={t} beyond the horizon T={T}")
    if radius == 0.0:
        return float(np.asarray(q(x[None, :]))[0]), x
    scan = _ball_min_1d if dim == 1 else _ball_min_2d
    samples = initial_samples
    best, arg = scan(q, x if dim == 2 else float(x[0]), radius, samples)
    while True:
        samples = 2 * samples - 1
        refined, arg = scan(q, x if dim == 2 else float(x[0]), radius, samples)
        if abs(refined - best) < tol:
            return refined, np.atleast_1d(arg)
        best = refined


def hopf_lax_oracle(q, c0, t, T, x, speed, initial_samples=ORACLE_SAMPLES, tol=ORACLE_TOL):
    """min of q over the reachable ball |y - x| <= speed (T - t), plus c0 (T - t).

    Exact-solution formula for Hamiltonians of the form c0 - speed |p|.
    """
    best, _ = _hopf_lax_scan(q, t, T, x, speed, initial_samples, tol)
    return best + c0 * (T - t)


def hopf_lax_minimizer(q, t, T, x, speed, initial_samples=ORACLE_SAMPLES, tol=ORACLE_TOL):
    """Location of the (first) minimizer the oracle scan finds."""
    _, arg = _hopf_lax_scan(q, t, T, x, speed, initial_samples, tol)
    return arg


def _hopf_lax_values_1d(q, c0, t, T, X, speed, tol=ORACLE_TOL):
    """Oracle values at many points at once (shared offset grid per level)."""
    radius = speed * (T - t)
    xs = X[:, 0]
    if radius == 0.0:
        return np.asarray(q(X), dtype=float) + 0.0
    samples = ORACLE_SAMPLES
    offs = np.linspace(-radius, radius, samples)
    best = np.min(np.asarray(q((xs[:, None] + offs[None, :])[..., None]), dtype=float), axis=1)
    while True:
        samples = 2 * samples - 1
        offs = np.linspace(-radius, radius, samples)
        refined = np.min(np.asarray(q((xs[:, None] + offs[None, :])[..., None]), dtype=float), axis=1)
        if float(np.max(np.abs(refined - best))) < tol:
            return refined + c0 * (T - t)
        best = refined


def oracle_for(benchmark, T):
    """Reference-solution callback (t, X) -> values for a benchmark, or None."""
    if benchmark.exact is not None:
        exact = benchmark.exact
        return lambda t, X: np.asarray(exact(t, T, X), dtype=float)
    if benchmark.hopf_lax is not None:
        c0, speed = benchmark.hopf_lax
        q = benchmark.problem.terminal_cost
        if len(benchmark.box) != 2:
            raise UnsupportedDimensionError("hopf-lax benchmark oracle is 1D")
        return lambda t, X: _hopf_lax_values_1d(q, c0, t, T, X, speed)
    return None


def _loglog_fit(h_values, errors):
    x = np.log(np.asarray(h_values, dtype=float))
    y = np.log(np.asarray(errors, dtype=float))
    slope, intercept = np.polyfit(x, y, 1)
    predicted = slope * x + intercept
    ss_res = float(np.sum((y - predicted) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 and ss_res < 1e-20 else 1.0 - ss_res / ss_tot
    return float(slope), float(np.exp(intercept)), float(r_squared)


@dataclass(frozen=True)
class RateStudy:
    """Sup errors against an oracle across spacings, with a fitted order."""

    h_values: tuple
    tau_values: tuple
    errors: tuple
    l2_errors: tuple
    fitted_order: float
    fitted_constant: float
    r_squared: float
    degenerate: bool


def solution_error_vs_oracle(solution, oracle, mask=None):
    """Sup and t=0 l2 distance to the oracle over the measured region, all levels."""
    grid = solution.grid
    mask = np.ones(grid.npoints, dtype=bool) if mask is None else mask
    coords = grid.coordinates()[mask]
    sup = 0.0
    l2 = 0.0
    for k, s in enumerate(solution.slices):
        t = solution.params.time(k)
        diff = s.values[mask] - oracle(t, coords)
        sup = max(sup, float(np.max(np.abs(diff))))
        if k == 0:
            l2 = float(np.sqrt(np.sum(diff ** 2)))
    return sup, l2


def run_h_rate_study(benchmark, h_values, T, oracle=None, tau_rule=None):
    """Solve at each spacing and fit  error ~ constant * h^order  by log-log
    least squares.  Spacings may be snapped by the benchmark grid; the fit
    uses the spacings actually run.
    """
    if len(h_values) < 4:
        raise ConfigurationError("rate study needs at least 4 spacings")
    if np.any(np.diff(h_values) >= 0):
        raise ConfigurationError("rate study spacings must be strictly decreasing")
    problem = benchmark.problem
    actual_h, taus, errors, l2s = [], [], [], []
    for h in h_values:
        grid = benchmark.make_grid(h)
        tau = None if tau_rule is None else tau_rule(grid.spacing)
        params = SchemeParams.create(grid.spacing, T, problem.f_sup_bound,
                                     tau=tau, dim=grid.dim)
        sol = solve_hjb_direct(problem, grid, params)
        ref = oracle if oracle is not None else oracle_for(benchmark, T)
        if ref is None:
            raise ConfigurationError(f"benchmark {benchmark.name} has no oracle")
        mask = grid.interior_mask(problem.f_sup_bound * T)
        sup, l2 = solution_error_vs_oracle(sol, ref, mask)
        actual_h.append(grid.spacing)
        taus.append(params.tau)
        errors.append(sup)
        l2s.append(l2)

    degenerate = max(errors) < _DEGENERATE
    if degenerate:
        order, constant, r2 = math.nan, math.nan, math.nan
    else:
        order, constant, r2 = _loglog_fit(actual_h, errors)
    return RateStudy(h_values=tuple(actual_h), tau_values=tuple(taus),
                     errors=tuple(errors), l2_errors=tuple(l2s),
                     fitted_order=order, fitted_constant=constant,
                     r_squared=r2, degenerate=degenerate)


@dataclass(frozen=True)
class TauRefinementStudy:
    """Successive t=0 distances under time refinement at fixed spacing.

    ``extrapolated`` is the linear-in-tau extrapolation of the two finest
    t=0 slices, standing in for the time-continuous solution on this grid.
    """

    h: float
    tau_values: tuple
    distances: tuple
    extrapolated: np.ndarray
    solutions: tuple


def run_tau_refinement_study(benchmark, h, tau_values, T):
    if len(tau_values) < 2:
        raise ConfigurationError("tau study needs at least 2 step sizes")
    if np.any(np.diff(tau_values) >= 0):
        raise ConfigurationError("tau values must be strictly decreasing")
    problem = benchmark.problem
    grid = benchmark.make_grid(h)
    sols, taus = [], []
    for tau in tau_values:
        params = SchemeParams.create(grid.spacing, T, problem.f_sup_bound, tau=tau,
                                     dim=grid.dim)
        sols.append(solve_hjb_direct(problem, grid, params))
        taus.append(params.tau)
    mask = grid.interior_mask(problem.f_sup_bound * T)
    distances = tuple(
        float(np.max(np.abs(a.slices[0].values[mask] - b.slices[0].values[mask])))
        for a, b in zip(sols, sols[1:]))
    t1, t2 = taus[-2], taus[-1]
    v1 = sols[-2].slices[0].values
    v2 = sols[-1].slices[0].values
    extrapolated = (t1 * v2 - t2 * v1) / (t1 - t2)
    return TauRefinementStudy(h=grid.spacing, tau_values=tuple(taus),
                              distances=distances, extrapolated=extrapolated,
                              solutions=tuple(sols))


@dataclass(frozen=True)
class SemiConcavityReport:
    """Worst centered-second-difference ratio over a solution."""

    offsets: tuple          # (axis, steps) pairs actually probed
    worst_ratio: float
    per_offset: tuple       # worst ratio per offset


def _offset_spec(grid, offset):
    """Decode an axis-aligned offset vector into (axis, lattice steps)."""
    offset = np.atleast_1d(np.asarray(offset, dtype=float))
    nonzero = np.flatnonzero(np.abs(offset) > 1e-14)
    if len(nonzero) != 1:
        raise ConfigurationError(f"offset {offset} must be axis-aligned and nonzero")
    axis = int(nonzero[0])
    steps = offset[axis] / grid.spacing
    if abs(steps - round(steps)) > 1e-9:
        raise ConfigurationError(
            f"offset {offset} is not a lattice multiple of h={grid.spacing}")
    return axis, int(round(steps))


def semi_concavity_probe(solution, offsets, mask=None):
    """Max of [V(t,x+y) + V(t,x-y) - 2 V(t,x)] / (|y|^2 + sqrt(h)).

    Offsets must be lattice vectors along grid axes.  Only points whose
    shifted partners stay inside the grid (and the mask, when given) count.
    """
    grid = solution.grid
    h = grid.spacing
    denom_base = math.sqrt(h)
    base_mask = np.ones(grid.npoints, dtype=bool) if mask is None else np.asarray(mask, bool)

    specs = [_offset_spec(grid, off) for off in offsets]
    per_offset = []
    for axis, steps in specs:
        n = grid.points_per_axis[axis]
        idx = np.arange(grid.npoints)
        multi = np.array(np.unravel_index(idx, grid.shape))
        j = multi[axis]
        if grid.periodic[axis]:
            ok = base_mask.copy()
            up = (j + steps) % n
            dn = (j - steps) % n
        else:
            ok = base_mask & (j + steps <= n - 1) & (j - steps >= 0)
            up = np.clip(j + steps, 0, n - 1)
            dn = np.clip(j - steps, 0, n - 1)
        multi_up = multi.copy(); multi_up[axis] = up
        multi_dn = multi.copy(); multi_dn[axis] = dn
        flat_up = np.ravel_multi_index(tuple(multi_up), grid.shape)
        flat_dn = np.ravel_multi_index(tuple(multi_dn), grid.shape)
        if mask is not None:
            ok &= base_mask[flat_up] & base_mask[flat_dn]
        y2 = (steps * h) ** 2
        worst = -math.inf
        for s in solution.slices:
            v = s.values
            second = v[flat_up][ok] + v[flat_dn][ok] - 2.0 * v[ok]
            if second.size:
                worst = max(worst, float(np.max(second)) / (y2 + denom_base))
        per_offset.append(worst)
    return SemiConcavityReport(offsets=tuple(specs), worst_ratio=max(per_offset),
                               per_offset=tuple(per_offset))


@dataclass(frozen=True)
class PolicyProbeRow:
    h: float
    point: float
    skipped: bool
    control: Optional[tuple]
    oracle_control: Optional[tuple]


@dataclass(frozen=True)
class PolicyProbeTable:
    rows: tuple

    def stabilized(self, point):
        """Controls at the two finest spacings agree (and match the oracle if known)."""
        rows = [r for r in self.rows if r.point == point and not r.skipped]
        if len(rows) < 2:
            return False
        last, prev = rows[-1], rows[-2]
        if last.control != prev.control:
            return False
        if last.oracle_control is not None:
            return last.control == last.oracle_control
        return True


def policy_pointwise_convergence_probe(benchmark, h_values, probe_points, T,
                                       kink_tolerance=1e-9):
    """Fixed-point control at probe points across spacings, vs the oracle argmin.

    Probes inside the declared non-unique-argmin set are skipped.  For
    hopf-lax benchmarks the expected control is the sign of the step toward
    the brute-force minimizer; elsewhere the probe only reports stability.
    """
    problem = benchmark.problem
    elements = problem.controls.elements
    rows = []
    for h in h_values:
        grid = benchmark.make_grid(h)
        params = SchemeParams.create(grid.spacing, T, problem.f_sup_bound, dim=grid.dim)
        sol = solve_hjb_direct(problem, grid, params)
        level = 1  # the level that drives the final step to t=0
        policy = sol.policy_slices[level]
        t = params.time(level)
        for point in probe_points:
            point = float(point)
            if any(abs(point - k) <= kink_tolerance for k in benchmark.kink_points):
                rows.append(PolicyProbeRow(h=grid.spacing, point=point, skipped=True,
                                           control=None, oracle_control=None))
                continue
            gp = grid.nearest_index([point])
            control = tuple(float(v) for v in elements[policy.choices[gp]])
            oracle_control = None
            if benchmark.hopf_lax is not None and problem.controls.control_dim == 1:
                _, speed = benchmark.hopf_lax
                y = hopf_lax_minimizer(problem.terminal_cost, t, T, [point], speed)
                direction = float(np.sign(y[0] - point))
                cand = elements[:, 0]
                oracle_control = (float(cand[np.argmin(np.abs(cand - direction))]),)
            elif problem.controls.size == 1:
                oracle_control = tuple(float(v) for v in elements[0])
            rows.append(PolicyProbeRow(h=grid.spacing, point=point, skipped=False,
                                       control=control, oracle_control=oracle_control))
    return PolicyProbeTable(rows=tuple(rows))
