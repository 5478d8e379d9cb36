"""Explicit space-time scheme: step operator, CFL validation, and solvers.

One backward step from level t to t - tau reads

    V(t - tau, x) = V(t, x) + tau * H(t, x, grad_h V(t, x))
                  + N * h * tau * lap_h V(t, x)

with the min-over-controls Hamiltonian H and an added grid viscosity of
strength N*h.  The constraint  max{1, |f|_sup / 2} <= N <= h / (2 tau)
makes this update monotone in V, which is what every ordering property in
this package rests on.  In d space dimensions the diagonal stencil weight
additionally needs 2*d*N*tau <= h, so the default step is tau = h/(2 d N);
for d = 1 this is the largest admissible step.

Each backward step is a pure map over grid points reading only the
previous (immutable) slice, so it is safe to parallelize pointwise; time
levels are strictly sequential.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CFLValidationError, ConfigurationError, NumericalBlowupError
from .grid import Field, Grid, gradient_central_values, laplacian_values
from .problem import (
    PolicyField,
    _eval_candidates,
    _first_argmin,
    discrete_sup_norms,
    validate_f_bound,
)

_REL_SLACK = 1.0 + 1e-12  # accept the CFL equality case despite fp rounding


@dataclass(frozen=True)
class SchemeParams:
    """Spacing h, time step tau, viscosity coefficient N, horizon T.

    ``steps * tau == T`` by construction (tau is only ever adjusted
    downward so the horizon splits into a whole number of steps).
    """

    h: float
    tau: float
    N: float
    T: float
    steps: int

    def __post_init__(self):
        if not 0.0 < self.h < 1.0:
            raise CFLValidationError(f"need 0 < h < 1, got h={self.h}")
        if not 0.0 < self.tau < 1.0:
            raise CFLValidationError(f"need 0 < tau < 1, got tau={self.tau}")
        if self.N < 1.0:
            raise CFLValidationError(f"need N >= 1, got N={self.N}")
        if 2.0 * self.N * self.tau > self.h * _REL_SLACK:
            raise CFLValidationError(
                f"upper CFL bound violated: N={self.N} > h/(2 tau)={self.h / (2 * self.tau)}")
        if self.steps < 1:
            raise CFLValidationError("need at least one time step")
        if abs(self.steps * self.tau - self.T) > 1e-9 * max(1.0, self.T):
            raise CFLValidationError(
                f"steps*tau={self.steps * self.tau} does not reproduce T={self.T}")

    @classmethod
    def create(cls, h, T, f_sup_bound, tau=None, N=None, dim=1):
        """Apply the default rules and hard-check the CFL constraint.

        Defaults: N = max{1, f_sup/2} (smallest admissible viscosity) and
        tau = h/(2 d N) (largest step that keeps the d-dimensional stencil
        monotone), then tau is shrunk so T/tau is a whole number.
        """
        h = float(h)
        T = float(T)
        if N is None:
            N = max(1.0, float(f_sup_bound) / 2.0)
        N = float(N)
        lower = max(1.0, float(f_sup_bound) / 2.0)
        if N * _REL_SLACK < lower:
            raise CFLValidationError(
                f"lower CFL bound violated: N={N} < max(1, f_sup/2)={lower}")
        tau_max = h / (2.0 * N)
        requested = tau_max / dim if tau is None else float(tau)
        if requested > tau_max * _REL_SLACK:
            raise CFLValidationError(
                f"requested tau={requested} exceeds h/(2N)={tau_max}")
        steps = max(1, int(math.ceil(T / requested - 1e-12)))
        return cls(h=h, tau=T / steps, N=N, T=T, steps=steps)

    def time(self, k):
        """Time of level k; level ``steps`` is exactly T."""
        if k == self.steps:
            return self.T
        return k * self.tau

    def times(self):
        return np.array([self.time(k) for k in range(self.steps + 1)])


@dataclass(frozen=True)
class CFLReport:
    """Outcome of checking max{1, f_sup/2} <= N <= h/(2 tau)."""

    ok: bool
    lower_ok: bool
    upper_ok: bool
    N: float
    lower_bound: float
    upper_bound: float
    admissible_tau_max: float

    def message(self):
        if self.ok:
            return "cfl ok"
        parts = []
        if not self.lower_ok:
            parts.append(f"N={self.N} < max(1, f_sup/2)={self.lower_bound}")
        if not self.upper_ok:
            parts.append(f"N={self.N} > h/(2 tau)={self.upper_bound}")
        return "cfl violated: " + "; ".join(parts) + \
            f" (admissible tau range: (0, {self.admissible_tau_max}])"


def cfl_report(h, tau, N, f_sup_bound):
    """Report (do not raise) on both sides of the CFL constraint for a raw triple."""
    lower = max(1.0, float(f_sup_bound) / 2.0)
    upper = h / (2.0 * tau)
    lower_ok = N * _REL_SLACK >= lower
    upper_ok = N <= upper * _REL_SLACK
    return CFLReport(
        ok=lower_ok and upper_ok,
        lower_ok=lower_ok,
        upper_ok=upper_ok,
        N=N,
        lower_bound=lower,
        upper_bound=upper,
        admissible_tau_max=h / (2.0 * N),
    )


def validate_cfl(params, f_sup_bound):
    """CFL report for already-constructed scheme parameters."""
    return cfl_report(params.h, params.tau, params.N, f_sup_bound)


@dataclass(eq=False)
class SpaceTimeSolution:
    """Value slices at every level k*tau, plus the per-level argmin policies.

    ``slices[k]`` is the field at time k*tau; ``policy_slices[0]`` is always
    None (no step leaves level 0), levels 1..steps hold the control choices
    used when stepping down from that level.
    """

    grid: Grid
    params: SchemeParams
    slices: list
    policy_slices: list
    q_sup: float
    c_sup: float

    def values_array(self):
        return np.stack([s.values for s in self.slices], axis=0)

    def bound_excess(self):
        """Worst overshoot of |V(t,.)| beyond |q|_sup + |c|_sup (T - t)."""
        worst = -math.inf
        for k, s in enumerate(self.slices):
            allowed = self.q_sup + self.c_sup * (self.params.T - self.params.time(k))
            worst = max(worst, s.sup_norm() - allowed)
        return worst


def _blowup_threshold(q_sup, c_sup, T):
    return 10.0 * (q_sup + c_sup * T + 1.0)


def _check_values(values, t, threshold):
    bad = ~np.isfinite(values)
    if np.any(bad):
        point = int(np.flatnonzero(bad)[0])
        raise NumericalBlowupError(
            f"non-finite value at t={t:.6g}, linear index {point}",
            time_label=t, point=point, value=float(values[point]))
    if threshold is not None:
        over = np.abs(values) > threshold
        if np.any(over):
            point = int(np.flatnonzero(over)[0])
            raise NumericalBlowupError(
                f"value {values[point]:.6g} at t={t:.6g}, linear index {point} "
                f"exceeds the a-priori threshold {threshold:.6g}",
                time_label=t, point=point, value=float(values[point]))


def _step_arrays(problem, params, grid, t, values):
    """One backward step on raw arrays; returns (new values, argmin indices)."""
    grads = gradient_central_values(grid, values)
    lap = laplacian_values(grid, values)
    cand = _eval_candidates(problem, t, grid.coordinates(), grads)
    hmin, sel = _first_argmin(cand)
    new = values + params.tau * hmin + params.N * params.h * params.tau * lap
    return new, sel


def apply_step_operator(problem, params, t, U):
    """The monotone explicit step: field at time t -> field at time t - tau."""
    if t < params.tau - 1e-12:
        raise ConfigurationError(f"cannot step below time zero from t={t}")
    new, _ = _step_arrays(problem, params, U.grid, t, U.values)
    _check_values(new, t - params.tau, threshold=None)
    return Field(grid=U.grid, values=new, time_label=t - params.tau)


def _probe_times(params, count=9):
    ks = np.unique(np.linspace(0, params.steps, min(count, params.steps + 1)).astype(int))
    return [params.time(int(k)) for k in ks]


def _terminal_field(problem, grid, params):
    q = np.broadcast_to(
        np.asarray(problem.terminal_cost(grid.coordinates()), dtype=float),
        (grid.npoints,)).copy()
    return Field(grid=grid, values=q, time_label=params.T)


def solve_hjb_direct(problem, grid, params):
    """Backward recursion of the nonlinear scheme; the policy-iteration fixed point.

    Also records the pointwise argmin control at every level it steps from.
    """
    validate_f_bound(problem, grid, _probe_times(params))
    q_sup, c_sup = discrete_sup_norms(problem, grid, _probe_times(params))
    threshold = _blowup_threshold(q_sup, c_sup, params.T)

    slices = [None] * (params.steps + 1)
    policies = [None] * (params.steps + 1)
    slices[params.steps] = _terminal_field(problem, grid, params)
    for k in range(params.steps, 0, -1):
        t = params.time(k)
        new, sel = _step_arrays(problem, params, grid, t, slices[k].values)
        _check_values(new, params.time(k - 1), threshold)
        policies[k] = PolicyField(grid=grid, time_label=t, choices=sel,
                                  n_controls=problem.controls.size)
        slices[k - 1] = Field(grid=grid, values=new, time_label=params.time(k - 1))
    return SpaceTimeSolution(grid=grid, params=params, slices=slices,
                             policy_slices=policies, q_sup=q_sup, c_sup=c_sup)


def evaluate_policy(problem, grid, params, policies):
    """Backward recursion with a frozen policy (the linear half of PI).

    ``policies`` holds one PolicyField per level tau..T in ascending order.
    The candidate costs are evaluated exactly as in the direct solve, so
    feeding the recorded argmin policies back in reproduces it.
    """
    if len(policies) != params.steps:
        raise ConfigurationError(
            f"need one policy per level tau..T ({params.steps}), got {len(policies)}")
    for k, pol in enumerate(policies, start=1):
        if abs(pol.time_label - params.time(k)) > 1e-9:
            raise ConfigurationError(
                f"policy level {k} labeled t={pol.time_label}, expected {params.time(k)}")

    validate_f_bound(problem, grid, _probe_times(params))
    q_sup, c_sup = discrete_sup_norms(problem, grid, _probe_times(params))
    threshold = _blowup_threshold(q_sup, c_sup, params.T)

    slices = [None] * (params.steps + 1)
    stored = [None] + list(policies)
    slices[params.steps] = _terminal_field(problem, grid, params)
    coords = grid.coordinates()
    for k in range(params.steps, 0, -1):
        t = params.time(k)
        values = slices[k].values
        grads = gradient_central_values(grid, values)
        lap = laplacian_values(grid, values)
        cand = _eval_candidates(problem, t, coords, grads)
        chosen = np.take_along_axis(cand, stored[k].choices[:, None], axis=1)[:, 0]
        new = values + params.tau * chosen + params.N * params.h * params.tau * lap
        _check_values(new, params.time(k - 1), threshold)
        slices[k - 1] = Field(grid=grid, values=new, time_label=params.time(k - 1))
    return SpaceTimeSolution(grid=grid, params=params, slices=slices,
                             policy_slices=stored, q_sup=q_sup, c_sup=c_sup)
