"""Policy iteration on the discrete scheme and its convergence diagnostics.

The driver alternates policy evaluation (the frozen-control linear
recursion) with pointwise policy improvement, tracks the distance of every
iterate to the direct nonlinear solve, and enforces the two ordering facts
the monotone scheme guarantees: iterates decrease pointwise, and they stay
above the fixed point.  Violations beyond rounding noise indicate a scheme
bug or a CFL breach and abort the run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import ConfigurationError, MonotonicityError
from .problem import PolicyField, _first_argmin, improve_policy
from .scheme import SchemeParams, SpaceTimeSolution, evaluate_policy, solve_hjb_direct

MONOTONE_SLACK = 1e-10   # accepted pointwise increase (rounding noise)
MONOTONE_ABORT = 1e-8    # beyond this the run is broken, not noisy

INITIAL_POLICY_RULES = ("first-control", "argmin-of-c")


@dataclass(frozen=True)
class PIConfig:
    """How to start, when to stop, and how much to keep."""

    initial_policy: Union[str, Sequence[PolicyField]] = "argmin-of-c"
    max_iterations: int = 100
    stop_tolerance: float = 1e-10
    record_every: int = 10

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1")
        if not self.stop_tolerance > 0.0:
            raise ConfigurationError("stop_tolerance must be positive")
        if self.record_every < 1:
            raise ConfigurationError("record_every must be >= 1")


@dataclass(frozen=True)
class GeometricFit:
    """Least-squares geometric decay rate of an error sequence."""

    rho: float
    r_squared: float
    floored: bool      # sequence hit the numerical floor; fit used the prefix
    n_used: int


@dataclass(eq=False)
class PIRun:
    """Everything a policy-iteration run produced."""

    config: PIConfig
    params: SchemeParams
    fixed_point: SpaceTimeSolution
    iterates: list                       # (iteration, SpaceTimeSolution), thinned
    errors_to_fixed_point: np.ndarray    # sup over measured region, all levels
    errors_l2: np.ndarray                # unweighted l2 over measured region at t=0
    policy_l2: np.ndarray                # max over levels of l2 control distance
    monotonicity_worst: np.ndarray       # per iteration, vs the previous iterate
    fixed_point_excess: np.ndarray       # worst amount an iterate dips below V
    monotonicity_violation_count: int
    worst_monotonicity: float
    iterations_used: int
    stop_reason: str
    measured_mask: np.ndarray

    def fit(self, burn_in=2):
        return fit_geometric_rate(self.errors_to_fixed_point, burn_in)


def build_initial_policies(problem, grid, params, rule):
    """Named starting rules; both ignore the value function entirely."""
    if rule == "first-control":
        zeros = np.zeros(grid.npoints, dtype=np.int64)
        return [PolicyField(grid=grid, time_label=params.time(k), choices=zeros,
                            n_controls=problem.controls.size)
                for k in range(1, params.steps + 1)]
    if rule == "argmin-of-c":
        coords = grid.coordinates()
        no_grad = np.zeros((grid.npoints, grid.dim))
        policies = []
        for k in range(1, params.steps + 1):
            t = params.time(k)
            cand = np.empty((grid.npoints, problem.controls.size))
            for j, a in enumerate(problem.controls.elements):
                cand[:, j] = np.broadcast_to(
                    np.asarray(problem.running_cost(t, coords, a), dtype=float),
                    (grid.npoints,))
            _, sel = _first_argmin(cand)
            policies.append(PolicyField(grid=grid, time_label=t, choices=sel,
                                        n_controls=problem.controls.size))
        return policies
    raise ConfigurationError(
        f"unknown initial policy rule {rule!r}; known rules: {INITIAL_POLICY_RULES}")


def _policy_l2_distance(problem, policies, fixed_policies, mask):
    """Max over levels of the l2 distance between control vectors."""
    elements = problem.controls.elements
    worst = 0.0
    for pol, ref in zip(policies, fixed_policies[1:]):
        diff = elements[pol.choices[mask]] - elements[ref.choices[mask]]
        worst = max(worst, float(np.sqrt(np.sum(diff * diff))))
    return worst


def run_policy_iteration(problem, grid, params, config=None):
    """Alternate evaluation and improvement until the iterates stop moving.

    Stops on the sup-distance between successive iterates (never on the
    distance to the fixed point, which is recorded for diagnostics only).
    """
    config = config or PIConfig()
    fixed = solve_hjb_direct(problem, grid, params)
    fixed_values = fixed.values_array()
    mask = grid.interior_mask(problem.f_sup_bound * params.T)
    if not np.any(mask):
        raise ConfigurationError("measured region is empty; enlarge the box or shrink T")

    if isinstance(config.initial_policy, str):
        policies = build_initial_policies(problem, grid, params, config.initial_policy)
    else:
        policies = list(config.initial_policy)

    errors, errors_l2, policy_l2 = [], [], []
    mono_worst, fp_excess = [], []
    iterates = []
    violation_count = 0
    worst_violation = 0.0
    prev_values = None
    stop_reason = "max_iterations"

    for n in range(config.max_iterations):
        sol = evaluate_policy(problem, grid, params, policies)
        values = sol.values_array()

        diff = values[:, mask] - fixed_values[:, mask]
        errors.append(float(np.max(np.abs(diff))))
        errors_l2.append(float(np.sqrt(np.sum(diff[0] ** 2))))
        policy_l2.append(_policy_l2_distance(problem, policies, fixed.policy_slices, mask))
        fp_excess.append(max(0.0, float(np.max(fixed_values - values))))

        if prev_values is None:
            mono_worst.append(0.0)
        else:
            increase = float(np.max(values - prev_values))
            mono_worst.append(max(0.0, increase))
            worst_violation = max(worst_violation, mono_worst[-1])
            violation_count += int(np.count_nonzero(values - prev_values > MONOTONE_SLACK))
            if increase > MONOTONE_ABORT:
                raise MonotonicityError(
                    f"iterate {n} rose {increase:.3e} above its predecessor "
                    f"(tolerance {MONOTONE_ABORT:.0e}); scheme bug or CFL breach")

        if n % config.record_every == 0:
            iterates.append((n, sol))

        if prev_values is not None and float(np.max(np.abs(values - prev_values))) < config.stop_tolerance:
            stop_reason = "tolerance"
            if iterates[-1][0] != n:
                iterates.append((n, sol))
            break

        policies = [improve_policy(problem, sol.slices[k], params.time(k))
                    for k in range(1, params.steps + 1)]
        prev_values = values
    else:
        if iterates[-1][0] != config.max_iterations - 1:
            iterates.append((config.max_iterations - 1, sol))

    return PIRun(
        config=config,
        params=params,
        fixed_point=fixed,
        iterates=iterates,
        errors_to_fixed_point=np.array(errors),
        errors_l2=np.array(errors_l2),
        policy_l2=np.array(policy_l2),
        monotonicity_worst=np.array(mono_worst),
        fixed_point_excess=np.array(fp_excess),
        monotonicity_violation_count=violation_count,
        worst_monotonicity=worst_violation,
        iterations_used=len(errors),
        stop_reason=stop_reason,
        measured_mask=mask,
    )


def policy_distance(run, n):
    """L2 control distance of iterate n to the fixed point (max over levels)."""
    if not 0 <= n < len(run.policy_l2):
        raise IndexError(f"iteration {n} not recorded (run has {len(run.policy_l2)})")
    return float(run.policy_l2[n])


def fit_geometric_rate(errors, burn_in=0):
    """Fit log e_n against n; report the per-iteration ratio rho = exp(slope).

    Entries at or below the numerical floor (100 eps times the sequence
    scale) end the usable prefix; the fit then runs on what precedes them
    and is flagged as floored.
    """
    errors = np.asarray(errors, dtype=float)
    if len(errors) - burn_in < 4:
        raise ValueError("need at least 4 post-burn-in entries to fit a rate")
    scale = float(np.max(errors)) if len(errors) else 0.0
    floor = 100.0 * np.finfo(float).eps * scale
    below = np.flatnonzero(errors <= floor)
    cut = int(below[0]) if len(below) else len(errors)
    floored = cut < len(errors)
    tail = errors[burn_in:cut]
    if len(tail) < 2:
        return GeometricFit(rho=math.nan, r_squared=math.nan, floored=True, n_used=len(tail))
    x = np.arange(len(tail), dtype=float)
    y = np.log(tail)
    slope, intercept = np.polyfit(x, y, 1)
    predicted = slope * x + intercept
    ss_res = float(np.sum((y - predicted) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 and ss_res < 1e-20 else 1.0 - ss_res / ss_tot
    return GeometricFit(rho=float(np.exp(slope)), r_squared=float(r_squared),
                        floored=floored, n_used=len(tail))
