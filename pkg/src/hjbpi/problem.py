"""Control problems, the pointwise-min Hamiltonian, and policy maps.

Callbacks follow one convention throughout: ``dynamics(t, x, a)`` and
``running_cost(t, x, a)`` receive a scalar time ``t``, an array of states
``x`` with shape ``(..., d)``, and a single control vector ``a`` of shape
``(m,)``; they return arrays broadcastable to ``x.shape[:-1]``.
``terminal_cost(x)`` takes the same ``x`` convention.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError, TruncatedRolloutError
from .grid import Grid, gradient_central_field

ARGMIN_TOL = 1e-12  # tie tolerance: first control within this of the minimum wins


@dataclass(frozen=True, eq=False)
class ControlSet:
    """Finite ordered list of control vectors; order is fixed for a run."""

    elements: np.ndarray

    def __post_init__(self):
        elems = np.atleast_1d(np.array(self.elements, dtype=float))
        if elems.ndim == 1:
            elems = elems[:, None]
        if elems.size == 0:
            raise ConfigurationError("control set must be non-empty")
        if len(np.unique(elems, axis=0)) != len(elems):
            raise ConfigurationError("control set elements must be distinct")
        elems.setflags(write=False)
        object.__setattr__(self, "elements", elems)

    @classmethod
    def uniform(cls, lo, hi, count):
        """Uniform sample of the interval [lo, hi] (scalar controls)."""
        if count < 1:
            raise ConfigurationError("control sample count must be >= 1")
        if count == 1:
            return cls(np.array([(lo + hi) / 2.0]))
        return cls(np.linspace(float(lo), float(hi), int(count)))

    @classmethod
    def singleton(cls, value):
        return cls(np.atleast_1d(np.asarray(value, dtype=float))[None, :])

    @property
    def size(self):
        return self.elements.shape[0]

    @property
    def control_dim(self):
        return self.elements.shape[1]


@dataclass(frozen=True, eq=False)
class ControlProblem:
    """Dynamics, running and terminal costs, and a finite control set.

    ``f_sup_bound`` is a user-declared bound on |dynamics| (Euclidean norm),
    used for the CFL/monotonicity constraint; it is checked by sampling on a
    refined probe grid before a solve starts.
    """

    dynamics: Callable
    running_cost: Callable
    terminal_cost: Callable
    controls: ControlSet
    f_sup_bound: float

    def __post_init__(self):
        if not (np.isfinite(self.f_sup_bound) and self.f_sup_bound >= 0.0):
            raise ConfigurationError("f_sup_bound must be a finite non-negative real")
        object.__setattr__(self, "f_sup_bound", float(self.f_sup_bound))


@dataclass(frozen=True, eq=False)
class PolicyField:
    """A control-index choice at every grid point of one time level."""

    grid: Grid
    time_label: float
    choices: np.ndarray
    n_controls: int

    def __post_init__(self):
        choices = np.array(self.choices, dtype=np.int64).ravel()
        if choices.size != self.grid.npoints:
            raise ConfigurationError("policy has wrong number of entries for its grid")
        if choices.min(initial=0) < 0 or choices.max(initial=0) >= self.n_controls:
            raise ConfigurationError("policy index out of range of the control set")
        choices.setflags(write=False)
        object.__setattr__(self, "choices", choices)


def _eval_candidates(problem, t, points, grads):
    """Cost-plus-advection value of every control at every point, (n, k)."""
    n = points.shape[0]
    cand = np.empty((n, problem.controls.size))
    for j, a in enumerate(problem.controls.elements):
        fj = np.broadcast_to(np.asarray(problem.dynamics(t, points, a), dtype=float),
                             points.shape)
        cj = np.broadcast_to(np.asarray(problem.running_cost(t, points, a), dtype=float),
                             (n,))
        cand[:, j] = cj + np.sum(grads * fj, axis=-1)
    return cand


def _first_argmin(cand):
    vmin = cand.min(axis=1)
    sel = (cand <= vmin[:, None] + ARGMIN_TOL).argmax(axis=1)
    return vmin, sel


def hamiltonian_field(problem, t, points, grads):
    """Vectorized min-over-controls Hamiltonian.

    Returns the minimum of c(t,x,a) + p . f(t,x,a) over the control list and
    the first attaining index (within an absolute tie tolerance of 1e-12),
    for each row of ``points``/``grads``.
    """
    cand = _eval_candidates(problem, t, points, grads)
    return _first_argmin(cand)


def hamiltonian_min(problem, t, x, p):
    """Pointwise numerical Hamiltonian: (value, argmin control index)."""
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ValueError("gradient argument must be finite")
    x = np.asarray(x, dtype=float).reshape(1, -1)
    values, sel = hamiltonian_field(problem, t, x, p.reshape(1, -1))
    return float(values[0]), int(sel[0])


def improve_policy(problem, value, t):
    """Pointwise argmin policy from the central-difference gradient of ``value``."""
    grid = value.grid
    grads = gradient_central_field(value)
    _, sel = hamiltonian_field(problem, t, grid.coordinates(), grads)
    return PolicyField(grid=grid, time_label=float(t), choices=sel,
                       n_controls=problem.controls.size)


def rollout_cost(problem, policies, start, dt):
    """Forward-Euler cost of following a time-indexed policy stack.

    ``policies`` are the per-level policies at times tau, 2*tau, ..., T (the
    control stored at level t acts on the interval [t - tau, t)).  Controls
    are looked up at the nearest grid point; leaving the grid on a clamped
    axis raises TruncatedRolloutError.
    """
    if not policies:
        raise ConfigurationError("rollout needs at least one policy level")
    labels = np.array([p.time_label for p in policies])
    if np.any(np.diff(labels) <= 0):
        raise ConfigurationError("policy levels must have increasing time labels")
    tau = labels[0]
    horizon = labels[-1]
    t0, x0 = start
    t0 = float(t0)
    if dt > tau + 1e-12:
        raise ConfigurationError(f"rollout step dt={dt} exceeds the scheme step tau={tau}")
    grid = policies[0].grid

    def scalar(raw):
        return float(np.broadcast_to(np.asarray(raw, dtype=float), (1,))[0])

    if t0 > horizon - 1e-12:
        x_t = np.asarray(x0, dtype=float).reshape(1, grid.dim)
        return scalar(problem.terminal_cost(x_t))

    x = np.asarray(x0, dtype=float).reshape(grid.dim)
    nsub = int(np.ceil((horizon - t0) / dt - 1e-12))
    step = (horizon - t0) / nsub
    cost = 0.0
    for j in range(nsub):
        s = t0 + j * step
        level = min(len(policies) - 1, int(np.floor(s / tau + 1e-9)))
        point = grid.nearest_index(x, on_exit=None)
        if point is None:
            raise TruncatedRolloutError(
                f"rollout left the clamped grid at t={s:.6g}, x={x}")
        a = problem.controls.elements[policies[level].choices[point]]
        cost += step * scalar(problem.running_cost(s, x[None, :], a))
        drift = np.broadcast_to(
            np.asarray(problem.dynamics(s, x[None, :], a), dtype=float), (1, grid.dim))
        x = x + step * drift[0]
    cost += scalar(problem.terminal_cost(x[None, :]))
    return cost


def probe_grid_coordinates(grid, refine=3):
    """Coordinates of a ``refine``-times finer lattice over the same box."""
    axes = []
    for axis in range(grid.dim):
        n = grid.points_per_axis[axis]
        count = refine * n if grid.periodic[axis] else refine * (n - 1) + 1
        axes.append(grid.origin[axis] + np.arange(count) * (grid.spacing / refine))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def validate_f_bound(problem, grid, times, refine=3):
    """Check the declared |f| bound by sampling on a refined probe grid."""
    points = probe_grid_coordinates(grid, refine)
    worst = 0.0
    for t in times:
        for a in problem.controls.elements:
            f = np.broadcast_to(np.asarray(problem.dynamics(t, points, a), dtype=float),
                                points.shape)
            worst = max(worst, float(np.max(np.sqrt(np.sum(f * f, axis=-1)))))
    if worst > problem.f_sup_bound * (1.0 + 1e-9) + 1e-300:
        raise ConfigurationError(
            f"declared f_sup_bound={problem.f_sup_bound} but sampled |f| reaches {worst}")
    return worst


def discrete_sup_norms(problem, grid, times):
    """Sup of |q| on the lattice and of |c| over (times, lattice, controls)."""
    points = grid.coordinates()
    q_sup = float(np.max(np.abs(np.broadcast_to(
        np.asarray(problem.terminal_cost(points), dtype=float), (points.shape[0],)))))
    c_sup = 0.0
    for t in times:
        for a in problem.controls.elements:
            c = np.broadcast_to(np.asarray(problem.running_cost(t, points, a), dtype=float),
                                (points.shape[0],))
            c_sup = max(c_sup, float(np.max(np.abs(c))))
    return q_sup, c_sup
