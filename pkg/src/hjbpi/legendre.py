"""Generalized policy iteration for convex Hamiltonians via Legendre duality.

Here the Hamiltonian is handed over directly instead of arising from a
control set.  Before iterating, the Hamiltonian is clipped outside the
gradient range the solution can reach: beyond twice the solution's
Lipschitz bound it continues with a fixed slope ``m2``, which caps
|grad_p H| at m2 = 2N and makes the explicit scheme monotone with
viscosity coefficient N = m2/2.

Everything runs forward in time from initial data q.  A time-reversal
adapter (`reverse_time_slices`) maps these runs onto the backward control
formulation for cross-checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, MonotonicityError, NumericalBlowupError
from .grid import Field, gradient_central_values, laplacian_values
from .pi import MONOTONE_ABORT, MONOTONE_SLACK, fit_geometric_rate
from .scheme import SchemeParams

GRAD_FD_STEP = 1e-5   # relative central-difference step for grad_p fallback
LEGENDRE_POINTS = 41  # probe points per axis and stage in the numeric transform


@dataclass(frozen=True, eq=False)
class ConvexHamiltonian:
    """A Hamiltonian H(t, x, p), convex in p.

    ``func`` receives ``x`` of shape (..., d) and ``p`` of shape (..., d)
    and returns shape (...).  Optional analytic helpers avoid numeric
    fallbacks: ``grad_p`` with the same convention returning (..., d), and
    ``legendre_L(t, x, mu)`` for the convex dual.  ``probe_times`` and
    ``probe_points`` tell the clipping construction where to sample.
    """

    func: Callable
    dim: int = 1
    grad_p: Optional[Callable] = None
    legendre_L: Optional[Callable] = None
    p_probe_radius: float = 5.0
    probe_times: tuple = (0.0, 0.5, 1.0)
    probe_points: tuple = ((0.0,),)

    def value(self, t, x, p):
        return np.asarray(self.func(t, x, p), dtype=float)

    def gradient(self, t, x, p):
        if self.grad_p is not None:
            return np.asarray(self.grad_p(t, x, p), dtype=float)
        return _fd_gradient(self.func, t, x, p)

    def spot_check_convexity(self, rng=None, n_probes=64, scale=None):
        """Midpoint convexity on random p pairs; raises on a clear violation."""
        rng = rng or np.random.default_rng(0)
        scale = scale if scale is not None else self.p_probe_radius
        for t in self.probe_times:
            for x0 in self.probe_points:
                x = np.asarray(x0, dtype=float)[None, :]
                p1 = rng.uniform(-scale, scale, size=(n_probes, self.dim))
                p2 = rng.uniform(-scale, scale, size=(n_probes, self.dim))
                mid = self.value(t, x, 0.5 * (p1 + p2))
                avg = 0.5 * (self.value(t, x, p1) + self.value(t, x, p2))
                gap = float(np.max(mid - avg))
                if gap > 1e-9:
                    raise ConfigurationError(
                        f"Hamiltonian fails midpoint convexity by {gap:.3e} at t={t}")


def _fd_gradient(func, t, x, p):
    p = np.asarray(p, dtype=float)
    out = np.empty_like(p)
    step = GRAD_FD_STEP * (1.0 + np.sqrt(np.sum(p * p, axis=-1, keepdims=True)))
    for i in range(p.shape[-1]):
        dp = np.zeros_like(p)
        dp[..., i] = step[..., 0]
        hi = np.asarray(func(t, x, p + dp), dtype=float)
        lo = np.asarray(func(t, x, p - dp), dtype=float)
        out[..., i] = (hi - lo) / (2.0 * step[..., 0])
    return out


@dataclass(frozen=True, eq=False)
class ModifiedHamiltonian:
    """Three-branch clipping of a convex Hamiltonian outside |p| <= 2M.

    m1 is the probed minimum of H on |p| = 2M; m2 >= 2 the probed growth
    slope on |p| = 3M.  The clipped function keeps H where the solution's
    gradients live and grows linearly with slope m2 far out, so
    |grad_p H~| <= m2 = 2N.
    """

    base: ConvexHamiltonian
    M: float
    m1: float
    m2: float

    @property
    def N(self):
        return self.m2 / 2.0

    @property
    def dim(self):
        return self.base.dim

    def value(self, t, x, p):
        p = np.asarray(p, dtype=float)
        norm = np.sqrt(np.sum(p * p, axis=-1))
        inner = np.asarray(self.base.func(t, x, p), dtype=float)
        linear = self.m1 + self.m2 * (norm - 2.0 * self.M)
        out = np.where(norm <= 2.0 * self.M, inner,
                       np.where(norm <= 3.0 * self.M, np.maximum(inner, linear), linear))
        return out

    def gradient(self, t, x, p):
        p = np.asarray(p, dtype=float)
        norm = np.sqrt(np.sum(p * p, axis=-1, keepdims=True))
        safe = np.where(norm > 0.0, norm, 1.0)
        radial = self.m2 * p / safe
        inner_grad = self.base.gradient(t, x, p)
        inner_val = np.asarray(self.base.func(t, x, p), dtype=float)[..., None]
        linear_val = (self.m1 + self.m2 * (norm - 2.0 * self.M))
        middle = np.where(inner_val >= linear_val, inner_grad, radial)
        return np.where(norm <= 2.0 * self.M, inner_grad,
                        np.where(norm <= 3.0 * self.M, middle, radial))

    def dual(self, t, x, mu):
        """Legendre transform at mu; analytic when the base provides it."""
        if self.base.legendre_L is not None:
            return np.asarray(self.base.legendre_L(t, x, mu), dtype=float)
        mu = np.asarray(mu, dtype=float)
        flat = mu.reshape(-1, self.dim)
        xs = np.broadcast_to(np.asarray(x, dtype=float), flat.shape)
        out = np.array([
            legendre_transform_numeric(self, t, xs[i], flat[i]) for i in range(len(flat))])
        return out.reshape(mu.shape[:-1])


def _sphere_points(dim, radius, count=64, seed=0):
    if dim == 1:
        return np.array([[-radius], [radius]])
    if dim == 2:
        angles = np.linspace(0.0, 2.0 * math.pi, count, endpoint=False)
        return radius * np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(count, dim))
    return radius * v / np.linalg.norm(v, axis=-1, keepdims=True)


def modify_hamiltonian(H, M):
    """Probe m1 and m2 and build the clipped Hamiltonian.

    Also spot-checks convexity of the base and the gradient cap
    |grad_p H~| <= m2 on the probe set.
    """
    if not M > 0.0:
        raise ConfigurationError("Lipschitz bound M must be positive")
    H.spot_check_convexity(scale=max(3.0 * M, 1.0))

    sphere2 = _sphere_points(H.dim, 2.0 * M)
    sphere3 = _sphere_points(H.dim, 3.0 * M)
    m1 = math.inf
    m2_probe = -math.inf
    for t in H.probe_times:
        for x0 in H.probe_points:
            x = np.asarray(x0, dtype=float)[None, :]
            m1 = min(m1, float(np.min(H.value(t, x, sphere2))))
    for t in H.probe_times:
        for x0 in H.probe_points:
            x = np.asarray(x0, dtype=float)[None, :]
            m2_probe = max(m2_probe, float(np.max((H.value(t, x, sphere3) - m1) / M)))
    mod = ModifiedHamiltonian(base=H, M=float(M), m1=m1, m2=max(2.0, m2_probe))

    rng = np.random.default_rng(1)
    probes = rng.uniform(-4.0 * M, 4.0 * M, size=(256, H.dim))
    for t in H.probe_times:
        for x0 in H.probe_points:
            x = np.asarray(x0, dtype=float)[None, :]
            g = mod.gradient(t, x, probes)
            worst = float(np.max(np.sqrt(np.sum(g * g, axis=-1))))
            if worst > mod.m2 * (1.0 + 1e-6):
                raise ConfigurationError(
                    f"clipped Hamiltonian gradient reaches {worst:.4g} > m2={mod.m2:.4g}")
    return mod


def legendre_resolution(H, radius=None):
    """p-resolution of the refined stage of the numeric transform."""
    r = radius if radius is not None else _probe_radius(H)
    coarse = 2.0 * r / (LEGENDRE_POINTS - 1)
    return 2.0 * coarse / (LEGENDRE_POINTS - 1)


def _probe_radius(H):
    if isinstance(H, ModifiedHamiltonian):
        return 3.0 * H.M + 2.0
    return H.p_probe_radius


def _axis_grid(center, radius, n):
    return center + np.linspace(-radius, radius, n)


def legendre_transform_numeric(H, t, x, mu):
    """sup_p [p . mu - H(t, x, p)] by a coarse-then-refined grid scan.

    For a clipped Hamiltonian the dual is finite only for |mu| <= m2 = 2N;
    values outside that range are a domain error.  For a raw Hamiltonian
    the scan is capped at its probe radius, so slopes beyond it saturate.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    dim = mu.size
    if isinstance(H, ModifiedHamiltonian):
        norm = float(np.sqrt(np.sum(mu * mu)))
        if norm > H.m2 * (1.0 + 1e-9):
            raise ConfigurationError(
                f"|mu|={norm:.4g} outside the admissible range (2N={H.m2:.4g})")
    evaluate = H.value
    radius = _probe_radius(H)

    def scan(center, r):
        axes = [_axis_grid(center[i], r, LEGENDRE_POINTS) for i in range(dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        scores = pts @ mu - evaluate(t, x[None, :], pts)
        k = int(np.argmax(scores))
        return float(scores[k]), pts[k]

    best, arg = scan(np.zeros(dim), radius)
    coarse_step = 2.0 * radius / (LEGENDRE_POINTS - 1)
    refined, _ = scan(arg, coarse_step)
    return max(best, refined)


@dataclass(eq=False)
class GeneralizedPIRun:
    """Mirror of a control-formulation PIRun for the forward convex iteration."""

    params: SchemeParams
    modified: ModifiedHamiltonian
    fixed_point: list                     # Fields at levels 0..steps (forward)
    iterates: list                        # (iteration, list of Fields), thinned
    errors_to_fixed_point: np.ndarray
    errors_l2: np.ndarray                 # at the far end t = T
    advection_l2: np.ndarray              # l2 distance of grad_p H~ to the fixed point's
    gradient_sup: np.ndarray              # max |grad_h v_n| per iteration
    monotonicity_worst: np.ndarray
    monotonicity_violation_count: int
    worst_monotonicity: float
    iterations_used: int
    stop_reason: str
    legendre_resolution: float            # 0.0 when an analytic dual was used

    def fit(self, burn_in=2):
        return fit_geometric_rate(self.errors_to_fixed_point, burn_in)


def _forward_direct(mod, grid, params, q_values, threshold):
    slices = [Field(grid=grid, values=q_values, time_label=0.0)]
    coords = grid.coordinates()
    for k in range(params.steps):
        t = params.time(k)
        v = slices[-1].values
        grads = gradient_central_values(grid, v)
        lap = laplacian_values(grid, v)
        new = v + params.tau * (params.N * params.h * lap - mod.value(t, coords, grads))
        _check_forward(new, params.time(k + 1), threshold)
        slices.append(Field(grid=grid, values=new, time_label=params.time(k + 1)))
    return slices


def _check_forward(values, t, threshold):
    bad = ~np.isfinite(values)
    if np.any(bad):
        point = int(np.flatnonzero(bad)[0])
        raise NumericalBlowupError(f"non-finite value at t={t:.6g}, index {point}",
                                   time_label=t, point=point)
    over = np.abs(values) > threshold
    if np.any(over):
        point = int(np.flatnonzero(over)[0])
        raise NumericalBlowupError(
            f"value {values[point]:.6g} at t={t:.6g} exceeds threshold {threshold:.6g}",
            time_label=t, point=point, value=float(values[point]))


def reverse_time_slices(solution):
    """Backward-solution slices reindexed as a forward run (t -> T - t)."""
    slices = getattr(solution, "slices", solution)
    return list(reversed(list(slices)))


def generalized_pi(H, q, grid, T, M, tau=None, v0=None, max_iterations=60,
                   stop_tolerance=1e-10, record_every=10):
    """Iterate the linearized forward equation against frozen coefficients.

    Each iterate freezes the advection field grad_p H~ and the dual values
    at the previous iterate's gradients, then solves the resulting linear
    equation forward from v(0) = q.  At the linearization point the dual is
    evaluated through the Fenchel equality p . grad_p H~(p) - H~(p) (or the
    analytic dual when provided), which keeps the monotone-decrease
    property sharp instead of noisy at the numeric-transform resolution.
    """
    mod = modify_hamiltonian(H, M)
    params = SchemeParams.create(grid.spacing, T, f_sup_bound=mod.m2, tau=tau,
                                 N=mod.N, dim=grid.dim)
    coords = grid.coordinates()
    q_values = np.broadcast_to(np.asarray(q(coords), dtype=float), (grid.npoints,)).copy()

    h0 = 0.0
    for t in H.probe_times:
        h0 = max(h0, float(np.max(np.abs(mod.value(t, coords, np.zeros_like(coords))))))
    threshold = 10.0 * (float(np.max(np.abs(q_values))) + h0 * T + 1.0)

    fixed = _forward_direct(mod, grid, params, q_values, threshold)
    fixed_values = np.stack([f.values for f in fixed])
    fixed_advection = [
        mod.gradient(params.time(k), coords,
                     gradient_central_values(grid, fixed[k].values))
        for k in range(params.steps)]

    if v0 is None:
        current = [Field(grid=grid, values=q_values, time_label=params.time(k))
                   for k in range(params.steps + 1)]
    else:
        current = list(v0)
    analytic_dual = H.legendre_L is not None
    resolution = 0.0 if analytic_dual else legendre_resolution(mod)

    errors, errors_l2, adv_l2, grad_sup, mono_worst = [], [], [], [], []
    iterates = []
    violation_count = 0
    worst_violation = 0.0
    prev_values = None
    stop_reason = "max_iterations"

    for n in range(max_iterations):
        slices = [Field(grid=grid, values=q_values, time_label=0.0)]
        worst_grad = 0.0
        worst_adv = 0.0
        for k in range(params.steps):
            t = params.time(k)
            p_prev = gradient_central_values(grid, current[k].values)
            worst_grad = max(worst_grad, float(np.max(np.abs(p_prev))))
            b = mod.gradient(t, coords, p_prev)
            bdiff = b - fixed_advection[k]
            worst_adv = max(worst_adv, float(np.sqrt(np.sum(bdiff * bdiff))))
            if analytic_dual:
                dual = np.asarray(H.legendre_L(t, coords, b), dtype=float)
            else:
                dual = np.sum(p_prev * b, axis=-1) - mod.value(t, coords, p_prev)
            v = slices[-1].values
            grads = gradient_central_values(grid, v)
            lap = laplacian_values(grid, v)
            new = v + params.tau * (dual - np.sum(b * grads, axis=-1)
                                    + params.N * params.h * lap)
            _check_forward(new, params.time(k + 1), threshold)
            slices.append(Field(grid=grid, values=new, time_label=params.time(k + 1)))

        values = np.stack([s.values for s in slices])
        diff = values - fixed_values
        errors.append(float(np.max(np.abs(diff))))
        errors_l2.append(float(np.sqrt(np.sum(diff[-1] ** 2))))
        adv_l2.append(worst_adv)
        grad_sup.append(worst_grad)

        if prev_values is None:
            mono_worst.append(0.0)
        else:
            increase = float(np.max(values - prev_values))
            mono_worst.append(max(0.0, increase))
            worst_violation = max(worst_violation, mono_worst[-1])
            violation_count += int(np.count_nonzero(values - prev_values > MONOTONE_SLACK))
            if increase > MONOTONE_ABORT:
                raise MonotonicityError(
                    f"generalized iterate {n} rose {increase:.3e} above its predecessor")

        if n % record_every == 0:
            iterates.append((n, slices))
        if prev_values is not None and float(np.max(np.abs(values - prev_values))) < stop_tolerance:
            stop_reason = "tolerance"
            if iterates[-1][0] != n:
                iterates.append((n, slices))
            break
        prev_values = values
        current = slices
    else:
        if iterates[-1][0] != max_iterations - 1:
            iterates.append((max_iterations - 1, slices))

    return GeneralizedPIRun(
        params=params,
        modified=mod,
        fixed_point=fixed,
        iterates=iterates,
        errors_to_fixed_point=np.array(errors),
        errors_l2=np.array(errors_l2),
        advection_l2=np.array(adv_l2),
        gradient_sup=np.array(grad_sup),
        monotonicity_worst=np.array(mono_worst),
        monotonicity_violation_count=violation_count,
        worst_monotonicity=worst_violation,
        iterations_used=len(errors),
        stop_reason=stop_reason,
        legendre_resolution=resolution,
    )
