"""Two independent routes to the nonlinear trajectory.

``simulate_direct`` marches the shifted, truncated system along
characteristics: age + survival + reaction (exact), then an exponential
midpoint step for ``y' = -c y + F(y)`` with ``F`` cone-preserving, then the
renewal boundary.  Every substep maps nonnegative states to nonnegative
states.

``picard_solve`` iterates the variation-of-constants formula

    x(t) = S(t) x0 + int_0^t S(t - s) f(s, x(s)) ds

on the grid times, with the trapezoid rule in ``s`` and the discrete
semigroup ``S(t_m) = P^m``.  The shifted form replaces ``S`` by
``rho^m P^m`` (``rho`` the (1,1) Pade approximant of ``exp(-c dt)``) and
``f`` by ``f + c x``; its quadrature weights are chosen so that the two
discrete fixed-point problems have exactly the same solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .demography import solve_mckendrick
from .errors import DomainError, NonConvergenceError, NumericalFailure, PositivityFailure
from .infection import ForceVariant, XiClamp, force_values
from .linear import LinearPropagator
from .model import AgeGrid, MixingKernel, Model, ModelConstants, StateField

__all__ = [
    "Trajectory",
    "PicardSettings",
    "simulate_direct",
    "picard_solve",
    "truncation_inactive_check",
    "continuous_dependence_probe",
    "mass_consistency_check",
    "gronwall_check",
    "positivity_check",
    "sup_distance",
]

POSITIVITY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States at ``t_m = m dt``; ``values`` has shape ``(steps + 1, 3, J + 1)``."""

    grid: AgeGrid
    values: np.ndarray

    @property
    def dt(self) -> float:
        return self.grid.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.values.shape[0]) * self.grid.dt

    @property
    def steps(self) -> int:
        return self.values.shape[0] - 1

    def field(self, m: int) -> StateField:
        return StateField(self.grid, self.values[m])

    def norms(self) -> np.ndarray:
        return np.abs(self.values).sum(axis=1) @ self.grid.weights

    def min(self) -> float:
        return float(self.values.min())

    def coarsen(self, grid: AgeGrid) -> "Trajectory":
        """Restrict to a coarser grid whose nodes and times are a subset of ours."""
        r = self.grid.J // grid.J
        if r * grid.J != self.grid.J or grid.omega != self.grid.omega:
            raise DomainError("target grid is not a coarsening of this one")
        return Trajectory(grid, self.values[::r, :, ::r])

    def rows(self):
        a = self.grid.nodes
        for m, t in enumerate(self.times):
            s, i, r = self.values[m]
            for j in range(self.grid.size):
                yield (t, a[j], s[j], i[j], r[j])


def sup_distance(x: Trajectory, y: Trajectory) -> float:
    """``sup_m ||x(t_m) - y(t_m)||_1`` on a common grid."""
    if x.grid != y.grid or x.values.shape != y.values.shape:
        raise DomainError("trajectories live on different grids")
    diff = np.abs(x.values - y.values).sum(axis=1) @ x.grid.weights
    return float(diff.max())


def _phi1(c: float, h: float) -> float:
    """``(1 - exp(-c h)) / c`` with the ``c -> 0`` limit."""
    return h if c == 0 else -math.expm1(-c * h) / c


def _setup(model: Model, x0: StateField, T: float, constants: Optional[ModelConstants]):
    if x0.grid != model.grid:
        raise DomainError("initial state lives on a different grid than the model")
    if not T > 0:
        raise DomainError(f"horizon must be positive, got {T}")
    steps = model.grid.steps(T)
    consts = constants if constants is not None else model.constants(x0.l1_norm(), T)
    clamp = XiClamp.from_constants(consts)
    return steps, consts, clamp


def simulate_direct(
    x0: StateField, model: Model, T: float, constants: Optional[ModelConstants] = None
) -> Trajectory:
    """March the shifted, truncated system along characteristics up to ``T``.

    Raises
    ------
    NumericalFailure
        NaN or overflow, naming the step.
    PositivityFailure
        A component dropped below ``-1e-10``.
    """
    if x0.min() < 0:
        raise DomainError("initial state must be nonnegative")
    steps, consts, clamp = _setup(model, x0, T, constants)
    variant = ForceVariant.build("shifted", model.force, consts)
    c = variant.shift
    kernel = model.kernel
    dt = model.grid.dt
    prop = LinearPropagator(model.rates, model.mortality)
    e_half, e_full = math.exp(-0.5 * c * dt), math.exp(-c * dt)
    p_half, p_full = _phi1(c, 0.5 * dt), _phi1(c, dt)

    out = np.empty((steps + 1, 3, model.grid.size))
    out[0] = U = x0.values.copy()
    for m in range(steps):
        t = m * dt
        V = prop.step(U)
        pred = e_half * V + p_half * force_values(variant, t, V, kernel, clamp)
        Y = e_full * V + p_full * force_values(variant, t + 0.5 * dt, pred, kernel, clamp)
        U = prop.close_boundary(Y)
        if not np.all(np.isfinite(U)):
            raise NumericalFailure(f"non-finite state at step {m + 1} (t = {t + dt:g})")
        lo = U.min()
        if lo < -POSITIVITY_TOL:
            raise PositivityFailure(f"negative density {lo:.3e} at step {m + 1} (t = {t + dt:g})")
        out[m + 1] = U
    return Trajectory(model.grid, out)


@dataclass
class PicardSettings:
    tol: float = 1e-8
    max_iter: int = 200
    formulation: str = "unshifted"
    start: str = "linear"

    def __post_init__(self):
        if not self.tol > 0:
            raise DomainError("tol must be positive")
        if self.max_iter < 1:
            raise DomainError("max_iter must be >= 1")
        if self.formulation not in ("unshifted", "shifted"):
            raise DomainError("formulation must be 'unshifted' or 'shifted'")
        if self.start not in ("linear", "zero"):
            raise DomainError("start must be 'linear' or 'zero'")


@dataclass
class PicardLog:
    deltas: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.deltas)


def _linear_flow(prop: LinearPropagator, x0: np.ndarray, steps: int) -> np.ndarray:
    out = np.empty((steps + 1,) + x0.shape)
    out[0] = U = x0
    for m in range(steps):
        U = prop.step(U)
        out[m + 1] = U
    return out


def picard_solve(
    x0: StateField,
    model: Model,
    T: float,
    settings: Optional[PicardSettings] = None,
    constants: Optional[ModelConstants] = None,
):
    """Successive substitution on the discrete mild-solution equation.

    Returns ``(Trajectory, PicardLog)``.  The iteration stops once
    ``sup_m ||x_{k+1}(t_m) - x_k(t_m)||_1 < tol``.

    Raises
    ------
    NonConvergenceError
        ``max_iter`` iterations without reaching ``tol``; carries the deltas.
    """
    settings = settings or PicardSettings()
    steps, consts, clamp = _setup(model, x0, T, constants)
    grid, kernel = model.grid, model.kernel
    dt = grid.dt
    shifted = settings.formulation == "shifted"
    variant = ForceVariant.build("shifted" if shifted else "truncated", model.force, consts)
    c = variant.shift
    if c * dt >= 2.0:
        raise DomainError(f"shifted Picard needs c * dt < 2 (c = {c:g}, dt = {dt:g}); refine the grid")
    half = 0.5 * dt
    # y_{m+1} = rho P (y_m + w_left F_m) + w_right F_{m+1}
    rho = (1.0 - c * half) / (1.0 + c * half)
    w_left = half / (1.0 - c * half)
    w_right = half / (1.0 + c * half)

    prop = LinearPropagator(model.rates, model.mortality)
    times = np.arange(steps + 1) * dt
    if settings.start == "linear":
        X = _linear_flow(prop, x0.values.copy(), steps)
    else:
        X = np.zeros((steps + 1, 3, grid.size))

    log = PicardLog()
    weights = grid.weights
    for _ in range(settings.max_iter):
        F = np.array([force_values(variant, times[m], X[m], kernel, clamp) for m in range(steps + 1)])
        new = np.empty_like(X)
        new[0] = Y = x0.values.copy()
        for m in range(steps):
            Y = rho * prop.step(Y + w_left * F[m]) + w_right * F[m + 1]
            new[m + 1] = Y
        if not np.all(np.isfinite(new)):
            raise NumericalFailure(f"non-finite Picard iterate at iteration {log.iterations + 1}")
        delta = float((np.abs(new - X).sum(axis=1) @ weights).max())
        log.deltas.append(delta)
        X = new
        if delta < settings.tol:
            return Trajectory(grid, X), log
    raise NonConvergenceError(
        f"Picard iteration did not reach tol={settings.tol:g} in {settings.max_iter} iterations "
        f"(last delta {log.deltas[-1]:.3e})",
        last_delta=log.deltas[-1],
        deltas=log.deltas,
    )


def truncation_inactive_check(traj: Trajectory, kernel: MixingKernel, clamp: XiClamp) -> dict:
    """Certify that the clamp never acted: ``max |Lambda(a, i(t))| < z1``."""
    lam = np.abs(traj.values[:, 1, :] @ kernel.weighted.T)
    worst = float(lam.max())
    inactive = worst < clamp.z1 or (worst == 0.0 and clamp.z2 == 0.0)
    return {
        "name": "truncation_inactive",
        "value": worst,
        "bound": clamp.z1,
        "margin": clamp.z1 - worst,
        "passed": bool(inactive),
    }


def mass_consistency_check(traj: Trajectory, model: Model, factor: float = 5.0) -> dict:
    """Compare ``s + i + r`` against the independent total-population solve."""
    n0 = traj.values[0].sum(axis=0)
    _, pop = solve_mckendrick(n0, model.rates, model.mortality, traj.steps * traj.dt)
    diff = np.abs(traj.values.sum(axis=1) - pop.n) @ traj.grid.weights
    n0_norm = float(np.abs(n0) @ traj.grid.weights)
    rel = diff / n0_norm if n0_norm > 0 else diff
    worst = float(rel.max())
    bound = factor * traj.grid.da
    return {"name": "mass_consistency", "value": worst, "bound": bound, "passed": worst <= bound}


def gronwall_check(traj: Trajectory, constants: ModelConstants, linear: bool = True) -> dict:
    """``sup_t ||x(t)|| < R`` compared in log space (``R`` overflows easily)."""
    worst = float(traj.norms().max())
    log_r = constants.log_radius(linear)
    log_w = math.log(worst) if worst > 0 else -math.inf
    return {
        "name": "gronwall_radius",
        "value": worst,
        "log_value": log_w,
        "log_bound": log_r,
        "passed": bool(log_w < log_r),
    }


def positivity_check(traj: Trajectory, tol: float = 1e-12) -> dict:
    lo = traj.min()
    return {"name": "positivity", "value": lo, "bound": -tol, "passed": bool(lo >= -tol)}


def continuous_dependence_probe(
    x0: StateField,
    perturbation_scales: Sequence[float],
    model: Model,
    T: float,
    seed: int = 0,
    constants: Optional[ModelConstants] = None,
) -> dict:
    """Empirical Lipschitz constant of the flow map against its Gronwall bound.

    Each scale perturbs ``x0`` by a seeded random nonnegative field of that
    L1 size; all runs share the constants built from the unperturbed ``x0``.
    """
    consts = constants if constants is not None else model.constants(x0.l1_norm(), T)
    linear = model.force.is_linear
    log_bound = consts.log_dependence_bound(linear)
    base = simulate_direct(x0, model, T, consts)
    rng = np.random.default_rng(seed)
    entries = []
    for scale in perturbation_scales:
        if scale < 0:
            raise DomainError("perturbation scales must be nonnegative")
        bump = rng.random((3, model.grid.size))
        bump *= scale / (np.abs(bump).sum(axis=0) @ model.grid.weights)
        other = simulate_direct(StateField(model.grid, x0.values + bump), model, T, consts)
        dist = sup_distance(base, other)
        size = float(np.abs(bump).sum(axis=0) @ model.grid.weights)
        if size == 0:
            entries.append({"scale": scale, "distance": dist, "ratio": None, "excluded": True})
            continue
        ratio = dist / size
        entries.append({
            "scale": scale, "distance": dist, "ratio": ratio,
            "log_ratio": math.log(ratio) if ratio > 0 else -math.inf,
            "excluded": False,
        })
    ratios = [e["ratio"] for e in entries if not e["excluded"]]
    violations = sum(1 for e in entries if not e["excluded"] and e["log_ratio"] > log_bound)
    return {
        "name": "continuous_dependence",
        "entries": entries,
        "max_ratio": max(ratios) if ratios else 0.0,
        "log_bound": log_bound,
        "L": consts.L,
        "violations": violations,
        "passed": violations == 0,
    }
