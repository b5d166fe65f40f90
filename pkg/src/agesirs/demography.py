"""Total-population dynamics: McKendrick-von Foerster with a renewal boundary.

Summing the three compartments removes every epidemic term and leaves

    n_t + n_a = -mu n,   n(0, t) = int beta n da,   n(a, 0) = n0(a).

Along characteristics (``dt = da``) the density is carried exactly by the
survival ratio, so the only unknown is the birth flux ``b(t) = n(0, t)``,
which solves a Volterra equation of the second kind.  This module marches
that equation directly; it shares no code path with the three-compartment
solvers and is used as their mass-conservation oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .model import AgeGrid, ModelConstants, MortalityModel, RateSet, _check_grid

__all__ = [
    "survival",
    "BirthHistory",
    "PopulationTrajectory",
    "solve_mckendrick",
    "population_bound_check",
]


def survival(mortality: MortalityModel, a):
    """Probability of surviving to age ``a``.

    The regular part of the death rate is integrated exactly (it is
    piecewise linear); the singular tail contributes the factor
    ``((omega - a) / omega) ** theta``.

    Raises
    ------
    DomainError
        If any ``a`` lies outside ``[0, omega]``.
    """
    arr = np.asarray(a, dtype=float)
    omega = mortality.grid.omega
    tol = 1e-12 * omega
    if np.any(arr < -tol) or np.any(arr > omega + tol):
        raise DomainError(f"age outside [0, {omega}]: {a}")
    arr = np.clip(arr, 0.0, omega)
    with np.errstate(divide="ignore"):
        out = np.exp(mortality.log_survival_at(arr))
    if mortality.theta > 0:
        out = np.where(arr >= omega, 0.0, out)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class BirthHistory:
    """Boundary values ``b_m = n(0, t_m)`` at ``t_m = m dt``."""

    grid: AgeGrid
    b: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.b.size) * self.grid.dt


@dataclass(frozen=True, eq=False)
class PopulationTrajectory:
    grid: AgeGrid
    n: np.ndarray  # (steps + 1, J + 1)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n.shape[0]) * self.grid.dt

    def norms(self) -> np.ndarray:
        return np.abs(self.n) @ self.grid.weights


def solve_mckendrick(n0, rates: RateSet, mortality: MortalityModel, T: float):
    """Solve the total-population problem up to ``T``.

    The renewal equation

        b(t) = int_0^min(t, omega) beta(a) Pi(a) b(t - a) da
               + int_t^omega beta(a) n0(a - t) Pi(a) / Pi(a - t) da

    is discretised with the trapezoid rule on the age grid and marched in
    ``t``; the ``b(t)`` term that appears on both sides (age 0) is moved to
    the left and solved for.

    Returns
    -------
    (BirthHistory, PopulationTrajectory)
    """
    grid = _check_grid(rates, mortality)
    n0 = np.asarray(n0, dtype=float)
    if n0.shape != (grid.size,):
        raise DomainError(f"n0 must have {grid.size} nodal values, got {n0.shape}")
    if np.any(n0 < 0):
        raise DomainError("n0 must be nonnegative")
    steps = grid.steps(T)
    J = grid.J
    w = grid.weights
    beta = rates.beta
    pi = mortality.survival_nodes

    diag = 1.0 - w[0] * beta[0]
    if diag <= 0:
        raise DomainError(f"dt = {grid.dt} too large for beta(0) = {beta[0]}")

    kern = w * beta * pi  # weight of b(t - a_j) in the renewal sum
    wb = w * beta

    b = np.zeros(steps + 1)
    n = np.zeros((steps + 1, grid.size))
    n[0] = n0
    b[0] = wb @ n0
    jj = np.arange(grid.size)
    for m in range(1, steps + 1):
        # cohorts present at t = 0: ages a_j >= t_m
        j_old = jj[m:]
        carried = n0[j_old - m] * mortality.survival_ratio(j_old, j_old - m)
        # cohorts born after t = 0: 1 <= j < m
        j_new = jj[1:min(m, J + 1)]
        history = b[m - j_new]
        b[m] = (wb[j_old] @ carried + kern[j_new] @ history) / diag
        n[m, j_old] = carried
        n[m, j_new] = history * pi[j_new]
        n[m, 0] = b[m]
    return BirthHistory(grid, b), PopulationTrajectory(grid, n)


def population_bound_check(traj: PopulationTrajectory, constants: ModelConstants) -> dict:
    """Compare ``||n(t)|| / ||n0||`` with the growth bound ``M`` at every time node."""
    norms = traj.norms()
    n0 = norms[0]
    ratios = norms / n0 if n0 > 0 else np.zeros_like(norms)
    worst = float(ratios.max())
    return {
        "name": "population_growth_bound",
        "value": worst,
        "bound": constants.M,
        "margin": constants.M - worst,
        "passed": bool(worst <= constants.M),
    }
