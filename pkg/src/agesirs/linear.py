"""Linear part of the evolution: boundary operator, semigroups, resolvent.

The generator acts on ``psi = (psi_1, psi_2, psi_3)`` as

    A psi = -psi' - mu psi + G(a) psi,   psi(0) = int_0^omega B(a) psi(a) da,

with

    G = [[0,  delta,            0],      B = [[beta, (1-p) beta, (1-q) beta],
         [0, -(delta + gamma),  0],           [0,    p beta,     0         ],
         [0,  gamma,            0]]           [0,    0,          q beta    ]]

Semigroups are computed by marching along characteristics with ``dt = da``:
each step carries node ``j - 1`` to node ``j`` with the exact survival
factor and the exact reaction exponential (rates frozen at the cell
midpoint), then closes the age-0 node with the trapezoid boundary
quadrature, solving for its own half-weight contribution.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConditioningError, DomainError
from .model import AgeGrid, MortalityModel, RateSet, StateField, _check_grid

__all__ = [
    "reaction_matrices",
    "boundary_matrices",
    "boundary_apply",
    "reaction_exponential",
    "LinearPropagator",
    "transport_semigroup_apply",
    "full_semigroup_apply",
    "resolvent_threshold",
    "resolvent_apply",
    "GeneratorResult",
    "generator_apply",
]

_SMALL_RATE = 1e-14


def reaction_matrices(rates: RateSet) -> np.ndarray:
    """Per-node reaction matrices ``G(a_j)``, shape ``(J+1, 3, 3)``."""
    n = rates.grid.size
    G = np.zeros((n, 3, 3))
    G[:, 0, 1] = rates.delta
    G[:, 1, 1] = -(rates.delta + rates.gamma)
    G[:, 2, 1] = rates.gamma
    return G


def boundary_matrices(rates: RateSet) -> np.ndarray:
    """Per-node boundary matrices ``B(a_j)``, shape ``(J+1, 3, 3)``."""
    n = rates.grid.size
    b = rates.beta
    B = np.zeros((n, 3, 3))
    B[:, 0, 0] = b
    B[:, 0, 1] = (1.0 - rates.p) * b
    B[:, 0, 2] = (1.0 - rates.q) * b
    B[:, 1, 1] = rates.p * b
    B[:, 2, 2] = rates.q * b
    return B


def _boundary_functional(values: np.ndarray, wb: np.ndarray, p: float, q: float) -> np.ndarray:
    s_int, i_int, r_int = values @ wb
    return np.array([s_int + (1.0 - p) * i_int + (1.0 - q) * r_int, p * i_int, q * r_int])


def boundary_apply(field: StateField, rates: RateSet) -> np.ndarray:
    """``int_0^omega B(a) psi(a) da`` by the trapezoid rule."""
    _check_grid(field, rates)
    wb = field.grid.weights * rates.beta
    return _boundary_functional(field.values, wb, rates.p, rates.q)


def _reaction_factors(t: float, delta: np.ndarray, gamma: np.ndarray):
    m = delta + gamma
    small = np.abs(m) < _SMALL_RATE
    safe = np.where(small, 1.0, m)
    mt = m * t
    decay = np.where(small, 1.0 - mt + 0.5 * mt * mt, np.exp(-mt))
    phi = np.where(small, t - 0.5 * m * t * t, -np.expm1(-safe * t) / safe)
    return decay, phi


def _apply_reaction(values: np.ndarray, decay, phi, delta, gamma) -> np.ndarray:
    s, i, r = values
    moved = phi * i
    return np.array([s + delta * moved, decay * i, r + gamma * moved])


def reaction_exponential(psi: StateField, t: float, rates: RateSet) -> StateField:
    """Apply ``exp(t G(a))`` pointwise in age.

    With ``m = delta + gamma``, infected mass decays like ``exp(-m t)`` and
    the outflow is split between ``s`` (fraction ``delta / m``) and ``r``
    (fraction ``gamma / m``).  For ``m`` below ``1e-14`` a second-order
    series replaces the division.
    """
    _check_grid(psi, rates)
    if t < 0:
        raise DomainError(f"time must be nonnegative, got {t}")
    decay, phi = _reaction_factors(float(t), rates.delta, rates.gamma)
    return StateField(psi.grid, _apply_reaction(psi.values, decay, phi, rates.delta, rates.gamma))


class LinearPropagator:
    """One ``dt`` step of the linear semigroup on raw ``(3, J+1)`` arrays.

    ``reaction=False`` gives the transport/renewal semigroup of
    ``A_1 + A_2`` alone.
    """

    def __init__(self, rates: RateSet, mortality: MortalityModel, reaction: bool = True):
        grid = _check_grid(rates, mortality)
        self.grid = grid
        self.reaction = reaction
        self.ratio = mortality.step_ratio
        self.p, self.q = rates.p, rates.q
        w = grid.weights
        self.wb_tail = (w * rates.beta)[1:]
        self.w0b0 = w[0] * rates.beta[0]
        if self.w0b0 >= 1.0:
            raise DomainError(
                f"dt = {grid.dt} too large: need dt * beta(0) / 2 < 1, got {self.w0b0}"
            )
        d_mid = 0.5 * (rates.delta[1:] + rates.delta[:-1])
        g_mid = 0.5 * (rates.gamma[1:] + rates.gamma[:-1])
        self._mid = (d_mid, g_mid)
        self._factors = _reaction_factors(grid.dt, d_mid, g_mid)

    def age(self, U: np.ndarray) -> np.ndarray:
        """Carry every cohort one node along its characteristic; age 0 left at zero."""
        V = np.empty_like(U)
        V[:, 0] = 0.0
        V[:, 1:] = U[:, :-1] * self.ratio
        if self.reaction:
            decay, phi = self._factors
            V[:, 1:] = _apply_reaction(V[:, 1:], decay, phi, *self._mid)
        return V

    def close_boundary(self, V: np.ndarray) -> np.ndarray:
        """Set the age-0 column from the boundary condition (in place)."""
        s_int, i_int, r_int = V[:, 1:] @ self.wb_tail
        h = self.w0b0
        i0 = self.p * i_int / (1.0 - self.p * h)
        r0 = self.q * r_int / (1.0 - self.q * h)
        s0 = (s_int + (1.0 - self.p) * (i_int + h * i0) + (1.0 - self.q) * (r_int + h * r0)) / (1.0 - h)
        V[:, 0] = (s0, i0, r0)
        return V

    def step(self, U: np.ndarray) -> np.ndarray:
        return self.close_boundary(self.age(U))

    def run(self, U: np.ndarray, steps: int) -> np.ndarray:
        for _ in range(steps):
            U = self.step(U)
        return U


def _check_horizon(t: float, T: Optional[float]):
    if t < 0 or (T is not None and t > T * (1 + 1e-12)):
        raise DomainError(f"time {t} outside [0, {T}]")


def transport_semigroup_apply(
    psi: StateField, t: float, rates: RateSet, mortality: MortalityModel, T: Optional[float] = None
) -> StateField:
    """Semigroup of ``A_1 + A_2``: aging, death and renewal, no reaction."""
    _check_horizon(t, T)
    steps = psi.grid.steps(t)
    prop = LinearPropagator(rates, mortality, reaction=False)
    return StateField(psi.grid, prop.run(psi.values.copy(), steps))


def full_semigroup_apply(
    psi: StateField, t: float, rates: RateSet, mortality: MortalityModel, T: Optional[float] = None
) -> StateField:
    """Semigroup of the full linear generator ``A_1 + A_2 + A_3``."""
    _check_horizon(t, T)
    steps = psi.grid.steps(t)
    prop = LinearPropagator(rates, mortality, reaction=True)
    return StateField(psi.grid, prop.run(psi.values.copy(), steps))


def resolvent_threshold(rates: RateSet, mortality: MortalityModel) -> float:
    """Resolvent exists for ``lambda`` strictly above ``||beta||_inf - mu0``."""
    return rates.beta_inf - mortality.mu0


def _convolution_matrix(grid: AgeGrid, log_e: np.ndarray) -> np.ndarray:
    """Trapezoid weights times ``E(a_j) / E(a_l)`` for ``l <= j``."""
    n = grid.size
    finite = np.isfinite(log_e)
    with np.errstate(invalid="ignore"):
        diff = log_e[:, None] - log_e[None, :]
    lower = np.tri(n, dtype=bool)
    ok = lower & finite[:, None] & finite[None, :]
    K = np.where(ok, np.exp(np.where(ok, diff, 0.0)), 0.0)
    W = np.tril(np.full((n, n), grid.da))
    W[:, 0] *= 0.5
    W[np.arange(n), np.arange(n)] = 0.5 * grid.da
    W[0, 0] = 0.0
    return W * K


def resolvent_apply(phi: StateField, lam: float, rates: RateSet, mortality: MortalityModel) -> StateField:
    """``(lam - A_1 - A_2)^{-1} phi`` from the closed-form solution.

    Each component is ``psi_i(a) = C_i E(a) + int_0^a phi_i(x) E(a)/E(x) dx``
    with ``E(a) = exp(-lam a) Pi(a)``; the constants come from imposing
    ``psi(0) = B psi`` on the discrete integrals, so the boundary condition
    holds exactly for the trapezoid quadrature.
    """
    grid = _check_grid(phi, rates, mortality)
    thr = resolvent_threshold(rates, mortality)
    if not lam > thr:
        raise DomainError(f"lambda = {lam} must exceed ||beta||_inf - mu0 = {thr}")
    a = grid.nodes
    log_e = -lam * a + mortality.log_survival
    E = np.where(np.isfinite(log_e), np.exp(np.where(np.isfinite(log_e), log_e, 0.0)), 0.0)
    E[mortality.survival_nodes == 0.0] = 0.0
    Q = phi.values @ _convolution_matrix(grid, log_e).T

    wb = grid.weights * rates.beta
    S = float(wb @ E)
    denoms = np.array([1.0 - S, 1.0 - rates.p * S, 1.0 - rates.q * S])
    if np.any(np.abs(denoms) < 1e-10):
        raise ConditioningError(f"resolvent denominator near zero: {denoms}")
    BQ = Q @ wb
    C2 = rates.p * BQ[1] / denoms[1]
    C3 = rates.q * BQ[2] / denoms[2]
    psi2 = C2 * E + Q[1]
    psi3 = C3 * E + Q[2]
    C1 = (BQ[0] + wb @ ((1.0 - rates.p) * psi2 + (1.0 - rates.q) * psi3)) / denoms[0]
    psi1 = C1 * E + Q[0]
    return StateField(grid, np.vstack([psi1, psi2, psi3]))


@dataclass(frozen=True, eq=False)
class GeneratorResult:
    values: StateField
    boundary_residual: np.ndarray


def generator_apply(
    psi: StateField, rates: RateSet, mortality: MortalityModel, include_reaction: bool = True
) -> GeneratorResult:
    """Discrete ``-psi' - mu psi (+ G psi)`` with second-order differences.

    Nodes where the death rate is infinite (``a = omega`` with a singular
    tail) are reported as zero.  The boundary condition enters only through
    ``boundary_residual = psi(0) - B psi``.
    """
    grid = _check_grid(psi, rates, mortality)
    v = psi.values
    dpsi = np.gradient(v, grid.da, axis=1, edge_order=2)
    mu = mortality.mu_nodes
    finite = np.isfinite(mu)
    out = np.zeros_like(v)
    out[:, finite] = -dpsi[:, finite] - mu[finite] * v[:, finite]
    if include_reaction:
        s, i, r = v
        out[0] += rates.delta * i
        out[1] -= (rates.delta + rates.gamma) * i
        out[2] += rates.gamma * i
        out[:, ~finite] = 0.0
    residual = v[:, 0] - boundary_apply(psi, rates)
    return GeneratorResult(StateField(grid, out), residual)
