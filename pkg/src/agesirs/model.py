"""Model data for the age-structured SIRS system.

Everything lives on a uniform age grid ``a_j = j * da`` (``j = 0..J``) over
``[0, omega]``.  Rate tables are nodal values of piecewise-linear functions,
so essential infima/suprema are nodal minima/maxima and the composite
trapezoid rule integrates the rates themselves exactly.

The death rate is split into a regular table plus an analytic tail
``theta / (omega - a)``; with ``theta > 0`` its integral diverges at
``omega`` and the survival probability vanishes there in closed form.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .errors import DomainError, StructuralError

__all__ = [
    "AgeGrid",
    "MortalityModel",
    "RateSet",
    "MixingKernel",
    "StateField",
    "ForceSpec",
    "ModelConstants",
    "Model",
    "HypothesisCheck",
    "ValidationReport",
    "validate_hypotheses",
    "derive_constants",
    "l1_norm",
    "C_HAT_SAFETY",
    "EXTINCT",
]

C_HAT_SAFETY = 1.01
# survival below this is treated as an extinct cohort
EXTINCT = 1e-300
_LOG_EXTINCT = math.log(EXTINCT)


def _nodal(name: str, values, n: int) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise StructuralError(
            f"{name}: expected {n} nodal values, got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise StructuralError(f"{name}: table contains non-finite values")
    return arr


@dataclass(frozen=True, eq=False)
class AgeGrid:
    """Uniform grid on ``[0, omega]`` with ``J`` cells; time steps use ``dt = da``."""

    omega: float
    J: int

    def __post_init__(self):
        if not self.omega > 0:
            raise DomainError(f"omega must be positive, got {self.omega}")
        if int(self.J) != self.J or self.J < 2:
            raise DomainError(f"J must be an integer >= 2, got {self.J}")
        object.__setattr__(self, "J", int(self.J))
        object.__setattr__(self, "omega", float(self.omega))

    @property
    def da(self) -> float:
        return self.omega / self.J

    @property
    def dt(self) -> float:
        return self.da

    @property
    def size(self) -> int:
        return self.J + 1

    @cached_property
    def nodes(self) -> np.ndarray:
        nodes = np.arange(self.J + 1) * self.da
        nodes[-1] = self.omega
        return nodes

    @cached_property
    def weights(self) -> np.ndarray:
        w = np.full(self.J + 1, self.da)
        w[0] = w[-1] = 0.5 * self.da
        return w

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Composite trapezoid rule along the last axis."""
        return np.asarray(values) @ self.weights

    def steps(self, t: float) -> int:
        """Number of ``dt`` steps in ``t``; ``t`` must sit on the time grid."""
        if t < 0:
            raise DomainError(f"time must be nonnegative, got {t}")
        m = int(round(t / self.dt))
        if abs(m * self.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise DomainError(f"time {t} is not a multiple of dt = {self.dt}")
        return m

    def refined(self, J: int) -> "AgeGrid":
        return AgeGrid(self.omega, J)

    def interpolate(self, values, other: "AgeGrid") -> np.ndarray:
        """Carry a nodal table onto ``other`` by piecewise-linear interpolation."""
        if other.omega != self.omega:
            raise StructuralError("cannot interpolate across different omega")
        return np.interp(other.nodes, self.nodes, np.asarray(values, dtype=float))

    def __eq__(self, other):
        return (
            isinstance(other, AgeGrid)
            and self.J == other.J
            and self.omega == other.omega
        )

    def __hash__(self):
        return hash((self.omega, self.J))


def _check_grid(*objs):
    grids = [o.grid for o in objs]
    first = grids[0]
    for g in grids[1:]:
        if g != first:
            raise StructuralError(
                f"tables live on different grids: J={first.J} vs J={g.J}"
            )
    return first


@dataclass(frozen=True, eq=False)
class MortalityModel:
    """Death rate ``mu(a) = mu_reg(a) + theta / (omega - a)``."""

    grid: AgeGrid
    mu_reg: np.ndarray
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "mu_reg", _nodal("mu", self.mu_reg, self.grid.size))
        if not (self.theta >= 0 and math.isfinite(self.theta)):
            raise DomainError(f"theta must be a finite value >= 0, got {self.theta}")
        object.__setattr__(self, "theta", float(self.theta))

    @property
    def mu0(self) -> float:
        return float(self.mu_reg.min() + self.theta / self.grid.omega)

    @cached_property
    def cumulative(self) -> np.ndarray:
        """Integral of ``mu_reg`` from 0 to each node (exact for piecewise-linear data)."""
        mu = self.mu_reg
        incr = 0.5 * self.grid.da * (mu[1:] + mu[:-1])
        return np.concatenate([[0.0], np.cumsum(incr)])

    def cumulative_at(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        g = self.grid
        j = np.clip(np.floor(a / g.da).astype(int), 0, g.J - 1)
        x = a - g.nodes[j]
        slope = (self.mu_reg[j + 1] - self.mu_reg[j]) / g.da
        return self.cumulative[j] + x * (self.mu_reg[j] + 0.5 * slope * x)

    def log_survival_at(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        out = -self.cumulative_at(a)
        if self.theta > 0:
            with np.errstate(divide="ignore"):
                tail = self.theta * np.log(np.clip(self.grid.omega - a, 0.0, None))
            out = out + tail - self.theta * math.log(self.grid.omega)
        return out

    @cached_property
    def log_survival(self) -> np.ndarray:
        """``log Pi`` at the nodes; ``-inf`` at ``omega`` when ``theta > 0``."""
        out = -self.cumulative.copy()
        if self.theta > 0:
            rem = self.grid.omega - self.grid.nodes
            with np.errstate(divide="ignore"):
                out += self.theta * (np.log(rem) - math.log(self.grid.omega))
            out[-1] = -np.inf
        return out

    @cached_property
    def survival_nodes(self) -> np.ndarray:
        ls = self.log_survival
        return np.where(ls < _LOG_EXTINCT, 0.0, np.exp(np.maximum(ls, _LOG_EXTINCT)))

    def survival_ratio(self, j_to, j_from) -> np.ndarray:
        """``Pi(a_to) / Pi(a_from)`` from the closed forms, zero for extinct cohorts."""
        ls = self.log_survival
        num = ls[np.asarray(j_to)]
        den = ls[np.asarray(j_from)]
        with np.errstate(invalid="ignore"):
            diff = num - den
        dead = (num < _LOG_EXTINCT) | ~np.isfinite(diff)
        return np.where(dead, 0.0, np.exp(np.where(dead, 0.0, diff)))

    @cached_property
    def step_ratio(self) -> np.ndarray:
        """Survival factor over one aging step ``a_{j-1} -> a_j`` for ``j = 1..J``."""
        j = np.arange(1, self.grid.size)
        return self.survival_ratio(j, j - 1)

    @cached_property
    def mu_nodes(self) -> np.ndarray:
        """Full death rate at the nodes (``inf`` at ``omega`` when ``theta > 0``)."""
        tail = np.zeros(self.grid.size)
        if self.theta > 0:
            tail[:-1] = self.theta / (self.grid.omega - self.grid.nodes[:-1])
            tail[-1] = np.inf
        return self.mu_reg + tail

    def regrid(self, grid: AgeGrid) -> "MortalityModel":
        return MortalityModel(grid, self.grid.interpolate(self.mu_reg, grid), self.theta)


@dataclass(frozen=True, eq=False)
class RateSet:
    """Fertility ``beta``, removal ``gamma``, recovery ``delta`` and newborn fractions."""

    grid: AgeGrid
    beta: np.ndarray
    gamma: np.ndarray
    delta: np.ndarray
    p: float = 1.0
    q: float = 1.0

    def __post_init__(self):
        n = self.grid.size
        for name in ("beta", "gamma", "delta"):
            object.__setattr__(self, name, _nodal(name, getattr(self, name), n))
        for name in ("p", "q"):
            v = float(getattr(self, name))
            if not 0.0 <= v <= 1.0:
                raise DomainError(
                    f"boundary condition requires p, q in [0, 1] (got {name}={v})"
                )
            object.__setattr__(self, name, v)

    beta0 = property(lambda self: float(self.beta.min()))
    gamma0 = property(lambda self: float(self.gamma.min()))
    delta0 = property(lambda self: float(self.delta.min()))
    beta_inf = property(lambda self: float(np.abs(self.beta).max()))
    gamma_inf = property(lambda self: float(np.abs(self.gamma).max()))
    delta_inf = property(lambda self: float(np.abs(self.delta).max()))

    def regrid(self, grid: AgeGrid) -> "RateSet":
        f = lambda v: self.grid.interpolate(v, grid)
        return RateSet(grid, f(self.beta), f(self.gamma), f(self.delta), self.p, self.q)


@dataclass(frozen=True, eq=False)
class MixingKernel:
    """Contact kernel ``k(a_i, sigma_j)`` tabulated on the grid."""

    grid: AgeGrid
    k: np.ndarray

    def __post_init__(self):
        n = self.grid.size
        k = np.asarray(self.k, dtype=float)
        if k.ndim == 0:
            k = np.full((n, n), float(k))
        if k.shape != (n, n):
            raise StructuralError(f"kernel: expected shape {(n, n)}, got {k.shape}")
        if not np.all(np.isfinite(k)):
            raise StructuralError("kernel: table contains non-finite values")
        object.__setattr__(self, "k", k)

    @classmethod
    def separable(cls, grid: AgeGrid, left, right) -> "MixingKernel":
        n = grid.size
        return cls(grid, np.outer(_nodal("kernel.left", left, n), _nodal("kernel.right", right, n)))

    @property
    def k_inf(self) -> float:
        return float(np.abs(self.k).max())

    @cached_property
    def weighted(self) -> np.ndarray:
        """``k`` with trapezoid weights folded into the integration index."""
        return self.k * self.grid.weights[None, :]

    def regrid(self, grid: AgeGrid) -> "MixingKernel":
        rows = np.array([self.grid.interpolate(row, grid) for row in self.k])
        full = np.array([self.grid.interpolate(col, grid) for col in rows.T]).T
        return MixingKernel(grid, full)


@dataclass(frozen=True, eq=False)
class StateField:
    """The triple ``(s, i, r)`` as a ``(3, J+1)`` array of nodal densities."""

    grid: AgeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (3, self.grid.size):
            raise StructuralError(
                f"state: expected shape {(3, self.grid.size)}, got {v.shape}"
            )
        object.__setattr__(self, "values", v)

    @classmethod
    def from_components(cls, grid: AgeGrid, s, i, r) -> "StateField":
        n = grid.size
        return cls(grid, np.vstack([_nodal("s", s, n), _nodal("i", i, n), _nodal("r", r, n)]))

    @classmethod
    def zeros(cls, grid: AgeGrid) -> "StateField":
        return cls(grid, np.zeros((3, grid.size)))

    s = property(lambda self: self.values[0])
    i = property(lambda self: self.values[1])
    r = property(lambda self: self.values[2])

    @property
    def total(self) -> np.ndarray:
        return self.values.sum(axis=0)

    def l1_norm(self) -> float:
        return l1_norm(self)

    def min(self) -> float:
        return float(self.values.min())

    def is_nonnegative(self, tol: float = 0.0) -> bool:
        return self.min() >= -tol

    def regrid(self, grid: AgeGrid) -> "StateField":
        return StateField(grid, np.array([self.grid.interpolate(v, grid) for v in self.values]))

    def __add__(self, other):
        return StateField(self.grid, self.values + other.values)

    def __sub__(self, other):
        return StateField(self.grid, self.values - other.values)

    def __mul__(self, scalar):
        return StateField(self.grid, self.values * float(scalar))

    __rmul__ = __mul__


def l1_norm(field: StateField) -> float:
    """Trapezoid quadrature of ``|s| + |i| + |r|``."""
    return float(field.grid.integrate(np.abs(field.values).sum(axis=0)))


FAMILIES = ("identity", "saturating", "power")


@dataclass(frozen=True, eq=False)
class ForceSpec:
    """Nonlinear wrapper ``ell(t, a, y)`` of the force of infection.

    ``identity``    ell = y
    ``saturating``  ell = y / (1 + sigma(t, a) |y|),
                    sigma(t, a) = sigma(a) (1 + amplitude sin(2 pi t / period))
    ``power``       ell = y (1 + y^2)^((rho - 1) / 2), rho in (0, 1]

    All three are C^1, odd in ``y``, vanish at zero and have
    ``0 < d ell / dy <= 1``.
    """

    family: str = "identity"
    sigma: Optional[np.ndarray] = None
    rho: float = 1.0
    amplitude: float = 0.0
    period: float = 1.0
    grid: Optional[AgeGrid] = None

    def __post_init__(self):
        fam = str(self.family).lower()
        if fam not in FAMILIES:
            raise DomainError(f"unknown force family {self.family!r}; choose from {FAMILIES}")
        object.__setattr__(self, "family", fam)
        if fam == "saturating":
            if self.grid is None:
                raise StructuralError("saturating force needs the age grid for sigma")
            sig = _nodal("force.sigma", 0.0 if self.sigma is None else self.sigma, self.grid.size)
            if sig.min() < 0:
                raise DomainError("saturating force needs sigma >= 0")
            if not 0.0 <= self.amplitude <= 1.0:
                raise DomainError("saturating force needs amplitude in [0, 1]")
            if not self.period > 0:
                raise DomainError("saturating force needs a positive period")
            object.__setattr__(self, "sigma", sig)
        if fam == "power" and not 0.0 < self.rho <= 1.0:
            raise DomainError(f"power force needs rho in (0, 1], got {self.rho}")

    @property
    def is_linear(self) -> bool:
        return self.family == "identity"

    def _sigma(self, t, sigma_a):
        return sigma_a * (1.0 + self.amplitude * np.sin(2.0 * np.pi * t / self.period))

    def _sigma_at(self, a):
        return np.interp(a, self.grid.nodes, self.sigma)

    def value(self, t: float, y, a=None) -> np.ndarray:
        """Evaluate ``ell(t, a, y)``; ``a=None`` means ``y`` is indexed by grid node."""
        y = np.asarray(y, dtype=float)
        if self.family == "identity":
            return y.copy()
        if self.family == "power":
            return y * (1.0 + y * y) ** (0.5 * (self.rho - 1.0))
        sig = self.sigma if a is None else self._sigma_at(a)
        return y / (1.0 + self._sigma(t, sig) * np.abs(y))

    def derivative(self, t: float, y, a=None) -> np.ndarray:
        """``d ell / dy``."""
        y = np.asarray(y, dtype=float)
        if self.family == "identity":
            return np.ones_like(y)
        if self.family == "power":
            y2 = y * y
            return (1.0 + y2) ** (0.5 * (self.rho - 3.0)) * (1.0 + self.rho * y2)
        sig = self.sigma if a is None else self._sigma_at(a)
        return 1.0 / (1.0 + self._sigma(t, sig) * np.abs(y)) ** 2

    def lipschitz(self, r: float) -> float:
        """Closed-form ``sup |d ell/dy|`` over ``|y| <= r``.

        Every family attains its largest slope, 1, at ``y = 0``: the
        saturating slope ``(1 + sigma|y|)^-2`` and the power slope
        ``(1 + rho y^2) / (1 + y^2)^((3 - rho)/2)`` are both at most one.
        """
        if r < 0:
            raise DomainError("radius must be nonnegative")
        return 1.0

    def regrid(self, grid: AgeGrid) -> "ForceSpec":
        if self.family != "saturating":
            return ForceSpec(self.family, None, self.rho, self.amplitude, self.period, grid)
        return ForceSpec(
            self.family, self.grid.interpolate(self.sigma, grid),
            self.rho, self.amplitude, self.period, grid,
        )


@dataclass(frozen=True)
class HypothesisCheck:
    name: str
    passed: bool
    value: float
    message: str = ""


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    reproduction_number: float = float("nan")

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def as_dict(self) -> dict:
        return {
            "ok": self.ok,
            "checks": [
                {"name": c.name, "passed": c.passed, "value": c.value, "message": c.message}
                for c in self.checks
            ],
            "warnings": list(self.warnings),
            "reproduction_number": self.reproduction_number,
        }


def validate_hypotheses(
    rates: RateSet, mortality: MortalityModel, kernel: MixingKernel
) -> ValidationReport:
    """Check the standing assumptions on the rates, mortality and kernel.

    Failing checks are reported, not raised; tables on mismatched grids raise
    :class:`StructuralError`.
    """
    grid = _check_grid(rates, mortality, kernel)
    rep = ValidationReport()

    def check(name, value, ok, what):
        msg = "" if ok else what
        rep.checks.append(HypothesisCheck(name, bool(ok), float(value), msg))

    for sym in ("beta", "gamma", "delta"):
        inf = getattr(rates, sym + "0")
        check(f"{sym}_bounded_below", inf, inf > 0, f"{sym}0 = {inf:g}: essential infimum must be > 0")
    check("rates_bounded", max(rates.beta_inf, rates.gamma_inf, rates.delta_inf),
          True, "")
    check("mortality_positive", mortality.mu0, mortality.mu0 > 0,
          f"mu0 = {mortality.mu0:g}: essential infimum of mu must be > 0")
    mu_min = float(mortality.mu_reg.min())
    check("mortality_regular_nonnegative", mu_min, mu_min >= 0,
          f"mu_reg has negative entry {mu_min:g}")
    kmin = float(kernel.k.min())
    check("kernel_nonnegative", kmin, kmin >= 0, f"kernel has negative entry {kmin:g}")
    check("kernel_bounded", kernel.k_inf, math.isfinite(kernel.k_inf), "kernel is unbounded")
    check("allocation_fractions", max(rates.p, rates.q),
          0 <= rates.p <= 1 and 0 <= rates.q <= 1, "p, q must lie in [0, 1]")

    if mortality.theta == 0:
        rep.warnings.append(
            "survival positive at omega: theta = 0 leaves the death rate integrable"
        )
    rep.reproduction_number = float(grid.integrate(rates.beta * mortality.survival_nodes))
    return rep


@dataclass(frozen=True)
class ModelConstants:
    """Constants the a-priori estimates are built from.

    Exponential constants are also stored as logarithms; the plain value
    is ``inf`` whenever it overflows a double.
    """

    T: float
    x0_norm: float
    k_inf: float
    beta_inf: float
    M: float
    L: float
    log_L: float
    c: float
    z1: float
    z2: float
    R: float
    log_R: float
    c_hat: float
    H_r: float
    R_hat: float
    log_R_hat: float

    def C_rho(self, rho: float) -> float:
        """Lipschitz constant of the truncated linear nonlinearity on ``||phi|| <= rho``."""
        return 2.0 * (self.c + 2.0 * rho * self.k_inf)

    def C_hat_rho(self, rho: float) -> float:
        """Lipschitz constant of the truncated nonlinear-force term on ``||phi|| <= rho``."""
        return 2.0 * self.c_hat + 4.0 * self.H_r * self.k_inf * rho

    def shift(self, linear: bool) -> float:
        return self.c if linear else self.c_hat

    def log_radius(self, linear: bool) -> float:
        return self.log_R if linear else self.log_R_hat

    def log_dependence_bound(self, linear: bool) -> float:
        """``log(L * exp(L T (C_R + shift)))`` for the flow-map Lipschitz bound."""
        if linear:
            radius, lip, shift = self.R, self.C_rho(self.R), self.c
        else:
            radius, lip, shift = self.R_hat, self.C_hat_rho(self.R_hat), self.c_hat
        if not math.isfinite(radius):
            return math.inf
        return self.log_L + self.L * self.T * (lip + shift)

    def as_dict(self) -> dict:
        from dataclasses import asdict
        return asdict(self)


def _safe_exp(x: float) -> float:
    return math.exp(x) if x < 709.0 else math.inf


def _sample_c_hat(force: ForceSpec, grid: AgeGrid, T: float, z2: float) -> float:
    if z2 <= 0:
        return 0.0
    ys = np.linspace(-z2, z2, 201)
    if force.family != "saturating":
        return float(force.value(0.0, ys).max())
    ages = np.linspace(0.0, grid.omega, 2 * grid.J + 1)
    best = -np.inf
    for t in np.linspace(0.0, T, 33):
        vals = force.value(t, ys[None, :], a=ages[:, None])
        best = max(best, float(vals.max()))
    return best


def derive_constants(
    rates: RateSet,
    mortality: MortalityModel,
    kernel: MixingKernel,
    force: Optional[ForceSpec],
    x0_norm: float,
    T: float,
) -> ModelConstants:
    """Evaluate every bound the existence argument relies on."""
    grid = _check_grid(rates, mortality, kernel)
    if not T > 0:
        raise DomainError(f"horizon T must be positive, got {T}")
    if not x0_norm >= 0:
        raise DomainError(f"x0_norm must be nonnegative, got {x0_norm}")
    force = force if force is not None else ForceSpec("identity", grid=grid)

    k_inf = kernel.k_inf
    log_M = rates.beta_inf * T
    M = _safe_exp(log_M)
    log_L = (rates.beta_inf + rates.gamma_inf + rates.delta_inf + mortality.mu0) * T
    L = _safe_exp(log_L)
    z1 = k_inf * M * (x0_norm + 1.0)
    z2 = k_inf * M * (x0_norm + 2.0)
    c = z2
    log_R = log_L + math.log(x0_norm + 1.0) + 3.0 * c * L * T
    c_hat = C_HAT_SAFETY * _sample_c_hat(force, grid, T, z2)
    # same Gronwall argument with the nonlinear shift in place of c
    log_R_hat = log_L + math.log(x0_norm + 1.0) + 3.0 * c_hat * L * T
    return ModelConstants(
        T=float(T), x0_norm=float(x0_norm), k_inf=k_inf, beta_inf=rates.beta_inf,
        M=M, L=L, log_L=log_L, c=c, z1=z1, z2=z2,
        R=_safe_exp(log_R), log_R=log_R,
        c_hat=c_hat, H_r=force.lipschitz(z2),
        R_hat=_safe_exp(log_R_hat), log_R_hat=log_R_hat,
    )


@dataclass(frozen=True, eq=False)
class Model:
    """Bundle of everything that defines one instance of the system."""

    rates: RateSet
    mortality: MortalityModel
    kernel: MixingKernel
    force: ForceSpec

    def __post_init__(self):
        _check_grid(self.rates, self.mortality, self.kernel)
        if self.force.grid is not None and self.force.grid != self.rates.grid:
            raise StructuralError("force table lives on a different grid")

    @property
    def grid(self) -> AgeGrid:
        return self.rates.grid

    def validate(self) -> ValidationReport:
        rep = validate_hypotheses(self.rates, self.mortality, self.kernel)
        for w in rep.warnings:
            warnings.warn(w, stacklevel=2)
        return rep

    def constants(self, x0_norm: float, T: float) -> ModelConstants:
        return derive_constants(self.rates, self.mortality, self.kernel, self.force, x0_norm, T)

    def regrid(self, J: int) -> "Model":
        if J == self.grid.J:
            return self
        g = self.grid.refined(J)
        return Model(
            self.rates.regrid(g), self.mortality.regrid(g),
            self.kernel.regrid(g), self.force.regrid(g),
        )
