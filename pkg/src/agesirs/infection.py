"""Force of infection and the nonlinear terms built from it.

``Lambda(a, i) = int k(a, sigma) i(sigma) dsigma`` feeds the transfer
``s -> i`` at rate ``w(a) = ell(t, a, Xi(Lambda(a, i)))``.  Three
truncation levels are provided:

``raw``        w = ell(Lambda)                         (the model itself)
``truncated``  w = ell(Xi(Lambda))                     (globally Lipschitz)
``shifted``    truncated term plus ``shift * identity``  (maps the cone into itself)

With ``shape=None`` the wrapper ``ell`` is the identity, i.e. the force is
linear in the infected density.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError
from .model import ForceSpec, MixingKernel, ModelConstants, StateField, _check_grid

__all__ = [
    "lambda_apply",
    "XiClamp",
    "xi_eval",
    "ForceVariant",
    "force_eval",
    "force_values",
    "lipschitz_probe",
]

TRUNCATIONS = ("raw", "truncated", "shifted")


def lambda_apply(kernel: MixingKernel, i_field) -> np.ndarray:
    """Trapezoid quadrature of ``k(a_j, .) i(.)`` at every node ``a_j``."""
    i_field = np.asarray(i_field, dtype=float)
    if i_field.shape != (kernel.grid.size,):
        raise DomainError(f"infected density must have {kernel.grid.size} nodal values")
    return kernel.weighted @ i_field


@dataclass(frozen=True)
class XiClamp:
    """Smooth odd clamp: identity on ``[-z1, z1]``, bounded by ``z2``.

    Beyond ``z1`` the excess is squashed with ``tanh``, which keeps the
    derivative continuous (it equals 1 at ``|z| = z1``) and in ``(0, 1]``.
    ``z1 = z2 = 0`` is the zero map.
    """

    z1: float
    z2: float

    def __post_init__(self):
        if self.z1 < 0 or self.z2 < self.z1:
            raise DomainError(f"clamp needs 0 <= z1 <= z2, got z1={self.z1}, z2={self.z2}")
        if self.z1 == self.z2 and self.z1 != 0:
            raise DomainError("clamp needs z1 < z2 unless both are zero")

    @classmethod
    def from_constants(cls, constants: ModelConstants) -> "XiClamp":
        return cls(constants.z1, constants.z2)

    def __call__(self, z):
        return xi_eval(self, z)[0]


def xi_eval(clamp: XiClamp, z):
    """Return ``(Xi(z), Xi'(z))``, vectorised over ``z``."""
    z = np.asarray(z, dtype=float)
    if clamp.z2 == 0:
        return np.zeros_like(z), np.zeros_like(z)
    z1, width = clamp.z1, clamp.z2 - clamp.z1
    mag = np.abs(z)
    inside = mag <= z1
    th = np.tanh((mag - z1) / width)
    value = np.where(inside, z, np.sign(z) * (z1 + width * th))
    deriv = np.where(inside, 1.0, 1.0 - th * th)
    return value, deriv


@dataclass(frozen=True)
class ForceVariant:
    truncation: str = "truncated"
    shape: Optional[ForceSpec] = None
    shift: float = 0.0

    def __post_init__(self):
        if self.truncation not in TRUNCATIONS:
            raise DomainError(f"truncation must be one of {TRUNCATIONS}")
        if self.truncation != "shifted" and self.shift != 0.0:
            raise DomainError("only shifted variants carry a shift constant")
        if self.shift < 0:
            raise DomainError("shift constant must be nonnegative")

    @property
    def linear(self) -> bool:
        return self.shape is None or self.shape.is_linear

    @classmethod
    def build(cls, truncation: str, shape: Optional[ForceSpec], constants: ModelConstants) -> "ForceVariant":
        """Variant with the shift matched to its shape (``c`` or ``c_hat``)."""
        if shape is not None and shape.is_linear:
            shape = None
        shift = 0.0
        if truncation == "shifted":
            shift = constants.shift(linear=shape is None)
        return cls(truncation, shape, shift)


def infection_rate(variant: ForceVariant, t: float, i_values: np.ndarray, kernel: MixingKernel, clamp: XiClamp) -> np.ndarray:
    lam = kernel.weighted @ i_values
    if variant.truncation != "raw":
        lam = xi_eval(clamp, lam)[0]
    if variant.shape is not None:
        lam = variant.shape.value(t, lam)
    return lam


def force_values(variant: ForceVariant, t: float, values: np.ndarray, kernel: MixingKernel, clamp: XiClamp) -> np.ndarray:
    """Array version of :func:`force_eval` on a raw ``(3, J+1)`` state."""
    w = infection_rate(variant, t, values[1], kernel, clamp)
    flux = w * values[0]
    out = np.zeros_like(values)
    out[0] = -flux
    out[1] = flux
    if variant.shift:
        out += variant.shift * values
    return out


def force_eval(variant: ForceVariant, t: float, state: StateField, kernel: MixingKernel, clamp: XiClamp) -> StateField:
    """Nonlinear term ``(-w s, w s, 0) + shift * (s, i, r)``."""
    _check_grid(state, kernel)
    return StateField(state.grid, force_values(variant, t, state.values, kernel, clamp))


def lipschitz_probe(
    variant: ForceVariant,
    radius: float,
    trials: int,
    seed: int,
    kernel: MixingKernel,
    clamp: XiClamp,
    constants: ModelConstants,
    T: Optional[float] = None,
    pairs=(),
) -> dict:
    """Empirical Lipschitz ratios and growth ratios over random pairs.

    ``phi`` is drawn with ``||phi|| <= radius`` and ``psi`` anywhere (half
    the pairs are close neighbours of ``phi`` to probe the local slope).
    The bound for the ratio is ``C_rho`` (linear shape) or ``C_hat_rho``
    (nonlinear shape), plus the shift for shifted variants.  Extra
    ``(psi, phi)`` arrays in ``pairs`` are evaluated as well; pairs with
    ``psi == phi`` are counted as excluded.
    """
    if trials < 1:
        raise DomainError("trials must be >= 1")
    if variant.truncation == "raw":
        raise DomainError("the raw nonlinearity has no global Lipschitz bound to probe")
    grid = kernel.grid
    rng = np.random.default_rng(seed)
    horizon = constants.T if T is None else T
    lin = variant.linear
    lip_bound = constants.C_rho(radius) if lin else constants.C_hat_rho(radius)
    lip_bound += variant.shift
    base = constants.c if lin else constants.c_hat
    growth_factor = 2.0 * base + variant.shift

    drawn = []
    for _ in range(trials):
        phi = rng.standard_normal((3, grid.size))
        if rng.random() < 0.5:
            phi = np.abs(phi)
        phi *= radius * rng.random() / max(_norm(grid, phi), 1e-300)
        if rng.random() < 0.5:
            psi = phi + rng.standard_normal((3, grid.size)) * 10.0 ** rng.uniform(-6, 0)
        else:
            psi = rng.standard_normal((3, grid.size)) * rng.uniform(0, 3 * radius)
        drawn.append((psi, phi, rng.uniform(0.0, horizon)))
    drawn += [(np.asarray(psi, float), np.asarray(phi, float), 0.0) for psi, phi in pairs]

    worst_lip, worst_growth = 0.0, 0.0
    lip_violations = growth_violations = excluded = 0
    for psi, phi, t in drawn:
        F_psi = force_values(variant, t, psi, kernel, clamp)
        F_phi = force_values(variant, t, phi, kernel, clamp)
        d = _norm(grid, psi - phi)
        if d == 0.0:
            excluded += 1
        else:
            ratio = _norm(grid, F_psi - F_phi) / d
            worst_lip = max(worst_lip, ratio)
            lip_violations += ratio > lip_bound * (1 + 1e-12)
        for x, Fx in ((psi, F_psi), (phi, F_phi)):
            nx = _norm(grid, x)
            g = _norm(grid, Fx)
            if nx > 0:
                worst_growth = max(worst_growth, g / nx)
            growth_violations += g > growth_factor * nx * (1 + 1e-12)
    return {
        "variant": f"{variant.truncation}-{'linear' if lin else variant.shape.family}",
        "radius": radius,
        "trials": len(drawn),
        "max_lipschitz_ratio": worst_lip,
        "lipschitz_bound": lip_bound,
        "max_growth_ratio": worst_growth,
        "growth_bound": growth_factor,
        "excluded_pairs": excluded,
        "lipschitz_violations": int(lip_violations),
        "growth_violations": int(growth_violations),
        "passed": lip_violations == 0 and growth_violations == 0,
    }


def _norm(grid, values) -> float:
    return float(np.abs(values).sum(axis=0) @ grid.weights)
