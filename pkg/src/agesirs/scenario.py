"""Scenario files: YAML in, validated :class:`Model` plus initial data out.

Schema (defaults in brackets)::

    grid:     {omega: <float>, J: <int> [200]}
    horizon:  <float>                       # T, a multiple of omega / J
    seed:     <int> [0]
    output:   <dir> [out]
    rates:
      beta:   <number | list of J+1>
      gamma:  <number | list>
      delta:  <number | list>
      mu:     <number | list>               # regular part of the death rate
      theta:  <float> [0]                   # tail theta / (omega - a)
      p:      <float> [1]
      q:      <float> [1]
    kernel:
      type:   constant | separable | matrix
      value:  <number>                      # constant
      left:   <number | list>               # separable: k(a, s) = left(a) right(s)
      right:  <number | list>
      matrix: <(J+1) x (J+1) rows>          # matrix, row-major
    force:    [identity]
      family: identity | saturating | power
      sigma:  <number | list> [0]           # saturating
      amplitude: <float> [0]
      period: <float> [1]
      rho:    <float> [1]                   # power
    initial:
      s: <number | list>
      i: <number | list>
      r: <number | list> [0]
    solver:
      tol: <float> [1e-8]
      max_iter: <int> [200]

Nodal lists are values at ``a_j = j * omega / J`` and are read as
piecewise-linear functions, so ``ScenarioConfig.on_grid`` can move the
whole scenario to a finer grid without changing the underlying problem.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .errors import DomainError, ScenarioError, StructuralError
from .model import AgeGrid, ForceSpec, MixingKernel, Model, MortalityModel, RateSet, StateField, _nodal

__all__ = ["ScenarioConfig", "load_scenario", "parse_scenario", "bundled_scenario", "DEFAULTS"]

DEFAULTS = {"J": 200, "tol": 1e-8, "max_iter": 200, "seed": 0, "output": "out"}

_SECTIONS = {"grid", "horizon", "seed", "output", "rates", "kernel", "force", "initial", "solver"}
_KEYS = {
    "grid": {"omega", "J"},
    "rates": {"beta", "gamma", "delta", "mu", "theta", "p", "q"},
    "kernel": {"type", "value", "left", "right", "matrix"},
    "force": {"family", "sigma", "amplitude", "period", "rho"},
    "initial": {"s", "i", "r"},
    "solver": {"tol", "max_iter"},
}


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    model: Model
    x0: StateField
    T: float
    seed: int = 0
    output: str = "out"
    tol: float = 1e-8
    max_iter: int = 200
    name: str = "scenario"

    @property
    def grid(self) -> AgeGrid:
        return self.model.grid

    def on_grid(self, J: Optional[int]) -> "ScenarioConfig":
        """Same scenario interpolated onto ``J`` cells."""
        if J is None or J == self.grid.J:
            return self
        model = self.model.regrid(J)
        model.grid.steps(self.T)  # horizon must stay on the time grid
        return replace(self, model=model, x0=self.x0.regrid(model.grid))

    def with_initial(self, values) -> "ScenarioConfig":
        return replace(self, x0=StateField(self.grid, values))

    def constants(self):
        return self.model.constants(self.x0.l1_norm(), self.T)


def _num(where: str, value, kind=float):
    # PyYAML reads "1e-8" (no dot) as a string; accept it anyway.
    try:
        out = kind(value)
    except (TypeError, ValueError):
        raise ScenarioError(f"{where}: expected a number, got {value!r}") from None
    if kind is int and out != float(value):
        raise ScenarioError(f"{where}: expected an integer, got {value!r}")
    return out


def _table(where: str, value, n: int) -> np.ndarray:
    if isinstance(value, (list, tuple)):
        value = [_num(where, v) for v in value]
    elif value is not None:
        value = _num(where, value)
    else:
        raise ScenarioError(f"{where}: missing")
    return _nodal(where, value, n)


def _section(doc: dict, name: str, required: bool = True) -> dict:
    sec = doc.get(name)
    if sec is None:
        if required:
            raise ScenarioError(f"missing section '{name}'")
        return {}
    if not isinstance(sec, dict):
        raise ScenarioError(f"section '{name}' must be a mapping")
    unknown = set(sec) - _KEYS[name]
    if unknown:
        raise ScenarioError(f"section '{name}': unknown keys {sorted(unknown)}")
    return sec


def _kernel(sec: dict, grid: AgeGrid) -> MixingKernel:
    kind = sec.get("type", "constant")
    n = grid.size
    if kind == "constant":
        return MixingKernel(grid, _num("kernel.value", sec.get("value", 0.0)))
    if kind == "separable":
        return MixingKernel.separable(
            grid, _table("kernel.left", sec.get("left"), n), _table("kernel.right", sec.get("right"), n)
        )
    if kind == "matrix":
        rows = sec.get("matrix")
        if not isinstance(rows, list) or len(rows) != n:
            raise StructuralError(f"kernel.matrix: expected {n} rows")
        return MixingKernel(grid, np.array([_table(f"kernel.matrix[{r}]", row, n) for r, row in enumerate(rows)]))
    raise ScenarioError(f"kernel.type must be constant, separable or matrix, got {kind!r}")


def parse_scenario(doc: dict, name: str = "scenario") -> ScenarioConfig:
    """Build a validated :class:`ScenarioConfig` from a parsed mapping."""
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a mapping at top level")
    unknown = set(doc) - _SECTIONS
    if unknown:
        raise ScenarioError(f"unknown sections {sorted(unknown)}")

    g = _section(doc, "grid")
    if "omega" not in g:
        raise ScenarioError("grid.omega is required")
    grid = AgeGrid(_num("grid.omega", g["omega"]), _num("grid.J", g.get("J", DEFAULTS["J"]), int))
    n = grid.size
    if "horizon" not in doc:
        raise ScenarioError("horizon is required")
    T = _num("horizon", doc["horizon"])
    if not T > 0:
        raise DomainError(f"horizon must be positive, got {T}")
    grid.steps(T)

    r = _section(doc, "rates")
    rates = RateSet(
        grid,
        _table("rates.beta", r.get("beta"), n),
        _table("rates.gamma", r.get("gamma"), n),
        _table("rates.delta", r.get("delta"), n),
        _num("rates.p", r.get("p", 1.0)),
        _num("rates.q", r.get("q", 1.0)),
    )
    mortality = MortalityModel(grid, _table("rates.mu", r.get("mu"), n), _num("rates.theta", r.get("theta", 0.0)))
    kernel = _kernel(_section(doc, "kernel"), grid)

    f = _section(doc, "force", required=False)
    family = f.get("family", "identity")
    force = ForceSpec(
        family,
        sigma=_table("force.sigma", f.get("sigma", 0.0), n) if family == "saturating" else None,
        rho=_num("force.rho", f.get("rho", 1.0)),
        amplitude=_num("force.amplitude", f.get("amplitude", 0.0)),
        period=_num("force.period", f.get("period", 1.0)),
        grid=grid,
    )

    ini = _section(doc, "initial")
    x0 = StateField.from_components(
        grid,
        _table("initial.s", ini.get("s"), n),
        _table("initial.i", ini.get("i"), n),
        _table("initial.r", ini.get("r", 0.0), n),
    )
    if x0.min() < 0:
        raise DomainError("initial data must be nonnegative")

    model = Model(rates, mortality, kernel, force)
    report = model.validate()
    if not report.ok:
        names = ", ".join(f"{c.name} ({c.message})" for c in report.failures())
        raise DomainError(f"standing hypotheses violated: {names}")

    s = _section(doc, "solver", required=False)
    return ScenarioConfig(
        model=model,
        x0=x0,
        T=T,
        seed=_num("seed", doc.get("seed", DEFAULTS["seed"]), int),
        output=str(doc.get("output", DEFAULTS["output"])),
        tol=_num("solver.tol", s.get("tol", DEFAULTS["tol"])),
        max_iter=_num("solver.max_iter", s.get("max_iter", DEFAULTS["max_iter"]), int),
        name=name,
    )


def load_scenario(path) -> ScenarioConfig:
    """Read and validate a scenario file.

    Raises
    ------
    ScenarioError
        Unreadable file, YAML syntax error (with line and column) or schema error.
    StructuralError
        A nodal array has the wrong length; the message names the field.
    DomainError
        A value is out of range, e.g. ``p`` or ``q`` outside ``[0, 1]``.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        problem = getattr(exc, "problem", None) or str(exc)
        raise ScenarioError(f"{path}: parse error{where}: {problem}") from None
    return parse_scenario(doc, name=path.stem)


def bundled_scenario(name: str = "reference") -> Path:
    """Path of a scenario shipped with the package."""
    path = Path(__file__).parent / "scenarios" / f"{name}.yaml"
    if not path.exists():
        raise ScenarioError(f"no bundled scenario named {name!r}")
    return path
