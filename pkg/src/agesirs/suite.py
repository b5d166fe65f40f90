"""The ``validate`` property suite and its claim-coverage guard."""

from __future__ import annotations

import numpy as np

from . import checks
from .scenario import ScenarioConfig
from .solver import simulate_direct

__all__ = ["run_suite", "coverage", "summarize"]


def coverage(assertions) -> dict:
    """Which claims in ``checks.CLAIMS`` have no assertion exercising them."""
    seen = {a.claim for a in assertions}
    unknown = sorted(seen - set(checks.CLAIMS))
    missing = sorted(set(checks.CLAIMS) - seen)
    return {"missing": missing, "unknown": unknown, "passed": not missing and not unknown}


def summarize(command: str, cfg: ScenarioConfig, assertions, extra=None) -> dict:
    failing = [a.name for a in assertions if not a.passed]
    out = {
        "command": command,
        "scenario": cfg.name,
        "J": cfg.grid.J,
        "seed": cfg.seed,
        "passed": not failing,
        "failing": failing,
        "assertions": [a.as_dict() for a in assertions],
    }
    if extra:
        out.update(extra)
    return out


def run_suite(cfg: ScenarioConfig, seed: int, full: bool = True):
    """Run every check on ``cfg``; returns the list of assertions.

    ``full=False`` skips the refinement studies (the two costliest parts).
    """
    rng = np.random.default_rng(seed)
    k = cfg.constants()
    out = []
    out += checks.check_hypotheses(cfg)
    out += checks.check_constants(cfg, k)
    out += checks.check_boundary(cfg, rng)
    out += checks.check_reaction(rng, cfg.grid)
    out += checks.check_force_families(cfg, k)
    out += checks.check_c_hat(cfg, k)
    out += checks.check_xi(k)
    out += checks.check_lipschitz(cfg, k, seed)
    out += checks.check_resolvent(cfg, rng)
    out += checks.check_semigroup(cfg, k, rng)
    out += checks.check_population(cfg, k)
    direct = simulate_direct(cfg.x0, cfg.model, cfg.T, k)
    out += checks.check_trajectory(cfg, direct, k, "direct")
    out += checks.check_random_positivity(cfg, rng)
    picard, _ = checks.check_picard(cfg, k)
    out += picard
    out += checks.check_dependence(cfg, k, seed)
    if full:
        out += checks.check_cross_validation(cfg)
    cov = coverage(out)
    out.append(checks.Assertion("claim_coverage", "standing_hypotheses", cov["passed"], len(cov["missing"]), 0, cov))
    return out
