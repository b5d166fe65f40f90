"""Acceptance criteria, each at its stated tolerance.

Run with ``pytest tests/test_acceptance.py``; the terminal summary prints
one PASS/FAIL line per criterion.
"""

import math

import numpy as np
import pytest
from scipy.linalg import expm

from agesirs import AgeGrid, ForceSpec, RateSet, StateField, derive_constants
from agesirs.checks import random_fields, resolvent_residual, smooth_fields, solver_gap
from agesirs.demography import solve_mckendrick
from agesirs.infection import ForceVariant, XiClamp, lipschitz_probe, xi_eval
from agesirs.linear import full_semigroup_apply, reaction_exponential, reaction_matrices, resolvent_apply, resolvent_threshold
from agesirs.solver import (
    PicardSettings,
    continuous_dependence_probe,
    gronwall_check,
    picard_solve,
    simulate_direct,
    sup_distance,
    truncation_inactive_check,
)
from helpers import constant_model

TOL = 1e-8
SCENARIOS = ("reference", "saturating")


@pytest.fixture(scope="module")
def runs(reference, saturating):
    """Direct and Picard trajectories for both bundled scenarios, plus random-data runs."""
    out = []
    rng = np.random.default_rng(2024)
    for cfg in (reference, saturating):
        k = cfg.constants()
        out.append((cfg, k, simulate_direct(cfg.x0, cfg.model, cfg.T, k)))
        out.append((cfg, k, picard_solve(cfg.x0, cfg.model, cfg.T, PicardSettings(TOL), k)[0]))
        for v in random_fields(rng, cfg.grid, 100):
            run = cfg.with_initial(v * rng.uniform(0.1, 3.0))
            kr = run.constants()
            out.append((run, kr, simulate_direct(run.x0, run.model, run.T, kr)))
    return out


@pytest.mark.criterion(1, "positivity invariance (100 random nonneg data, nonlinear runs)")
def test_positivity(runs, record_property):
    random_runs = [r for r in runs[2:102]] + [r for r in runs[104:]]
    assert len(random_runs) == 200
    worst = min(traj.min() for _, _, traj in random_runs)
    record_property("detail", f"min nodal value {worst:.3e} over {len(random_runs)} runs (>= -1e-12)")
    assert worst >= -1e-12


@pytest.mark.criterion(2, "resolvent identity residual shrinks >= 1.8x per doubling")
def test_resolvent_identity(reference, record_property):
    rng = np.random.default_rng(11)
    phis = smooth_fields(rng, 20)
    thr = resolvent_threshold(reference.model.rates, reference.model.mortality)
    worst = math.inf
    for off in (1.0, 2.0, 5.0):
        for f in phis:
            res = [resolvent_residual(reference, f, thr + off, J) for J in (100, 200, 400)]
            worst = min(worst, res[0] / res[1], res[1] / res[2])
    record_property("detail", f"smallest reduction factor {worst:.3f} (>= 1.8)")
    assert worst >= 1.8


@pytest.mark.criterion(3, "resolvent norm bound ||R phi|| <= ||phi|| / (lambda - beta_inf - mu0)")
def test_resolvent_bound(reference, record_property):
    rng = np.random.default_rng(12)
    m, g = reference.model, reference.grid
    thr = resolvent_threshold(m.rates, m.mortality)
    violations, worst = 0, 0.0
    for off in (1.0, 2.0, 5.0):
        lam = thr + off
        denom = lam - m.rates.beta_inf - m.mortality.mu0
        assert denom > 0
        for phi in random_fields(rng, g, 100):
            psi = resolvent_apply(StateField(g, phi), lam, m.rates, m.mortality)
            ratio = psi.l1_norm() * denom / StateField(g, phi).l1_norm()
            worst = max(worst, ratio)
            violations += ratio > 1.0
    record_property("detail", f"{violations} violations, max ratio/bound {worst:.4f}")
    assert violations == 0


@pytest.mark.criterion(4, "semigroup bound ||S(t) psi|| <= L ||psi||")
def test_semigroup_bound(reference, record_property):
    rng = np.random.default_rng(13)
    m, g = reference.model, reference.grid
    L = reference.constants().L
    violations, worst = 0, 0.0
    for t in (reference.T / 4, reference.T / 2, reference.T):
        for psi in random_fields(rng, g, 100, nonneg=False):
            x = StateField(g, psi)
            ratio = full_semigroup_apply(x, t, m.rates, m.mortality).l1_norm() / x.l1_norm()
            worst = max(worst, ratio)
            violations += ratio > L
    record_property("detail", f"{violations} violations, max ratio {worst:.4f} vs L = {L:.4g}")
    assert violations == 0


@pytest.mark.criterion(5, "mass consistency against the renewal solver (<= 5 da)")
def test_mass_consistency(runs, record_property):
    worst = 0.0
    for cfg, _, traj in runs:
        n0 = traj.values[0].sum(axis=0)
        _, pop = solve_mckendrick(n0, cfg.model.rates, cfg.model.mortality, cfg.T)
        rel = (np.abs(traj.values.sum(axis=1) - pop.n) @ cfg.grid.weights) / (n0 @ cfg.grid.weights)
        worst = max(worst, float(rel.max()) / cfg.grid.da)
    record_property("detail", f"max relative gap {worst:.3e} * da (bound 5 da)")
    assert worst <= 5.0


@pytest.mark.criterion(6, "shifted and unshifted Picard agree within 10 tol")
@pytest.mark.parametrize("name", SCENARIOS)
def test_shift_equivalence(name, request, record_property):
    cfg = request.getfixturevalue(name)
    k = cfg.constants()
    a, _ = picard_solve(cfg.x0, cfg.model, cfg.T, PicardSettings(TOL, 200, "unshifted"), k)
    b, _ = picard_solve(cfg.x0, cfg.model, cfg.T, PicardSettings(TOL, 200, "shifted"), k)
    gap = sup_distance(a, b)
    record_property("detail", f"{name}: sup gap {gap:.3e} (<= {10 * TOL:g})")
    assert gap <= 10 * TOL


@pytest.mark.criterion(7, "direct vs Picard distance shrinks at order >= 0.9 over J, 2J, 4J")
@pytest.mark.parametrize("name", SCENARIOS)
def test_cross_validation(name, request, record_property):
    cfg = request.getfixturevalue(name)
    gaps = [solver_gap(cfg, J) for J in (100, 200, 400)]
    orders = [math.log2(a / b) for a, b in zip(gaps, gaps[1:])]
    record_property("detail", f"{name}: orders {', '.join(f'{o:.3f}' for o in orders)}")
    assert min(orders) >= 0.9


@pytest.mark.criterion(8, "truncation inactive: max |Lambda| < z1 on every run")
def test_truncation_inactive(runs, record_property):
    margins = []
    for cfg, k, traj in runs:
        rep = truncation_inactive_check(traj, cfg.model.kernel, XiClamp.from_constants(k))
        assert rep["passed"]
        margins.append(rep["margin"])
    record_property("detail", f"smallest margin {min(margins):.4g} over {len(runs)} runs")
    assert min(margins) > 0


@pytest.mark.criterion(9, "Gronwall radius: sup ||x(t)|| < R on every run")
def test_gronwall(runs, record_property):
    worst = -math.inf
    for cfg, k, traj in runs:
        rep = gronwall_check(traj, k, cfg.model.force.is_linear)
        assert rep["passed"]
        worst = max(worst, rep["log_value"] - rep["log_bound"])
    record_property("detail", f"largest log(sup ||x||) - log R = {worst:.4g}")


@pytest.mark.criterion(10, "continuous dependence ratios <= L exp(L T (C_R + c))")
@pytest.mark.parametrize("case", ["reference", "saturating", "zero_kernel"])
def test_continuous_dependence(case, request, record_property):
    if case == "zero_kernel":
        model = constant_model(J=40, omega=2.0, beta=0.8, k=0.0)
        x0 = StateField(model.grid, np.random.default_rng(5).random((3, 41)))
        T = 1.0
    else:
        cfg = request.getfixturevalue(case)
        model, x0, T = cfg.model, cfg.x0, cfg.T
    rep = continuous_dependence_probe(x0, [1e-2, 1e-3, 1e-4], model, T, seed=17)
    ratios = [e["ratio"] for e in rep["entries"]]
    record_property("detail", f"{case}: max ratio {max(ratios):.4f}, log bound {rep['log_bound']:.4g}, "
                              f"{rep['violations']} violations")
    assert rep["violations"] == 0


@pytest.mark.criterion(11, "Lipschitz and growth estimates (200 pairs per variant)")
def test_lipschitz_growth(reference, record_property):
    g = reference.grid
    k = reference.constants()
    clamp = XiClamp.from_constants(k)
    kernel = reference.model.kernel
    cases = [(None, k)]
    for shape in (ForceSpec("saturating", sigma=0.5 + 0.1 * g.nodes, amplitude=0.3, period=1.0, grid=g),
                  ForceSpec("power", rho=0.5, grid=g)):
        cases.append((shape, derive_constants(reference.model.rates, reference.model.mortality, kernel,
                                              shape, k.x0_norm, k.T)))
    lines = []
    for n, (shape, kk) in enumerate(cases):
        for trunc in ("truncated", "shifted"):
            rep = lipschitz_probe(ForceVariant.build(trunc, shape, kk), 5.0, 200, 100 + n, kernel, clamp, kk)
            lines.append(f"{rep['variant']} {rep['max_lipschitz_ratio']:.3g}/{rep['lipschitz_bound']:.3g}")
            assert rep["lipschitz_violations"] == 0 and rep["growth_violations"] == 0, rep
            expected = (2 if trunc == "truncated" else 3) * (kk.c if shape is None else kk.c_hat)
            assert rep["growth_bound"] == pytest.approx(expected)
    record_property("detail", "; ".join(lines))


@pytest.mark.criterion(12, "truncation clamp contract")
def test_xi_contract(reference, record_property):
    k = reference.constants()
    clamp = XiClamp.from_constants(k)
    inner = np.linspace(-clamp.z1, clamp.z1, 1000)
    assert np.array_equal(clamp(inner), inner)
    z = np.linspace(-10 * clamp.z2, 10 * clamp.z2, 1000)
    val, der = xi_eval(clamp, z)
    assert np.abs(val).max() <= clamp.z2
    assert der.min() >= 0 and der.max() <= 2
    h = 1e-5 * clamp.z2
    fd_err = np.abs((clamp(z + h) - clamp(z - h)) / (2 * h) - der).max()
    record_property("detail", f"finite-difference gap {fd_err:.2e} (<= 1e-6), max |Xi| {np.abs(val).max():.6g} <= z2 = {clamp.z2:.6g}")
    assert fd_err <= 1e-6


@pytest.mark.criterion(13, "reaction exponential vs scaling-and-squaring oracle")
def test_reaction_exponential(record_property):
    rng = np.random.default_rng(14)
    g = AgeGrid(5.0, 50)
    err = drift = 0.0
    for _ in range(10):
        rates = RateSet(g, 1.0, rng.uniform(0.01, 4.0, g.size), rng.uniform(0.01, 4.0, g.size))
        psi = StateField(g, rng.random((3, g.size)))
        t = rng.uniform(0.01, 5.0)
        got = reaction_exponential(psi, t, rates).values
        want = np.stack([expm(t * G) @ psi.values[:, j] for j, G in enumerate(reaction_matrices(rates))], axis=1)
        err = max(err, float(np.abs(got - want).max()))
        drift = max(drift, float(np.abs(got.sum(axis=0) - psi.values.sum(axis=0)).max()))
    record_property("detail", f"max node error {err:.2e} (< 1e-12), s+i+r drift {drift:.2e}")
    assert err < 1e-12
    assert drift <= 4 * np.finfo(float).eps
