import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm
from scipy.optimize import brentq

from agesirs import AgeGrid, ConditioningError, DomainError, MortalityModel, RateSet, StateField
from agesirs.linear import (
    LinearPropagator,
    boundary_apply,
    boundary_matrices,
    full_semigroup_apply,
    generator_apply,
    reaction_exponential,
    reaction_matrices,
    resolvent_apply,
    resolvent_threshold,
    transport_semigroup_apply,
)
from helpers import constant_model


def _rates(rng, g, p=None, q=None):
    return RateSet(g, rng.uniform(0.1, 1.5, g.size), rng.uniform(0.1, 2, g.size), rng.uniform(0.1, 2, g.size),
                   rng.random() if p is None else p, rng.random() if q is None else q)


def test_matrix_structure():
    rng = np.random.default_rng(1)
    r = _rates(rng, AgeGrid(1.0, 10))
    G = reaction_matrices(r)
    B = boundary_matrices(r)
    np.testing.assert_allclose(G.sum(axis=1), 0.0, atol=1e-15)
    np.testing.assert_allclose(B.sum(axis=1), np.repeat(r.beta[:, None], 3, axis=1), rtol=1e-15)
    assert B.min() >= 0


def test_boundary_examples():
    g = AgeGrid(1.0, 10)
    one = StateField.from_components(g, 1, 1, 1)
    np.testing.assert_allclose(boundary_apply(one, RateSet(g, 2.0, 1, 1, 1.0, 1.0)), [2, 2, 2])
    rng = np.random.default_rng(0)
    for _ in range(5):
        psi = StateField(g, rng.random((3, g.size)))
        assert boundary_apply(psi, RateSet(g, rng.random(), 1, 1, 0.0, rng.random()))[1] == 0.0
    ramp = StateField.from_components(g, g.nodes, 0, 0)
    np.testing.assert_allclose(boundary_apply(ramp, RateSet(g, 1.0, 1, 1, 0.3, 0.6)), [0.5, 0, 0], atol=1e-15)


def test_transport_examples():
    rng = np.random.default_rng(2)
    m = constant_model(J=20, beta=0.0, mu=0.8, theta=0.0)
    psi = StateField(m.grid, rng.random((3, 21)))
    same = transport_semigroup_apply(psi, 0.0, m.rates, m.mortality)
    np.testing.assert_array_equal(same.values, psi.values)
    da = m.grid.da
    out = transport_semigroup_apply(psi, da, m.rates, m.mortality)
    np.testing.assert_allclose(out.values[:, 1:], psi.values[:, :-1] * math.exp(-0.8 * da), rtol=1e-14)
    assert np.all(out.values[:, 0] == 0)
    with pytest.raises(DomainError):
        transport_semigroup_apply(psi, -da, m.rates, m.mortality)
    with pytest.raises(DomainError):
        transport_semigroup_apply(psi, 2.0, m.rates, m.mortality, T=1.0)


def test_transport_bound_and_positivity():
    rng = np.random.default_rng(3)
    g = AgeGrid(5.0, 50)
    r = _rates(rng, g)
    mort = MortalityModel(g, rng.uniform(0.05, 0.5, g.size), 1.0)
    for _ in range(100):
        psi = StateField(g, rng.random((3, g.size)))
        t = g.dt * rng.integers(1, 51)
        out = transport_semigroup_apply(psi, t, r, mort)
        assert out.min() >= -1e-12
        assert out.l1_norm() <= math.exp((r.beta_inf + mort.mu0) * t) * psi.l1_norm()


def test_reaction_examples():
    rng = np.random.default_rng(4)
    g = AgeGrid(1.0, 10)
    psi = StateField(g, rng.random((3, g.size)))
    r = _rates(rng, g)
    np.testing.assert_array_equal(reaction_exponential(psi, 0.0, r).values, psi.values)
    frozen = RateSet(g, 1.0, 0.0, 0.0)
    np.testing.assert_array_equal(reaction_exponential(psi, 3.0, frozen).values, psi.values)
    with pytest.raises(DomainError):
        reaction_exponential(psi, -1.0, r)


def test_reaction_tiny_rates_use_series():
    g = AgeGrid(1.0, 4)
    r = RateSet(g, 1.0, 3e-15, 4e-15)
    psi = StateField.from_components(g, 1.0, 2.0, 3.0)
    out = reaction_exponential(psi, 2.0, r)
    want = np.stack([expm(2.0 * G) @ psi.values[:, 0] for G in reaction_matrices(r)], axis=1)
    np.testing.assert_allclose(out.values, want, rtol=1e-15, atol=1e-28)


@given(st.integers(0, 2**31 - 1), st.floats(0.0, 20.0))
@settings(max_examples=50, deadline=None)
def test_reaction_matches_expm_and_conserves(seed, t):
    rng = np.random.default_rng(seed)
    g = AgeGrid(1.0, 6)
    r = RateSet(g, 1.0, rng.uniform(0, 5, g.size), rng.uniform(0, 5, g.size))
    psi = StateField(g, rng.standard_normal((3, g.size)))
    out = reaction_exponential(psi, t, r).values
    want = np.stack([expm(t * G) @ psi.values[:, j] for j, G in enumerate(reaction_matrices(r))], axis=1)
    np.testing.assert_allclose(out, want, atol=1e-12)
    np.testing.assert_allclose(out.sum(axis=0), psi.values.sum(axis=0), rtol=0, atol=1e-14 * (1 + np.abs(psi.values).sum()))


def test_semigroup_identity_and_composition():
    rng = np.random.default_rng(5)
    g = AgeGrid(4.0, 40)
    r = _rates(rng, g)
    mort = MortalityModel(g, 0.1 + 0.01 * g.nodes, 2.0)
    psi = StateField(g, rng.standard_normal((3, g.size)))
    assert np.array_equal(full_semigroup_apply(psi, 0.0, r, mort).values, psi.values)
    dt = g.dt
    two = full_semigroup_apply(psi, 2 * dt, r, mort)
    composed = full_semigroup_apply(full_semigroup_apply(psi, dt, r, mort), dt, r, mort)
    np.testing.assert_allclose(two.values, composed.values, atol=1e-12, rtol=0)
    long = full_semigroup_apply(psi, 25 * dt, r, mort)
    split = full_semigroup_apply(full_semigroup_apply(psi, 10 * dt, r, mort), 15 * dt, r, mort)
    np.testing.assert_allclose(long.values, split.values, atol=1e-12, rtol=0)


def test_linear_maps_preserve_cone():
    rng = np.random.default_rng(6)
    g = AgeGrid(3.0, 30)
    r = _rates(rng, g)
    mort = MortalityModel(g, rng.uniform(0.1, 0.4, g.size), 1.5)
    lam = resolvent_threshold(r, mort) + 1.0
    for _ in range(100):
        psi = StateField(g, rng.random((3, g.size)))
        t = g.dt * rng.integers(0, 31)
        for out in (
            resolvent_apply(psi, lam, r, mort),
            transport_semigroup_apply(psi, t, r, mort),
            reaction_exponential(psi, t, r),
            full_semigroup_apply(psi, t, r, mort),
        ):
            assert out.min() >= -1e-12


def test_boundary_closure_holds_after_every_step():
    rng = np.random.default_rng(7)
    g = AgeGrid(2.0, 20)
    r = _rates(rng, g)
    mort = MortalityModel(g, 0.3, 1.0)
    prop = LinearPropagator(r, mort)
    U = rng.random((3, g.size))
    for _ in range(10):
        U = prop.step(U)
        np.testing.assert_allclose(U[:, 0], boundary_apply(StateField(g, U), r), rtol=1e-13)


def test_step_too_large_for_fertility():
    g = AgeGrid(10.0, 2)
    with pytest.raises(DomainError, match="dt"):
        LinearPropagator(RateSet(g, 1.0, 1, 1), MortalityModel(g, 0.5))


def test_resolvent_zero_and_domain():
    m = constant_model(J=20)
    thr = resolvent_threshold(m.rates, m.mortality)
    zero = resolvent_apply(StateField.zeros(m.grid), thr + 1, m.rates, m.mortality)
    assert not zero.values.any()
    with pytest.raises(DomainError):
        resolvent_apply(StateField.zeros(m.grid), thr, m.rates, m.mortality)


def test_resolvent_satisfies_boundary_condition():
    rng = np.random.default_rng(8)
    g = AgeGrid(3.0, 30)
    r = _rates(rng, g)
    mort = MortalityModel(g, 0.2, 1.0)
    phi = StateField(g, rng.standard_normal((3, g.size)))
    psi = resolvent_apply(phi, resolvent_threshold(r, mort) + 2, r, mort)
    res = generator_apply(psi, r, mort).boundary_residual
    assert np.abs(res).max() < 1e-12


def test_resolvent_conditioning_error():
    # the trapezoid value of int beta exp(-lam a) Pi da slightly exceeds its
    # exact counterpart, so just above the threshold it crosses one
    g = AgeGrid(200.0, 400)
    r = RateSet(g, 0.1, 1, 1, 0.5, 0.5)
    mort = MortalityModel(g, 1e-9, 0.0)
    thr = resolvent_threshold(r, mort)
    wb = g.weights * r.beta
    lam = brentq(lambda x: wb @ np.exp(-x * g.nodes - 1e-9 * g.nodes) - 1.0, thr + 1e-9, thr + 1.0, xtol=1e-15)
    with pytest.raises(ConditioningError):
        resolvent_apply(StateField.from_components(g, 1, 1, 1), lam, r, mort)


def _dense_resolvent(phi, lam, rates, mort):
    """Implicit upwind discretisation of (lam - A_1 - A_2) psi = phi with the boundary row."""
    g = phi.grid
    n = g.size
    mu = mort.mu_nodes
    B = boundary_matrices(rates) * g.weights[:, None, None]
    out = np.zeros((3, n))
    A = np.zeros((3 * n, 3 * n))
    rhs = np.zeros(3 * n)
    idx = lambda c, j: c * n + j
    for c in range(3):
        A[idx(c, 0), idx(c, 0)] = 1.0
        for d in range(3):
            for j in range(n):
                A[idx(c, 0), idx(d, j)] -= B[j, c, d]
        for j in range(1, n):
            A[idx(c, j), idx(c, j)] = lam + mu[j] + 1.0 / g.da
            A[idx(c, j), idx(c, j - 1)] = -1.0 / g.da
            rhs[idx(c, j)] = phi.values[c, j]
    out = np.linalg.solve(A, rhs).reshape(3, n)
    return out


def test_resolvent_matches_dense_solve():
    errs = []
    for J in (40, 80, 160):
        g = AgeGrid(2.0, J)
        r = RateSet(g, 0.8, 1.0, 1.0, 0.4, 0.7)
        mort = MortalityModel(g, 0.5, 0.0)
        phi = StateField.from_components(g, 1 + np.cos(g.nodes), np.exp(-g.nodes), 0.5 * g.nodes)
        lam = resolvent_threshold(r, mort) + 2.0
        ours = resolvent_apply(phi, lam, r, mort).values
        dense = _dense_resolvent(phi, lam, r, mort)
        errs.append(np.abs(ours - dense).max())
    assert errs[0] < 0.05
    assert errs[0] / errs[1] > 1.8 and errs[1] / errs[2] > 1.8


def test_resolvent_identity_converges():
    rng = np.random.default_rng(9)
    g0 = AgeGrid(4.0, 40)
    coef = rng.standard_normal((3, 3))

    def residual(J):
        g = AgeGrid(4.0, J)
        r = RateSet(g, 0.3 + 0.1 * np.sin(g.nodes), 0.5, 1.0 + 0.1 * g.nodes, 0.4, 0.6)
        mort = MortalityModel(g, 0.05 + 0.02 * g.nodes, 2.0)
        phi = StateField(g, coef @ np.array([np.ones(g.size), np.cos(g.nodes), np.sin(2 * g.nodes)]))
        lam = resolvent_threshold(r, mort) + 2.0
        psi = resolvent_apply(phi, lam, r, mort)
        gen = generator_apply(psi, r, mort, include_reaction=False)
        resid = lam * psi.values - gen.values.values - phi.values
        cut = J - 5
        return np.abs(resid[:, :cut]).sum(axis=0) @ g.weights[:cut]

    res = [residual(J) for J in (g0.J, 2 * g0.J, 4 * g0.J)]
    assert res[0] / res[1] >= 1.8 and res[1] / res[2] >= 1.8


def test_generator_examples():
    m = constant_model(J=20)
    out = generator_apply(StateField.zeros(m.grid), m.rates, m.mortality)
    assert not out.values.values.any() and not out.boundary_residual.any()
    # reaction columns sum to zero: the generator of s+i+r is the pure transport one
    rng = np.random.default_rng(10)
    psi = StateField(m.grid, rng.random((3, 21)))
    full = generator_apply(psi, m.rates, m.mortality).values.values
    bare = generator_apply(psi, m.rates, m.mortality, include_reaction=False).values.values
    np.testing.assert_allclose(full.sum(axis=0), bare.sum(axis=0), atol=1e-13)
