"""Small model builders shared by the test modules."""

from agesirs import AgeGrid, ForceSpec, MixingKernel, Model, MortalityModel, RateSet, StateField


def constant_model(J=20, omega=1.0, beta=1.0, gamma=1.0, delta=1.0, mu=0.5, theta=1.0, k=1.0, p=1.0, q=1.0,
                   force=None):
    grid = AgeGrid(omega, J)
    rates = RateSet(grid, beta, gamma, delta, p, q)
    mort = MortalityModel(grid, mu, theta)
    kernel = MixingKernel(grid, k)
    return Model(rates, mort, kernel, force or ForceSpec("identity", grid=grid))


def random_state(rng, grid, scale=1.0):
    return StateField(grid, scale * rng.random((3, grid.size)))
