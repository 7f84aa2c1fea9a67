# tests/test_harmonic.py
from fractions import Fraction

import numpy as np
import pytest

from utils.errors import DomainTooSmallError, UsageError
from utils.groups import Heisenberg, IntegerLattice, Lamplighter
from utils.harmonic import (
    BallFunction,
    equilibrated_rank,
    gradient,
    gram_matrix,
    harmonic_basis,
    harmonicity_residual,
    markov_operator,
    polynomial_k_norm,
    seminorm_ball,
)
from utils.measures import geometric_tail_measure, simple_random_walk, uniform_on_generators

Z = IntegerLattice(1)
Z2 = IntegerLattice(2)


def _coord(G, radius, i):
    return BallFunction.from_coords(G.ball(radius), lambda c: c[:, i].astype(float), "x")


def test_markov_operator_exact_on_square():
    f = BallFunction.from_elements(Z.ball(5), lambda x: x.coords[0] ** 2)
    pf = markov_operator(f, uniform_on_generators(Z))
    assert pf.radius == 4
    for x, v in zip(pf.domain.points, pf.values):
        assert v == x.coords[0] ** 2 + Fraction(2, 3)


def test_product_of_coordinates_is_harmonic():
    f = BallFunction.from_coords(Z2.ball(6), lambda c: (c[:, 0] * c[:, 1]).astype(float))
    res = harmonicity_residual(f, simple_random_walk(Z2), 5)
    assert res.sup == 0.0
    assert res.l2 == 0.0


def test_residual_detects_square():
    f = BallFunction.from_coords(Z2.ball(6), lambda c: (c[:, 0] ** 2).astype(float))
    assert harmonicity_residual(f, simple_random_walk(Z2), 5).sup == pytest.approx(0.5)


def test_inner_radius_must_fit_reach():
    with pytest.raises(DomainTooSmallError):
        markov_operator(_coord(Z, 3, 0), simple_random_walk(Z), inner_radius=3)


def test_gradients_of_a_coordinate():
    f = _coord(Z2, 6, 0)
    assert np.allclose(gradient(f, "inf").values, 1.0)
    assert np.allclose(gradient(f, "mu", measure=simple_random_walk(Z2)).values, np.sqrt(0.5))
    with pytest.raises(UsageError):
        gradient(f, "mu")
    with pytest.raises(UsageError):
        gradient(f, "sup")


def test_seminorm_and_polynomial_norm():
    f = _coord(Z, 4, 0)
    assert seminorm_ball(f, Z.ball(2)) == pytest.approx(np.sqrt(10 / 3))
    assert polynomial_k_norm(f, 1) == pytest.approx(4 / 5)
    assert polynomial_k_norm(f, 0) == pytest.approx(4.0)


@pytest.mark.parametrize("R", [5, 10, 30])
def test_gram_determinant_matches_power_sums(R):
    one = BallFunction.from_coords(Z.ball(R), lambda c: np.ones(len(c)))
    x = _coord(Z, R, 0)
    Q = gram_matrix([one, x], R)
    expected = (2 * R + 1) / 3 * (2 / 3) * R * (R + 1) * (2 * R + 1) / 6
    assert Q.det == pytest.approx(expected, rel=1e-9)
    assert Q.numerical_rank == 2
    assert abs(Q.matrix[0, 1]) < 1e-12


def test_equilibrated_rank_sees_duplicates():
    rank, _ = equilibrated_rank(np.array([[1.0, 1.0], [1.0, 1.0]]), 1e-8)
    assert rank == 1
    rank, _ = equilibrated_rank(np.diag([1e-12, 1.0]), 1e-8)
    assert rank == 2


@pytest.mark.parametrize("k, dim", [(1, 2), (2, 2), (3, 2)])
def test_poly_ansatz_on_z(k, dim):
    basis = harmonic_basis(Z, uniform_on_generators(Z), k)
    assert basis.dimension == dim


@pytest.mark.parametrize("k, dim", [(1, 3), (2, 5), (3, 7)])
def test_poly_ansatz_on_z2(k, dim):
    mu = simple_random_walk(Z2)
    basis = harmonic_basis(Z2, mu, k)
    assert basis.dimension == dim
    for f in basis.functions:
        assert harmonicity_residual(f, mu, f.radius - 1).sup < 1e-9


def test_poly_ansatz_with_geometric_tail():
    basis = harmonic_basis(Z2, geometric_tail_measure(Z2, 1.0, 1e-8), 2)
    assert basis.dimension == 5


def test_poly_ansatz_on_heisenberg():
    basis = harmonic_basis(Heisenberg(), simple_random_walk(Heisenberg()), 2)
    assert basis.dimension == 6


def test_poly_ansatz_needs_coordinates():
    L = Lamplighter()
    with pytest.raises(UsageError):
        harmonic_basis(L, simple_random_walk(L), 1)


def test_variational_backend_on_z():
    basis = harmonic_basis(Z, uniform_on_generators(Z), 1, backend="variational", r_eval=16)
    assert basis.dimension == 2


def test_unknown_backend():
    with pytest.raises(UsageError):
        harmonic_basis(Z, uniform_on_generators(Z), 1, backend="spectral")


@pytest.mark.parametrize("mu", [simple_random_walk(Z2), uniform_on_generators(Z2)], ids=["srw", "uniform"])
def test_markov_operator_is_linear_and_contracting(mu):
    rng = np.random.default_rng(17)
    domain = Z2.ball(6)
    f = BallFunction(domain, rng.standard_normal(domain.size))
    g = BallFunction(domain, rng.standard_normal(domain.size))
    combo = BallFunction(domain, 2.0 * f.values - 3.0 * g.values)
    pf, pg, pc = (np.asarray(markov_operator(h, mu).values, dtype=float) for h in (f, g, combo))
    assert np.allclose(pc, 2.0 * pf - 3.0 * pg)
    assert np.abs(pf).max() <= np.abs(f.values).max() + 1e-12


def test_seminorm_grows_with_the_ball():
    rng = np.random.default_rng(23)
    f = BallFunction(Z2.ball(10), rng.standard_normal(Z2.ball(10).size))
    values = [seminorm_ball(f, Z2.ball(r)) for r in range(11)]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_gram_rank_is_invariant_under_change_of_basis():
    basis = harmonic_basis(Z2, simple_random_walk(Z2), 2, radius=9)
    ball = Z2.ball(8)
    V = np.column_stack([f.values_on(ball) for f in basis.functions])
    rng = np.random.default_rng(29)
    A = rng.standard_normal((5, 5))
    mixed = [BallFunction(ball, col) for col in (V @ A).T]
    assert gram_matrix(mixed, 8).numerical_rank == 5
    A[:, 3] = A[:, 0] + A[:, 1]
    A[:, 4] = A[:, 2] - 2 * A[:, 0]
    collapsed = [BallFunction(ball, col) for col in (V @ A).T]
    assert gram_matrix(collapsed, 8).numerical_rank == 3


@pytest.mark.parametrize("k, dim", [(1, 3), (2, 5)])
def test_variational_backend_agrees_with_ansatz_on_z2(k, dim):
    mu = simple_random_walk(Z2)
    variational = harmonic_basis(Z2, mu, k, backend="variational", r_eval=16)
    assert variational.dimension == harmonic_basis(Z2, mu, k).dimension == dim


def test_variational_backend_on_heisenberg():
    H = Heisenberg()
    mu = simple_random_walk(H)
    variational = harmonic_basis(H, mu, 1, backend="variational", r_eval=8)
    assert variational.dimension == harmonic_basis(H, mu, 1).dimension == 3
