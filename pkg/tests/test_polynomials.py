# tests/test_polynomials.py
import numpy as np
import pytest

from utils.errors import DomainTooSmallError, UsageError
from utils.groups import Heisenberg, IntegerLattice
from utils.harmonic import BallFunction, gram_matrix, harmonic_basis
from utils.measures import simple_random_walk, uniform_on_generators
from utils.polynomials import (
    DerivativeWord,
    derivative,
    left_derivative,
    left_translate,
    poly_space_basis,
    polynomial_degree_test,
    weight_decomposition,
)

Z = IntegerLattice(1)
Z2 = IntegerLattice(2)
H = Heisenberg()


def _square(radius):
    return BallFunction.from_coords(Z.ball(radius), lambda c: (c[:, 0] ** 2).astype(float), "x^2")


def test_left_derivative_of_square():
    d = left_derivative(_square(6), Z.element((1,)))
    assert d.radius == 5
    xs = d.domain.coords[:, 0]
    assert np.array_equal(d.values, 2 * xs + 1)


def test_second_derivative_is_constant():
    one = Z.element((1,))
    d = derivative(_square(6), DerivativeWord((one, one)))
    assert np.allclose(d.values, 2.0)


def test_empty_derivative_word():
    with pytest.raises(UsageError):
        DerivativeWord(())


def test_left_translate_shifts_by_inverse():
    f = BallFunction.from_coords(Z.ball(5), lambda c: c[:, 0].astype(float))
    g = left_translate(f, Z.element((2,)))
    assert g.radius == 3
    assert np.array_equal(g.values, g.domain.coords[:, 0] - 2)


def test_degree_test_on_square():
    f = _square(8)
    low = polynomial_degree_test(f, 1, word_cap=1)
    assert not low.is_degree_at_most_k
    assert low.max_violation == pytest.approx(2.0)
    assert polynomial_degree_test(f, 2, word_cap=1).is_degree_at_most_k


def test_degree_test_needs_room_for_words():
    with pytest.raises(DomainTooSmallError):
        polynomial_degree_test(_square(3), 2, word_cap=2)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_harmonic_basis_elements_are_polynomials(k):
    basis = harmonic_basis(Z2, simple_random_walk(Z2), k, radius=16)
    for f in basis.functions:
        result = polynomial_degree_test(f, k, word_cap=2)
        assert result.is_degree_at_most_k, f.label


def test_heisenberg_center_has_degree_two():
    z = BallFunction.from_coords(H.ball(8), lambda c: c[:, 2].astype(float), "z")
    assert polynomial_degree_test(z, 2, word_cap=1).is_degree_at_most_k
    assert not polynomial_degree_test(z, 1, word_cap=1).is_degree_at_most_k


def test_poly_space_basis_labels():
    assert [f.label for f in poly_space_basis(Z2, 1, radius=2)] == ["1", "x", "y"]


def test_translation_matrix_on_affine_functions():
    basis = poly_space_basis(Z, 1, radius=6)
    Q = gram_matrix(basis, 5)
    wd = weight_decomposition(basis, [Z.element((1,)), Z.element((-1,))], Q)
    assert np.allclose(wd.actions[0].matrix, [[1.0, -1.0], [0.0, 1.0]])
    assert np.allclose(wd.actions[1].matrix, [[1.0, 1.0], [0.0, 1.0]])
    assert wd.chain_dims == [1, 2]
    assert wd.unipotent


def test_weight_decomposition_of_hf2_on_z2():
    basis = harmonic_basis(Z2, simple_random_walk(Z2), 2, radius=9)
    Q = gram_matrix(basis.functions, 8)
    gens = [g for g in Z2.generators if g != Z2.identity()]
    wd = weight_decomposition(basis.functions, gens, Q)
    assert wd.chain_dims == [1, 3, 5]
    assert wd.unipotent
    assert wd.max_eigen_deviation <= 1e-6


def test_weight_decomposition_rejects_dependent_basis():
    f = BallFunction.from_coords(Z.ball(4), lambda c: np.ones(len(c)))
    Q = gram_matrix([f, f], 3)
    with pytest.raises(UsageError):
        weight_decomposition([f, f], [Z.element((1,))], Q)


def test_uniform_measure_basis_is_unipotent_on_z():
    basis = harmonic_basis(Z, uniform_on_generators(Z), 3, radius=7)
    Q = gram_matrix(basis.functions, 6)
    wd = weight_decomposition(basis.functions, [Z.element((1,))], Q)
    assert wd.chain_dims == [1, 2]


@pytest.mark.parametrize("scale", [1e-6, 1.0, 1e6])
def test_flag_reaches_full_space_whatever_the_scale(scale):
    # once the flag holds the constants, the remaining nilpotent part is rounding noise
    basis = [BallFunction.from_coords(Z.ball(6), lambda c, p=p: scale * c[:, 0].astype(float) ** p, f"x^{p}")
             for p in range(3)]
    Q = gram_matrix(basis, 5)
    wd = weight_decomposition(basis, [Z.element((1,))], Q)
    assert wd.chain_dims == [1, 2, 3]
    assert wd.unipotent
    assert wd.notes == []


def test_exponential_is_not_unipotent():
    f = BallFunction.from_coords(Z.ball(6), lambda c: 2.0 ** c[:, 0], "2^x")
    Q = gram_matrix([f], 5)
    wd = weight_decomposition([f], [Z.element((1,))], Q)
    assert wd.chain_dims == []
    assert not wd.unipotent
    assert wd.eigenvalues[(1,)][0] == pytest.approx(0.5)
    assert wd.notes


def _random_integer_function(G, radius, seed):
    rng = np.random.default_rng(seed)
    domain = G.ball(radius)
    return BallFunction(domain, rng.integers(-50, 50, size=domain.size).astype(float))


def test_left_derivatives_commute_on_z2():
    f = _random_integer_function(Z2, 6, 31)
    u, v = Z2.element((1, 0)), Z2.element((1, -1))
    uv = derivative(f, DerivativeWord((u, v)))
    vu = derivative(f, DerivativeWord((v, u)))
    assert uv.radius == vu.radius == 3
    assert np.array_equal(uv.values, vu.values)


@pytest.mark.parametrize("G, u, v", [
    (Z2, (1, 0), (0, -1)),
    (H, (1, 0, 0), (0, 1, 0)),
    (H, (0, -1, 0), (1, 0, 0)),
], ids=["Z2", "heisenberg_ab", "heisenberg_ba"])
def test_derivative_along_a_product(G, u, v):
    # d_{uv} f(x) = d_u f(vx) + d_v f(x)
    f = _random_integer_function(G, 6, 37)
    u, v = G.element(u), G.element(v)
    d_uv = left_derivative(f, G.multiply(u, v))
    d_u = left_derivative(f, u)
    d_v = left_derivative(f, v)
    points = d_uv.domain.points
    at_vx = d_u.domain.index_of_elements([G.multiply(v, x) for x in points])
    assert (at_vx >= 0).all()
    assert np.array_equal(d_uv.values, d_u.values[at_vx] + d_v.values[: len(points)])


@pytest.mark.parametrize("G, fn, g, k", [
    (Z2, lambda c: c[:, 0] * c[:, 1] - 3 * c[:, 0] ** 2 + c[:, 1], (2, -1), 2),
    (H, lambda c: c[:, 2], (1, 0, 0), 2),
    (H, lambda c: c[:, 0] * c[:, 1] - 2 * c[:, 2], (0, -1, 0), 2),
], ids=["Z2_quadratic", "heisenberg_z", "heisenberg_xy_minus_2z"])
def test_degree_is_unchanged_by_translation(G, fn, g, k):
    f = BallFunction.from_coords(G.ball(10), lambda c: fn(c.astype(float)))
    moved = left_translate(f, G.element(g))
    assert moved.radius >= (k + 1) * 2
    for h in (f, moved):
        assert polynomial_degree_test(h, k).is_degree_at_most_k
        assert not polynomial_degree_test(h, k - 1).is_degree_at_most_k
