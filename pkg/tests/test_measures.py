# tests/test_measures.py
from fractions import Fraction

import pytest

from utils.errors import TruncationTooSmallError, UsageError
from utils.groups import IntegerLattice, parse_subgroup
from utils.measures import (
    adapted_radius,
    change_of_variables_identity,
    check_courteous,
    convolution_power,
    geometric_tail_measure,
    hitting_measure,
    StepMeasure,
    simple_random_walk,
    uniform_on_generators,
)

Z = IntegerLattice(1)
Z2 = IntegerLattice(2)


def _masses(mu):
    return {x.coords: m for x, m in mu.support}


def test_uniform_measure_is_exact_thirds():
    mu = uniform_on_generators(Z)
    assert _masses(mu) == {(0,): Fraction(1, 3), (-1,): Fraction(1, 3), (1,): Fraction(1, 3)}
    assert mu.is_exact
    assert mu.total_mass() == 1


def test_srw_convolution_square_on_z():
    mu2 = convolution_power(simple_random_walk(Z), 2)
    assert _masses(mu2) == {(0,): Fraction(1, 2), (-2,): Fraction(1, 4), (2,): Fraction(1, 4)}
    assert mu2.reach == 2


def test_convolution_power_rejects_zero():
    with pytest.raises(UsageError):
        convolution_power(simple_random_walk(Z), 0)


def test_courteous_report_for_lazy_walk():
    report = check_courteous(Z2, uniform_on_generators(Z2))
    assert report.symmetric
    assert report.adapted_radius == 1
    assert report.courteous
    assert report.second_moment == pytest.approx(4 / 5)
    assert report.density_floors[1] == pytest.approx(1.0)
    assert report.density_floors[2] == 0.0


def test_squared_lazy_walk_has_floor_on_s2():
    report = check_courteous(Z, convolution_power(uniform_on_generators(Z), 2))
    assert report.density_floors[2] == pytest.approx(1 / 3)
    assert report.density_floors[1] == pytest.approx(2 / 3)


def test_squared_srw_on_z2_is_not_adapted():
    mu2 = convolution_power(simple_random_walk(Z2), 2)
    assert adapted_radius(Z2, mu2) is None
    assert not check_courteous(Z2, mu2).courteous


def test_geometric_measure_truncation():
    mu = geometric_tail_measure(Z, 1.0, 1e-8)
    assert mu.truncation.radius == 18
    assert 0 < mu.discarded_mass <= 1e-8
    report = check_courteous(Z, mu)
    assert report.symmetric
    assert report.courteous
    assert report.tail_fit.certified_rate > 0


@pytest.mark.parametrize("decay, tol", [(0.0, 1e-8), (1.0, 0.0), (1.0, 1.5)])
def test_geometric_measure_rejects_bad_parameters(decay, tol):
    with pytest.raises(UsageError):
        geometric_tail_measure(Z, decay, tol)


def test_change_of_variables_is_exact():
    mu = uniform_on_generators(Z)
    lhs, rhs = change_of_variables_identity(
        Z, mu, lambda x, y: (x.coords[0] + 2) * (y.coords[0] ** 2 + 1), radius=3
    )
    assert isinstance(lhs, Fraction)
    assert lhs == rhs


def test_exact_hitting_measure_on_even_integers():
    res = hitting_measure(Z, "sublattice:basis=[[2]]", simple_random_walk(Z))
    masses = {x.coords[0]: float(m) for x, m in res.measure.support}
    assert masses.keys() == {-2, 0, 2}
    assert masses[0] == pytest.approx(0.5, abs=1e-12)
    assert masses[-2] == pytest.approx(0.25, abs=1e-12)
    assert masses[2] == pytest.approx(0.25, abs=1e-12)
    assert res.tau_distribution == {2: pytest.approx(1.0)}


def test_hitting_measure_is_courteous_on_subgroup():
    H = parse_subgroup(Z, "sublattice:basis=[[2]]")
    res = hitting_measure(Z, H, simple_random_walk(Z))
    report = check_courteous(H, res.measure)
    assert report.symmetric
    assert report.adapted_radius is not None


def test_monte_carlo_hitting_within_three_standard_errors():
    res = hitting_measure(Z, "sublattice:basis=[[2]]", simple_random_walk(Z), mode="monte_carlo",
                          n_samples=20_000, seed=11)
    exact = {(-2,): 0.25, (0,): 0.5, (2,): 0.25}
    for x, m in res.measure.support:
        se = res.standard_errors[x.coords]
        assert abs(m - exact[x.coords]) <= 3 * se


def test_monte_carlo_hitting_measure_is_symmetric_within_sampling_error():
    H = parse_subgroup(Z, "sublattice:basis=[[2]]")
    res = hitting_measure(Z, H, simple_random_walk(Z), mode="monte_carlo", n_samples=20_000, seed=11)
    report = check_courteous(H, res.measure, res.standard_errors)
    assert report.symmetric
    assert 1e-3 < report.symmetry_tol < 0.05
    assert report.to_dict()["symmetry_tol"] == report.symmetry_tol


def test_sampled_symmetry_rejects_a_real_skew():
    masses = {Z.element((-1,)): 0.3, Z.element((0,)): 0.5, Z.element((1,)): 0.2}
    mu = StepMeasure.from_masses(Z, masses)
    errors = {(-1,): 1e-3, (0,): 1e-3, (1,): 1e-3}
    assert not check_courteous(Z, mu, errors).symmetric


def test_adapted_radius_uses_the_union_of_powers():
    # supp(srw) misses the identity and supp(srw)^2 misses +-1; together they cover S
    assert adapted_radius(Z, simple_random_walk(Z)) == 2


def test_exact_hitting_truncation_is_measured_in_the_subgroup():
    res = hitting_measure(Z, "sublattice:basis=[[2]]", uniform_on_generators(Z), trunc_radius=40)
    assert res.ambient_trunc_radius == 40
    assert res.measure.reach <= 20
    assert res.to_dict()["ambient_trunc_radius"] == 40


def test_monte_carlo_hitting_ignores_worker_count():
    runs = [
        hitting_measure(Z, "sublattice:basis=[[2]]", simple_random_walk(Z), mode="monte_carlo",
                        n_samples=5_000, seed=3, workers=w)
        for w in (1, 4)
    ]
    assert _masses(runs[0].measure) == _masses(runs[1].measure)


def test_monte_carlo_hitting_needs_seed():
    with pytest.raises(UsageError):
        hitting_measure(Z, "sublattice:basis=[[2]]", simple_random_walk(Z), mode="monte_carlo")


def test_hitting_truncation_too_small():
    with pytest.raises(TruncationTooSmallError):
        hitting_measure(Z, "sublattice:basis=[[2]]", simple_random_walk(Z), trunc_radius=1)
