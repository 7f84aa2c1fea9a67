# tests/test_inequalities.py
import numpy as np
import pytest

from utils.errors import PreconditionError, UsageError
from utils.groups import Heisenberg, IntegerLattice
from utils.harmonic import BallFunction, gradient
from utils.inequalities import (
    cover_counting_bounds,
    cutoff,
    decay_rate,
    poincare_check,
    reverse_poincare_check,
    separated_cover,
    smoothing_gradient_check,
    tail_error_sweep,
    tail_error_terms,
)
from utils.measures import (
    convolution_power,
    geometric_tail_measure,
    simple_random_walk,
    uniform_on_generators,
)

Z = IntegerLattice(1)
Z2 = IntegerLattice(2)


def _poly(G, radius, fn, label=""):
    return BallFunction.from_coords(G.ball(radius), lambda c: fn(c.astype(float)), label)


def test_poincare_on_a_coordinate():
    f = _poly(Z, 25, lambda c: c[:, 0], "x")
    report = poincare_check(f, 8)
    assert report.lhs == pytest.approx(136.0)
    assert report.rhs_main == pytest.approx(256 * (33 / 17) * 49 / 3)
    assert report.passed
    assert report.constants["growth_ratio"] == pytest.approx(33 / 17)


def test_courteous_variant_needs_density_on_s2():
    f = _poly(Z, 25, lambda c: c[:, 0])
    with pytest.raises(UsageError):
        poincare_check(f, 8, variant="courteous", mu=simple_random_walk(Z))
    with pytest.raises(UsageError):
        poincare_check(f, 8, variant="courteous")
    with pytest.raises(UsageError):
        poincare_check(f, 8, variant="l2")


@pytest.mark.parametrize("G", [Z, Z2], ids=["Z", "Z2"])
@pytest.mark.parametrize("R", [4, 8])
@pytest.mark.parametrize("variant", ["inf", "courteous"])
def test_poincare_holds_for_random_functions(G, R, variant):
    rng = np.random.default_rng(7)
    mu = convolution_power(uniform_on_generators(G), 2)
    domain = G.ball(3 * R + mu.reach)
    for _ in range(5):
        f = BallFunction(domain, rng.standard_normal(domain.size))
        report = poincare_check(f, R, variant=variant, mu=mu)
        assert report.passed, report.ratio
        assert report.lhs > 0


def test_smoothing_gradient_on_random_function():
    rng = np.random.default_rng(3)
    domain = Z2.ball(8)
    f = BallFunction(domain, rng.standard_normal(domain.size))
    report = smoothing_gradient_check(f, 6)
    assert report.passed
    assert report.details["violations"] == 0
    assert report.constants["factor"] == pytest.approx(2 * 13 / 5)


@pytest.mark.parametrize("R", [4, 7])
@pytest.mark.parametrize("measure", ["srw", "geometric"])
@pytest.mark.parametrize("fn", [lambda c: c[:, 0], lambda c: c[:, 0] ** 2 - c[:, 1] ** 2], ids=["x", "x2-y2"])
def test_reverse_poincare_on_harmonic_polynomials(measure, fn, R):
    mu = simple_random_walk(Z2) if measure == "srw" else geometric_tail_measure(Z2, 1.0, 1e-6)
    f = _poly(Z2, 3 * R + mu.reach, fn)
    report = reverse_poincare_check(f, R, mu, k=2)
    assert report.passed
    assert report.rhs_main > 0
    assert report.details["harmonic_residual"] < 1e-9


def test_reverse_poincare_rejects_non_harmonic_input():
    f = _poly(Z2, 13, lambda c: c[:, 0] ** 2)
    with pytest.raises(PreconditionError) as info:
        reverse_poincare_check(f, 4, simple_random_walk(Z2), k=2)
    assert info.value.value == pytest.approx(0.5)


def test_reverse_poincare_rejects_small_polynomial_constant():
    f = _poly(Z2, 13, lambda c: c[:, 0])
    with pytest.raises(PreconditionError):
        reverse_poincare_check(f, 4, simple_random_walk(Z2), k=1, c_f=0.1)


@pytest.mark.parametrize("G, R", [(Z2, 3), (Z2, 5), (Heisenberg(), 2), (Heisenberg(), 4)],
                         ids=["Z2_R3", "Z2_R5", "heisenberg_R2", "heisenberg_R4"])
def test_cutoff_is_lipschitz(G, R):
    phi = cutoff(R, G.ball(2 * R + 2))
    slope = gradient(phi, "inf").values
    assert slope.max() == pytest.approx(1 / R)
    assert phi.values.min() == 0.0 and phi.values.max() == 1.0


def test_poincare_constant_scales_like_r_squared():
    ratios = []
    for R in (4, 8, 16, 32):
        f = _poly(Z, 3 * R + 1, lambda c: c[:, 0], "x")
        report = poincare_check(f, R)
        growth = report.constants["growth_ratio"]
        assert report.rhs_main == pytest.approx(4 * R ** 2 * growth * report.details["gradient_energy"])
        ratios.append(report.lhs / report.rhs_main)
    # lhs / rhs tends to 1/72 for f = x, so the R^2 factor is sharp
    assert all(1 / 72 < r < 0.03 for r in ratios)
    assert all(b < a for a, b in zip(ratios, ratios[1:]))


def test_cutoff_profile():
    phi = cutoff(2, Z.ball(5))
    by_length = dict(zip(phi.domain.lengths.tolist(), phi.values.tolist()))
    assert by_length[0] == 1.0
    assert by_length[2] == 1.0
    assert by_length[3] == 0.5
    assert by_length[4] == 0.0
    assert by_length[5] == 0.0


def test_tail_terms_vanish_for_compact_support():
    f = _poly(Z2, 12, lambda c: c[:, 0])
    terms = tail_error_terms(f, 4, simple_random_walk(Z2))
    assert terms.term1 == 0.0
    assert terms.term2 == 0.0
    assert not terms.truncated


def test_tail_terms_decay_for_geometric_measure():
    mu = geometric_tail_measure(Z, 1.0, 1e-10)
    f = _poly(Z, 2 * 8 + mu.reach, lambda c: c[:, 0], "x")
    table, fit = tail_error_sweep(f, mu, [2, 3, 4, 5, 6, 7, 8])
    assert list(table.columns) == ["R", "term1", "term2", "rhs_error"]
    positive = table[table["rhs_error"] > 0]
    assert positive["rhs_error"].is_monotonic_decreasing
    assert fit.rate is not None
    assert fit.rate >= mu.truncation.tail_rate / 2


def test_decay_rate_recovers_exponent_and_power():
    radii = np.arange(2, 12, dtype=float)
    fit = decay_rate(radii, radii ** 2 * np.exp(-0.7 * radii))
    assert fit.rate == pytest.approx(0.7, abs=1e-9)
    assert fit.power == pytest.approx(2.0, abs=1e-9)


def test_decay_rate_needs_two_positive_values():
    assert decay_rate([1, 2, 3], [0.0, 0.0, 1.0]).rate is None


def test_cover_counting_bounds_on_z2():
    bounds = cover_counting_bounds(Z2, 12, 0.25)
    assert bounds["shrink_radius"] == 1
    assert bounds["J_counting"] == pytest.approx(73.0)
    assert bounds["beta_counting"] == pytest.approx(44.2)


@pytest.mark.parametrize("R", [12, 24])
@pytest.mark.parametrize("epsilon", [0.25, 1 / 3])
def test_separated_cover_on_z2(R, epsilon):
    cover = separated_cover(Z2, R, epsilon)
    assert cover.covering_verified
    assert cover.separation_verified
    assert cover.maximal
    assert cover.centers[0] == Z2.identity()
    assert cover.J <= cover.bounds["J_counting"]
    assert cover.beta <= cover.bounds["beta_counting"]
    assert cover.beta <= cover.D ** 3


def test_separated_cover_is_maximal():
    cover = separated_cover(Z2, 12, 0.25)
    sep = 0.25 * 12
    centers = np.array([c.coords for c in cover.centers])
    points = Z2.ball(12).coords
    dist = np.abs(points[:, None, :] - centers[None, :, :]).sum(axis=-1)
    assert (dist.min(axis=1) < sep).all()
    for j in range(len(centers)):
        rest = np.delete(dist, j, axis=1)
        assert (rest.min(axis=1) >= sep).any()


def test_separated_cover_needs_room():
    with pytest.raises(UsageError):
        separated_cover(Z2, 8, 0.25)
