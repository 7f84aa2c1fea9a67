# utils/inequalities.py
"""Separated covers and numerical checks of the Poincaré and reverse Poincaré inequalities."""
import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence

import numpy as np
import pandas as pd

from config import DOUBLING_RMAX_FACTOR, HARMONIC_TOL, logger
from utils.errors import PreconditionError, ResourceError, UsageError
from utils.groups import Ball, GroupElement, GroupPresentation, coords_json, doubling_constant, dyadic_exponent
from utils.harmonic import (
    BallFunction,
    _neighbor_table,
    _numeric,
    gradient,
    harmonicity_residual,
    polynomial_k_norm,
)
from utils.measures import CourteousReport, StepMeasure, check_courteous
from utils.workers import ordered_map


@dataclass
class CoverStructure:
    radius: int
    epsilon: float
    centers: List[GroupElement]
    J: int
    beta: int
    covering_verified: bool
    separation_verified: bool
    maximal: bool
    D: float
    bounds: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            "radius": self.radius,
            "epsilon": self.epsilon,
            "centers": [coords_json(c.coords) for c in self.centers],
            "J": self.J,
            "beta": self.beta,
            "covering_verified": self.covering_verified,
            "separation_verified": self.separation_verified,
            "maximal": self.maximal,
            "D": self.D,
            "bounds": self.bounds,
        }


def _distances_from(G: GroupPresentation, ball: Ball, center: GroupElement, bound: int) -> np.ndarray:
    """d(center, x) for every x in ball, capped at bound + 1."""
    if ball.coords is not None:
        c = np.array(G.invert(center).coords, dtype=np.int64)
        return G.lengths_of(G.multiply_coords(c[None, :], ball.coords), bound)
    inv = G.invert(center).coords
    out = []
    for p in ball.points:
        d = G.word_length(G.element(G._mul(inv, p.coords)))
        out.append(min(d, bound + 1))
    return np.array(out, dtype=np.int64)


def _measured_doubling(G: GroupPresentation, R: int) -> float:
    try:
        return doubling_constant(G, max(2, DOUBLING_RMAX_FACTOR * R)).D
    except ResourceError as e:
        if e.largest_radius is None or e.largest_radius < 2:
            raise
        logger.warning(f"doubling constant for {G.name} measured only up to radius {e.largest_radius}")
        return doubling_constant(G, e.largest_radius).D


def cover_counting_bounds(G: GroupPresentation, R: int, epsilon: float) -> Dict[str, float]:
    """Packing bounds from the disjoint balls B(x_j, r), r = ceil(eps R / 2) - 1."""
    r = max(0, math.ceil(epsilon * R / 2) - 1)
    reach = math.floor(3 * epsilon * R)
    sizes = G.ball_sizes(R + reach + r) if R + reach + r >= 1 else [1]
    size = lambda n: 1 if n == 0 else sizes[n - 1]
    return {
        "shrink_radius": r,
        "J_counting": size(R + r) / size(r),
        "beta_counting": size(reach + r) / size(r),
    }


def separated_cover(G: GroupPresentation, R: int, epsilon: float, D: Optional[float] = None) -> CoverStructure:
    """Greedy maximal eps*R-separated subset of B(R) in ball order, with its 3-fold multiplicity."""
    if epsilon <= 0:
        raise UsageError("epsilon must be positive")
    if R * epsilon <= 2:
        raise UsageError(f"separated_cover needs R > 2/epsilon (R={R}, epsilon={epsilon})")
    sep = epsilon * R
    ball = G.ball(R)
    n = ball.size
    blocked = np.zeros(n, dtype=bool)
    nearest = np.full(n, 2 * R + 1, dtype=np.int64)
    centers: List[int] = []
    rows: List[np.ndarray] = []
    for i in range(n):
        if blocked[i]:
            continue
        d = _distances_from(G, ball, ball.points[i], 2 * R)
        centers.append(i)
        rows.append(d)
        blocked |= d < sep
        nearest = np.minimum(nearest, d)

    covering = bool(np.all(nearest <= sep))
    pair = np.array([row[centers] for row in rows])
    off = pair[~np.eye(len(centers), dtype=bool)]
    separation = bool(np.all(off >= sep)) if off.size else True
    maximal = bool(blocked.all())

    reach = math.floor(3 * sep)
    outer = G.ball(R + reach)
    counts = np.zeros(outer.size, dtype=np.int64)
    for i in centers:
        counts += _distances_from(G, outer, ball.points[i], reach) <= 3 * sep
    beta = int(counts.max())

    D = _measured_doubling(G, R) if D is None else D
    e = dyadic_exponent(epsilon)
    bounds = cover_counting_bounds(G, R, epsilon)
    bounds.update({
        "dyadic_exponent": e,
        "J_doubling": D ** e,
        "beta_doubling": D ** 3,
        "J_within_doubling": len(centers) <= D ** e,
        "beta_within_doubling": beta <= D ** 3,
    })
    cover = CoverStructure(R, float(epsilon), [ball.points[i] for i in centers], len(centers), beta,
                           covering, separation, maximal, float(D), bounds)
    logger.info(f"cover of B({R}) in {G.name}, eps={epsilon}: J={cover.J}, beta={beta}, covering={covering}")
    return cover


@dataclass
class InequalityReport:
    kind: str
    radius: int
    lhs: float
    rhs_main: float
    rhs_error: float
    ratio: float
    passed: bool
    constants: Dict[str, float] = field(default_factory=dict)
    details: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            "kind": self.kind,
            "radius": self.radius,
            "lhs": self.lhs,
            "rhs_main": self.rhs_main,
            "rhs_error": self.rhs_error,
            "ratio": self.ratio,
            "pass": self.passed,
            "constants": self.constants,
            "details": self.details,
        }


def _report(kind, R, lhs, rhs_main, rhs_error, constants, details=None) -> InequalityReport:
    rhs = rhs_main + rhs_error
    if rhs > 0:
        ratio = lhs / rhs
    else:
        ratio = 0.0 if lhs <= 0 else math.inf
    return InequalityReport(kind, R, float(lhs), float(rhs_main), float(rhs_error), float(ratio),
                            bool(ratio <= 1.0), constants, details or {})


def _ball_integral(values: np.ndarray, ball: Ball) -> float:
    return float(np.sum(values) * float(ball.point_weight))


POINCARE_VARIANTS = ("inf", "courteous")


def poincare_check(
    f: BallFunction,
    R: int,
    variant: str = "inf",
    mu: Optional[StepMeasure] = None,
    courteous: Optional[CourteousReport] = None,
) -> InequalityReport:
    """Compare the variance of f on B(R) with the gradient energy on B(3R).

    Args:
        f: Function on a ball of radius at least 3R plus the gradient reach.
        R: Ball radius.
        variant: "inf" uses the S-gradient and (2R)^2 |B(2R)|/|B(R)|; "courteous" uses the
            mu-gradient and 32 R^2 (|B(2R)|/|B(R)|)^2 / c, c the density floor of mu on S^2.
        mu: Step measure, required for the courteous variant.
        courteous: Precomputed check_courteous report for mu.

    Returns:
        InequalityReport with every constant used.
    """
    if R < 1:
        raise UsageError("poincare_check needs R >= 1")
    G = f.group
    ball = G.ball(R)
    vals = _numeric(f.values_on(ball))
    mean = np.mean(vals)
    lhs = _ball_integral(np.abs(vals - mean) ** 2, ball)
    growth = G.ball(2 * R).size / ball.size
    if variant == "inf":
        grad = gradient(f, "inf", inner_radius=3 * R)
        energy = _ball_integral(grad.values ** 2, grad.domain)
        rhs = (2 * R) ** 2 * growth * energy
        constants = {"growth_ratio": growth}
    elif variant == "courteous":
        if mu is None:
            raise UsageError("the courteous Poincaré variant needs a measure")
        courteous = check_courteous(G, mu) if courteous is None else courteous
        c = courteous.density_floors.get(2, 0.0)
        if c <= 0:
            raise UsageError(
                f"{mu.label} has no density floor on S^2; use convolution_power of a lazy measure"
            )
        grad = gradient(f, "mu", inner_radius=3 * R, measure=mu)
        energy = _ball_integral(grad.values ** 2, grad.domain)
        rhs = 32 * R ** 2 * growth ** 2 * energy / c
        constants = {"growth_ratio": growth, "c": c}
    else:
        raise UsageError(f"unknown Poincaré variant {variant!r}; expected one of {POINCARE_VARIANTS}")
    return _report(f"poincare_{variant}", R, lhs, rhs, 0.0, constants, {"gradient_energy": energy})


class TailTerms(NamedTuple):
    term1: float
    term2: float
    truncated: bool


def tail_error_terms(f: BallFunction, R: int, mu: StepMeasure) -> TailTerms:
    """Direct sums of the two far-field integrals pairing B(2R) with the outside of B(3R)."""
    G = f.group
    inner = G.ball(2 * R)
    if f.radius < 2 * R + mu.reach:
        raise UsageError(f"tail terms need f on B({2 * R + mu.reach}), got radius {f.radius}")
    domain = f.domain
    vals = _numeric(f.values)
    w = float(domain.point_weight)
    term1 = term2 = 0.0
    for s, m in zip(mu.elements, mu.mass_array):
        if G.word_length(s) <= R:
            continue
        # term2: x in B(2R), y = xs outside B(3R)
        fwd = _translate_index(domain, inner, s.coords)
        outside = domain.lengths[fwd] > 3 * R
        term2 += m * w * float(np.sum(vals[fwd][outside] ** 2))
        # term1: y in B(2R), x = y s^-1 outside B(3R), mu(x^-1 y) = mu(s)
        back = _translate_index(domain, inner, G.invert(s).coords)
        outside = domain.lengths[back] > 3 * R
        fy = vals[: inner.size][outside]
        term1 += m * w * float(np.sum(np.abs(fy) * np.abs(vals[back][outside] - fy)))
    truncated = mu.truncation is not None and mu.truncation.radius < R
    if truncated:
        logger.warning(f"tail terms at R={R}: truncation radius {mu.truncation.radius} below R")
    return TailTerms(term1, term2, truncated)


def _translate_index(domain: Ball, inner: Ball, offset: tuple) -> np.ndarray:
    G = domain.group
    if domain.coords is not None:
        off = np.array(offset, dtype=np.int64)
        idx = domain.index_of(G.multiply_coords(inner.coords, off[None, :]))
    else:
        idx = domain.index_of_elements([G.element(G._mul(p.coords, offset)) for p in inner.points])
    if (idx < 0).any():
        raise UsageError("translates leave the function domain")
    return idx


def cutoff(R: int, domain: Ball) -> BallFunction:
    """phi = 1 on B(R), (2R - |x|)/R on R < |x| <= 2R, 0 beyond."""
    lengths = domain.lengths.astype(float)
    return BallFunction(domain, np.clip((2 * R - lengths) / R, 0.0, 1.0), f"phi_{R}")


def _discarded_slack(mu: StepMeasure, R: int, c_f: float, k: float, volume: float) -> float:
    """Bound on the far-field terms carried by the discarded tail of mu."""
    delta = mu.discarded_mass
    if delta <= 0:
        return 0.0
    rate = mu.truncation.tail_rate if mu.truncation else None
    q = math.exp(-rate) if rate else 0.0
    base = 2 + 3 * R + mu.reach
    total, j = 0.0, 1
    while True:
        weight = delta * (1 - q) * q ** (j - 1)
        total += weight * (base + j) ** (2 * k)
        if q == 0 or weight * (base + j) ** (2 * k) < 1e-18 * max(total, 1e-300) or j > 10_000:
            break
        j += 1
    return 12 * volume * c_f ** 2 * total


def reverse_poincare_check(
    f: BallFunction, R: int, mu: StepMeasure, k: float, c_f: Optional[float] = None
) -> InequalityReport:
    """Gradient energy of a harmonic f on B(R) against 8 sigma^2/R^2 times its L^2 mass on B(3R)."""
    if R < 1:
        raise UsageError("reverse_poincare_check needs R >= 1")
    G = f.group
    mu_n = mu.normalized()
    residual = harmonicity_residual(f, mu_n, 3 * R).sup
    scale = max(1.0, float(np.max(np.abs(_numeric(f.values)), initial=0.0)))
    if residual > HARMONIC_TOL * scale:
        logger.error(f"reverse Poincaré on non-harmonic input: residual {residual:.3e}")
        raise PreconditionError(f"f is not harmonic on B({3 * R}): residual {residual:.3e}", residual)
    norm = polynomial_k_norm(f, k)
    if c_f is None:
        c_f = norm
    elif c_f < norm * (1 - 1e-12):
        raise PreconditionError(f"c_f={c_f} is below the measured polynomial norm {norm}", norm)

    lengths = np.array([G.word_length(x) for x in mu_n.elements], dtype=float)
    sigma2 = float(np.sum(mu_n.mass_array * lengths ** 2))
    grad = gradient(f, "mu", inner_radius=3 * R, measure=mu_n)
    energy = grad.values ** 2
    n_inner = grad.domain.count_within(R)
    lhs = _ball_integral(energy[:n_inner], G.ball(R))
    phi = cutoff(R, grad.domain)
    phi_energy = _ball_integral(phi.values ** 2 * energy, grad.domain)
    big = G.ball(3 * R)
    mass = _ball_integral(np.abs(_numeric(f.values_on(big))) ** 2, big)
    rhs_main = 8 * sigma2 / R ** 2 * mass
    tails = tail_error_terms(f, R, mu_n)
    slack = _discarded_slack(mu, R, c_f, k, big.haar_volume)
    rhs_error = 12 * (tails.term1 + tails.term2) + slack
    constants = {"sigma2": sigma2, "c_f": float(c_f), "k": float(k), "tail_factor": 12.0}
    details = {
        "phi_energy": phi_energy,
        "tail_term1": tails.term1,
        "tail_term2": tails.term2,
        "discarded_slack": slack,
        "harmonic_residual": residual,
        "tail_truncated": tails.truncated,
    }
    report = _report("reverse_poincare", R, lhs, rhs_main, rhs_error, constants, details)
    logger.info(f"reverse Poincaré on {G.name} R={R}: ratio {report.ratio:.3e}")
    return report


def smoothing_gradient_check(f: BallFunction, R: int) -> InequalityReport:
    """Pointwise |grad Af|_inf <= 2 (|B(2)|/|B(1)|) |grad f|_{B(2),1} with Af the average over B(x, 1)."""
    G = f.group
    if f.radius < R + 2:
        raise UsageError(f"smoothing check needs f on B({R + 2})")
    b1, b2 = G.ball(1), G.ball(2)
    inner = G.ball(R + 1)
    table = _neighbor_table(f.domain, inner.size, [p.coords for p in b1.points])
    averaged = BallFunction(inner, _numeric(f.values)[table].mean(axis=1), f"A{f.label}")
    lhs_x = gradient(averaged, "inf", inner_radius=R).values
    factor = 2 * b2.size / b1.size
    rhs_x = factor * gradient(f, "B1", inner_radius=R, ball_radius=2).values
    slack = 1e-12 * max(1.0, float(np.max(np.abs(rhs_x), initial=0.0)))
    violations = int(np.sum(lhs_x > rhs_x + slack))
    live = rhs_x > 0
    worst = float(np.max(lhs_x[live] / rhs_x[live], initial=0.0))
    if np.any(lhs_x[~live] > slack):
        worst = math.inf
    ball = G.ball(R)
    return InequalityReport(
        "smoothing_gradient", R, _ball_integral(lhs_x, ball), _ball_integral(rhs_x, ball), 0.0,
        worst, violations == 0, {"factor": factor}, {"violations": violations},
    )


class DecayFit(NamedTuple):
    rate: Optional[float]
    power: Optional[float]
    residual: Optional[float]


def decay_rate(radii: Sequence[float], values: Sequence[float]) -> DecayFit:
    """Least-squares fit of log v = a + b log R - gamma R over the positive values."""
    r = np.asarray(radii, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = v > 0
    r, v = r[keep], v[keep]
    if len(r) < 2:
        return DecayFit(None, None, None)
    if len(r) == 2:
        gamma = -(math.log(v[1]) - math.log(v[0])) / (r[1] - r[0])
        return DecayFit(float(gamma), 0.0, 0.0)
    A = np.column_stack([np.ones_like(r), np.log(r), -r])
    coef, *_ = np.linalg.lstsq(A, np.log(v), rcond=None)
    residual = float(np.sqrt(np.mean((A @ coef - np.log(v)) ** 2)))
    return DecayFit(float(coef[2]), float(coef[1]), residual)


def tail_error_sweep(
    f: BallFunction, mu: StepMeasure, radii: Sequence[int], workers: Optional[int] = None
) -> tuple:
    """Tail terms across radii as a DataFrame, with the fitted decay of their sum."""
    mu_n = mu.normalized()
    terms = ordered_map(lambda R: tail_error_terms(f, R, mu_n), list(radii), workers)
    table = pd.DataFrame({
        "R": list(radii),
        "term1": [t.term1 for t in terms],
        "term2": [t.term2 for t in terms],
    })
    table["rhs_error"] = 12 * (table["term1"] + table["term2"])
    return table, decay_rate(table["R"], table["rhs_error"])
