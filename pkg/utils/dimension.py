# utils/dimension.py
"""Dimension estimates for HF_k, determinant-doubling scans and the explicit dimension bound."""
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
import scipy.linalg

from config import RANK_TOL, logger
from utils.errors import PreconditionError, R0NotReachedError, UsageError
from utils.groups import (
    DoublingProfile,
    GroupPresentation,
    Sublattice,
    doubling_constant,
    dyadic_exponent,
    enumerate_ball,
)
from utils.harmonic import (
    BallFunction,
    HarmonicBasis,
    _numeric,
    equilibrated_rank,
    gradient,
    gram_matrix,
    harmonic_basis,
    harmonicity_residual,
)
from utils.inequalities import CoverStructure, separated_cover, tail_error_terms
from utils.measures import StepMeasure, check_courteous
from utils.workers import ordered_map

STATUS_OK = "ok"
STATUS_INCONCLUSIVE = "inconclusive"
DEFAULT_SCHEDULE = (8, 12, 16)

Basis = Union[HarmonicBasis, Sequence[BallFunction]]


def _functions_on(basis: Basis, radius: int) -> List[BallFunction]:
    """Basis functions defined on at least B(radius)."""
    if isinstance(basis, HarmonicBasis):
        if basis.coefficients is not None:
            return basis.evaluate_on(basis.group.ball(radius))
        basis = basis.functions
    if not basis:
        raise UsageError("empty basis")
    short = min(f.radius for f in basis)
    if short < radius:
        raise UsageError(f"basis functions live on B({short}) but B({radius}) is needed")
    return [f.restrict(radius) for f in basis]


def _basis_group(basis: Basis) -> GroupPresentation:
    if isinstance(basis, HarmonicBasis):
        return basis.group
    if not basis:
        raise UsageError("empty basis")
    return basis[0].group


@dataclass
class RadiusRank:
    radius: int
    dimension: int
    gram_rank: int
    margin: Optional[float]

    def to_dict(self) -> Dict:
        return {"radius": self.radius, "dimension": self.dimension,
                "gram_rank": self.gram_rank, "margin": self.margin}


@dataclass
class DimensionEstimate:
    status: str
    dimension: Optional[int]
    k: int
    backend: str
    rank_tol: float
    per_radius: List[RadiusRank]
    doubling: Optional[DoublingProfile]
    reason: str = ""
    basis: Optional[HarmonicBasis] = field(default=None, repr=False)

    def to_dict(self) -> Dict:
        return {
            "status": self.status,
            "dimension": self.dimension,
            "k": self.k,
            "backend": self.backend,
            "rank_tol": self.rank_tol,
            "per_radius": [r.to_dict() for r in self.per_radius],
            "doubling": self.doubling.to_dict() if self.doubling else None,
            "reason": self.reason,
            "basis": self.basis.to_dict() if self.basis is not None else None,
        }


def _gap(spectrum: np.ndarray, rank: int) -> Optional[float]:
    """Largest discarded over smallest retained singular value."""
    if rank == 0 or rank >= len(spectrum):
        return None
    return float(spectrum[rank] / spectrum[rank - 1])


def _doubling_for(G: GroupPresentation, schedule: Sequence[int]) -> DoublingProfile:
    r_max = max(schedule)
    if G.radius_cap is not None:
        r_max = min(r_max, G.radius_cap)
    return doubling_constant(G, max(2, r_max))


def estimate_hfk_dim(
    G: GroupPresentation,
    mu: StepMeasure,
    k: int,
    schedule: Sequence[int] = DEFAULT_SCHEDULE,
    rank_tol: float = RANK_TOL,
    backend: str = "poly_ansatz",
) -> DimensionEstimate:
    """Numerical dim HF_k(G, mu), certified only when the rank is stable over the last two radii."""
    schedule = list(schedule)
    if not schedule:
        raise UsageError("radius schedule is empty")
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise UsageError(f"radius schedule {schedule} is not increasing")
    profile = _doubling_for(G, schedule)
    if not profile.uniform:
        logger.warning(f"{G.name}: doubling ratios keep growing, no dimension certified")
        return DimensionEstimate(STATUS_INCONCLUSIVE, None, k, backend, rank_tol, [], profile,
                                 reason="non-uniform doubling")
    report = check_courteous(G, mu)
    if not report.courteous:
        raise PreconditionError(f"{mu.label} is not courteous on {G.name}")

    rows: List[RadiusRank] = []
    basis = None
    for R in schedule:
        if backend == "variational":
            basis = harmonic_basis(G, mu, k, backend, rank_tol, r_eval=R)
        else:
            basis = harmonic_basis(G, mu, k, backend, rank_tol, radius=R)
        if basis.dimension == 0:
            rows.append(RadiusRank(R, 0, 0, None))
            continue
        Q = gram_matrix(basis.functions, min(R, basis.functions[0].radius), rank_tol)
        rank, spectrum = equilibrated_rank(Q.matrix, rank_tol)
        rows.append(RadiusRank(R, basis.dimension, rank, _gap(spectrum, rank)))

    last, prev = rows[-1], rows[-2] if len(rows) > 1 else None
    stable = prev is not None and last.gram_rank == prev.gram_rank and last.dimension == prev.dimension
    stable = stable and last.gram_rank == last.dimension
    if stable and last.margin is not None:
        stable = last.margin < rank_tol * 1e-2
    if not stable:
        logger.warning(f"HF_{k} rank on {G.name} did not stabilize: {[r.gram_rank for r in rows]}")
        return DimensionEstimate(STATUS_INCONCLUSIVE, None, k, backend, rank_tol, rows, profile,
                                 reason="rank not stable over the last two radii", basis=basis)
    logger.info(f"dim HF_{k}({G.name}, {mu.label}) = {last.gram_rank}")
    return DimensionEstimate(STATUS_OK, last.gram_rank, k, backend, rank_tol, rows, profile, basis=basis)


@dataclass
class DoublingScan:
    radii: List[int]
    dets: List[float]
    dets_6r: List[float]
    log_ratios: List[float]
    hadamard: List[bool]
    delta: float
    d_v: float
    hits: List[int]
    r0: int

    @property
    def ratios(self) -> List[float]:
        return [math.exp(v) for v in self.log_ratios]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "R": self.radii,
            "det_R": self.dets,
            "det_6R": self.dets_6r,
            "log_ratio": self.log_ratios,
            "hadamard_ok": self.hadamard,
            "hit": [R in self.hits for R in self.radii],
        })

    def to_dict(self) -> Dict:
        return {
            "radii": self.radii,
            "dets": self.dets,
            "dets_6r": self.dets_6r,
            "log_ratios": self.log_ratios,
            "hadamard": self.hadamard,
            "delta": self.delta,
            "d_v": self.d_v,
            "hits": self.hits,
            "r0": self.r0,
        }


def default_delta(d: float, k: int) -> float:
    return 6.0 ** (2 * (d + 2 * k)) + 1


def _gram_pair(functions: List[BallFunction], R: int, rank_tol: float):
    return gram_matrix(functions, R, rank_tol), gram_matrix(functions, 6 * R, rank_tol)


def det_doubling_scan(
    basis: Basis,
    radii: Sequence[int],
    d: float,
    k: int,
    delta: Optional[float] = None,
    rank_tol: float = RANK_TOL,
    workers: Optional[int] = None,
) -> DoublingScan:
    """det Q_R, det Q_6R and the Hadamard bound at each radius; hits where the ratio is at most delta^(m/2)."""
    radii = sorted(radii)
    if not radii:
        raise UsageError("det_doubling_scan needs radii")
    functions = _functions_on(basis, 6 * radii[-1])
    m = len(functions)
    delta = default_delta(d, k) if delta is None else delta
    d_v = m / 2
    pairs = ordered_map(lambda R: _gram_pair(functions, R, rank_tol), radii, workers)
    if pairs[0][0].numerical_rank < m:
        raise R0NotReachedError(f"Q_R is singular at R={radii[0]} (rank {pairs[0][0].numerical_rank} < {m})")
    dets, dets6, logs, hadamard, hits = [], [], [], [], []
    for R, (q, q6) in zip(radii, pairs):
        dets.append(q.det)
        dets6.append(q6.det)
        log_ratio = q6.logdet - q.logdet
        logs.append(float(log_ratio))
        diag = np.log(np.real(np.diag(q.matrix))).sum()
        hadamard.append(bool(q.logdet <= diag + 1e-9))
        if log_ratio <= d_v * math.log(delta):
            hits.append(R)
    scan = DoublingScan(list(radii), dets, dets6, logs, hadamard, float(delta), d_v, hits, radii[0])
    logger.info(f"determinant scan over {len(radii)} radii: {len(hits)} hits, delta={delta:.3e}")
    return scan


def doubling_subspace(basis: Basis, R: int, delta: float, rank_tol: float = RANK_TOL) -> tuple:
    """dim of the span of Q_R-orthonormal, Q_6R-orthogonal directions with Q_6R(u, u) <= delta."""
    functions = _functions_on(basis, 6 * R)
    q, q6 = _gram_pair(functions, R, rank_tol)
    if q.numerical_rank < len(functions):
        raise R0NotReachedError(f"Q_R is singular at R={R}")
    vals = scipy.linalg.eigh(q6.matrix, q.matrix, eigvals_only=True)
    return int(np.sum(vals <= delta)), [float(v) for v in vals]


def norm_equivalence_ratio(basis: Basis, k: float, radii: Sequence[int], domain_radius: Optional[int] = None) -> Dict[int, float]:
    """M(R) = sup over the span of c_v^2 / Q_R(v, v), c_v the ball-restricted polynomial norm."""
    radii = sorted(radii)
    domain_radius = radii[-1] if domain_radius is None else domain_radius
    functions = _functions_on(basis, max(domain_radius, radii[-1]))
    dom = _basis_group(basis).ball(domain_radius)
    g = np.column_stack([_numeric(f.values_on(dom)) for f in functions])
    g = g / ((1.0 + dom.lengths.astype(float)) ** k)[:, None]
    out = {}
    for R in radii:
        Q = gram_matrix(functions, R)
        try:
            factor = scipy.linalg.cho_factor(np.real(Q.matrix))
        except np.linalg.LinAlgError as e:
            raise R0NotReachedError(f"Q_R is not positive definite at R={R}") from e
        solved = scipy.linalg.cho_solve(factor, g.T)
        out[R] = float(np.max(np.sum(g.T * solved, axis=0)))
    return out


@dataclass
class KernelReport:
    radius: int
    epsilon: float
    kernel_dim: int
    injective: bool
    cover: CoverStructure
    constants: Dict[str, float]
    directions: List[Dict] = field(default_factory=list)
    dimension_bound: int = 0
    cover_bound: int = 0

    def to_dict(self) -> Dict:
        return {
            "radius": self.radius,
            "epsilon": self.epsilon,
            "kernel_dim": self.kernel_dim,
            "injective": self.injective,
            "J": self.cover.J,
            "beta": self.cover.beta,
            "constants": self.constants,
            "directions": self.directions,
            "dimension_bound": self.dimension_bound,
            "cover_bound": self.cover_bound,
        }


def _ball_sum(values: np.ndarray, domain, ball) -> float:
    idx = domain.index_of(ball.coords)
    return float(np.sum(values[idx]) * float(domain.point_weight))


def kernel_injectivity_check(
    basis: Basis,
    G: GroupPresentation,
    mu: StepMeasure,
    k: float,
    epsilon: float,
    R: int,
    rank_tol: float = RANK_TOL,
) -> KernelReport:
    """Averages over the cover balls, the kernel of that map and the Poincaré chain for each kernel direction."""
    if not 0 < Fraction(epsilon) < Fraction(1, 3):
        raise UsageError("kernel check needs 0 < epsilon < 1/3")
    if not G.vectorized:
        raise UsageError(f"kernel check needs coordinate balls; {G.name} has none")
    mu = mu.normalized()
    courteous = check_courteous(G, mu)
    c = courteous.density_floors.get(2, 0.0)
    if c <= 0:
        raise UsageError(f"{mu.label} has no density floor on S^2; use convolution_power of a lazy measure")
    cover = separated_cover(G, R, epsilon)
    D = cover.D
    sigma2 = courteous.second_moment
    r_eps = math.floor(epsilon * R)
    r3 = math.floor(3 * epsilon * R)
    functions = _functions_on(basis, 6 * R + mu.reach)
    domain = functions[0].domain
    V = np.column_stack([_numeric(f.values) for f in functions])
    small = [enumerate_ball(G, x, r_eps) for x in cover.centers]
    phi = np.array([V[domain.index_of(b.coords)].mean(axis=0) for b in small])
    kernel = scipy.linalg.null_space(phi, rcond=rank_tol)

    C = 64 * sigma2 / c
    growth_eps = (G.ball(2 * r_eps).size / G.ball(r_eps).size) ** 2 if r_eps > 0 else 1.0
    constants = {"c": c, "D": D, "sigma2": sigma2, "C": C, "growth_eps": growth_eps}
    directions = []
    for col in range(kernel.shape[1]):
        coef = kernel[:, col]
        u = BallFunction(domain, V @ coef, f"ker{col}")
        q_r = _ball_sum(np.abs(u.values) ** 2, domain, G.ball(R))
        q_6r = _ball_sum(np.abs(u.values) ** 2, domain, G.ball(6 * R))
        local = sum(_ball_sum(np.abs(u.values) ** 2, domain, b) for b in small)
        grad = gradient(u, "mu", inner_radius=6 * R, measure=mu).values ** 2
        gdom = G.ball(6 * R)
        per_ball = sum(_ball_sum(grad, gdom, enumerate_ball(G, x, r3)) for x in cover.centers)
        poincare = growth_eps * 32 * (epsilon * R) ** 2 / c * per_ball
        inner_energy = float(np.sum(grad[: G.ball(2 * R).size]) * float(gdom.point_weight))
        multiplicity = D ** 2 * 32 * (epsilon * R) ** 2 / c * D ** 3 * inner_energy
        tails = tail_error_terms(u, 2 * R, mu)
        rhs_main = C * D ** 5 * epsilon ** 2 * q_6r
        rhs_error = D ** 5 * 32 * (epsilon * R) ** 2 / c * 12 * (tails.term1 + tails.term2)
        directions.append({
            "q_R": q_r,
            "local_sum": local,
            "poincare": poincare,
            "multiplicity": multiplicity,
            "q_6R": q_6r,
            "rhs_main": rhs_main,
            "rhs_error": rhs_error,
            "chain_holds": bool(q_r <= local * (1 + 1e-9) and local <= poincare * (1 + 1e-9)
                                and q_r <= rhs_main + rhs_error),
            "contraction": (rhs_main + rhs_error) / q_r if q_r > 0 else 0.0,
        })
    report = KernelReport(
        radius=R,
        epsilon=float(epsilon),
        kernel_dim=int(kernel.shape[1]),
        injective=kernel.shape[1] == 0,
        cover=cover,
        constants=constants,
        directions=directions,
        dimension_bound=kleiner_bound(D, epsilon),
        cover_bound=2 * cover.J,
    )
    logger.info(f"kernel check on {G.name} R={R} eps={epsilon}: kernel dim {report.kernel_dim}, J={cover.J}")
    return report


def kleiner_bound(D: float, epsilon: float) -> int:
    """floor(2 D^e) with e the smallest integer such that 2^e epsilon >= 2."""
    if D < 1:
        raise UsageError("doubling constant must be at least 1")
    if not 0 < Fraction(epsilon) < Fraction(1, 3):
        raise UsageError("kleiner_bound needs 0 < epsilon < 1/3")
    return math.floor(2 * Fraction(D) ** dyadic_exponent(epsilon))


def admissible_epsilon(C: float, D: float, delta: float, max_halvings: int = 4096) -> float:
    """Largest 2^-n < 1/3 with C D^5 eps^2 < 1/(2 delta)."""
    target = Fraction(1) / (2 * Fraction(delta))
    lead = Fraction(C) * Fraction(D) ** 5
    for n in range(2, max_halvings):
        eps = Fraction(1, 2 ** n)
        if lead * eps ** 2 < target:
            return float(eps)
    raise UsageError(f"no dyadic epsilon above 2^-{max_halvings} satisfies the contraction condition")


@dataclass
class RestrictionReport:
    subgroup: str
    radius: int
    residuals: List[float]
    max_residual: float
    gram_rank: int
    harmonic: bool

    def to_dict(self) -> Dict:
        return {
            "subgroup": self.subgroup,
            "radius": self.radius,
            "residuals": self.residuals,
            "max_residual": self.max_residual,
            "gram_rank": self.gram_rank,
            "harmonic": self.harmonic,
        }


def restriction_check(
    basis: Basis, H: Sublattice, mu_h: StepMeasure, radius: int, tol: float = 1e-6, rank_tol: float = RANK_TOL
) -> RestrictionReport:
    """Restrict a harmonic basis of Z^d to H and test harmonicity for the hitting measure on H."""
    if not isinstance(H, Sublattice):
        raise UsageError("restriction needs a finite-index sublattice")
    mu_h = mu_h.normalized()
    ball = H.ball(radius)
    if isinstance(basis, HarmonicBasis) and basis.coefficients is not None:
        restricted = basis.evaluate_on(ball)
    else:
        functions = basis.functions if isinstance(basis, HarmonicBasis) else list(basis)
        restricted = []
        for f in functions:
            idx = f.domain.index_of(ball.coords)
            if (idx < 0).any():
                raise UsageError(f"basis domain B({f.radius}) does not contain the H-ball of radius {radius}")
            restricted.append(BallFunction(ball, f.values[idx], f"{f.label}|H"))
    inner = radius - mu_h.reach
    if inner < 0:
        raise UsageError(f"H-ball radius {radius} is smaller than the hitting measure reach {mu_h.reach}")
    residuals = [harmonicity_residual(f, mu_h, inner).sup for f in restricted]
    rank = gram_matrix(restricted, radius, rank_tol).numerical_rank
    worst = max(residuals, default=0.0)
    logger.info(f"restriction to {H.name}: residual {worst:.2e}, rank {rank}")
    return RestrictionReport(H.name, radius, residuals, worst, rank, worst < tol)
