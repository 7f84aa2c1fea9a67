# utils/measures.py
"""Step measures on groups: construction, convolution, courteousness and hitting measures."""
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from config import (
    ADAPTED_CAP,
    HITTING_ESCAPE_TOL,
    HITTING_TRUNC,
    MC_STEP_CAP,
    MC_SYMMETRY_Z,
    SUPPORT_BUDGET,
    SYMMETRY_TOL,
    WORD_LENGTH_CAP,
    logger,
)
from utils.errors import PreconditionError, ResourceError, TruncationTooSmallError, UsageError
from utils.groups import GroupElement, GroupPresentation, Sublattice, coords_json, parse_subgroup
from utils.workers import chunked, ordered_map

Mass = Union[Fraction, float]


@dataclass(frozen=True)
class Truncation:
    radius: int
    discarded_mass: float
    tail_rate: Optional[float] = None

    def to_dict(self) -> Dict:
        return {"radius": self.radius, "discarded_mass": self.discarded_mass, "tail_rate": self.tail_rate}


@dataclass(frozen=True, eq=False)
class StepMeasure:
    """Finitely supported probability measure, possibly the truncation of an infinite one."""

    group: GroupPresentation
    support: Tuple[Tuple[GroupElement, Mass], ...]
    truncation: Optional[Truncation] = None
    label: str = ""

    @classmethod
    def from_masses(
        cls,
        G: GroupPresentation,
        masses: Mapping[GroupElement, Mass],
        truncation: Optional[Truncation] = None,
        label: str = "",
    ) -> "StepMeasure":
        """Validate masses and store them in canonical (word length, coords) order."""
        if not masses:
            raise UsageError("a step measure needs a nonempty support")
        for x, m in masses.items():
            G._check(x)
            if not m > 0:
                raise UsageError(f"mass at {x!r} must be positive, got {m}")
        total = sum(masses.values())
        discarded = truncation.discarded_mass if truncation else 0
        if isinstance(total, Fraction) and discarded == 0:
            if total != 1:
                raise UsageError(f"masses sum to {total}, expected 1")
        elif abs(float(total) + float(discarded) - 1.0) > 1e-12:
            raise UsageError(f"masses sum to {float(total)} with {discarded} discarded, expected 1")
        ordered = sorted(masses.items(), key=lambda item: (G.word_length(item[0]), item[0].coords))
        return cls(group=G, support=tuple(ordered), truncation=truncation, label=label)

    @property
    def elements(self) -> List[GroupElement]:
        return [x for x, _ in self.support]

    @property
    def masses(self) -> List[Mass]:
        return [m for _, m in self.support]

    @property
    def is_exact(self) -> bool:
        return all(isinstance(m, Fraction) for m in self.masses)

    @property
    def discarded_mass(self) -> float:
        return self.truncation.discarded_mass if self.truncation else 0.0

    @cached_property
    def mass_array(self) -> np.ndarray:
        return np.array([float(m) for m in self.masses])

    @cached_property
    def coords_array(self) -> Optional[np.ndarray]:
        if not self.group.vectorized:
            return None
        return np.array([x.coords for x in self.elements], dtype=np.int64).reshape(len(self.support), -1)

    @cached_property
    def reach(self) -> int:
        """Largest word length in the support (the truncation radius when truncated)."""
        longest = max(self.group.word_length(x) for x in self.elements)
        if self.truncation is not None:
            longest = max(longest, self.truncation.radius)
        return longest

    @cached_property
    def _lookup(self) -> Dict[tuple, Mass]:
        return {x.coords: m for x, m in self.support}

    def mass_of(self, x: GroupElement) -> Mass:
        return self._lookup.get(x.coords, 0)

    def total_mass(self) -> Mass:
        return sum(self.masses)

    def normalized(self) -> "StepMeasure":
        """Condition on the stored support (drops the discarded tail)."""
        if self.truncation is None or self.discarded_mass == 0:
            return self
        total = float(self.total_mass())
        masses = {x: float(m) / total for x, m in self.support}
        return StepMeasure(group=self.group, support=tuple(masses.items()), truncation=None,
                           label=f"{self.label}|normalized")

    def to_dict(self) -> Dict:
        atoms = []
        for x, m in self.support:
            entry = {"coords": coords_json(x.coords), "mass": float(m)}
            if isinstance(m, Fraction):
                entry["exact"] = str(m)
            atoms.append(entry)
        return {
            "group": self.group.name,
            "label": self.label,
            "support_size": len(self.support),
            "reach": self.reach,
            "atoms": atoms,
            "truncation": self.truncation.to_dict() if self.truncation else None,
        }


def uniform_on_generators(G: GroupPresentation) -> StepMeasure:
    """Mass 1/|S| on each generator, identity included."""
    w = G.point_weight
    return StepMeasure.from_masses(G, {g: w for g in G.generators}, label="uniform")


def simple_random_walk(G: GroupPresentation) -> StepMeasure:
    """Uniform measure on S without the identity."""
    gens = [g for g in G.generators if g != G.identity()]
    return StepMeasure.from_masses(G, {g: Fraction(1, len(gens)) for g in gens}, label="srw")


def geometric_tail_measure(G: GroupPresentation, decay: float, mass_tol: float) -> StepMeasure:
    """mass(x) proportional to exp(-decay |x|), truncated where the tail drops below mass_tol."""
    if decay <= 0 or not 0 < mass_tol < 1:
        raise UsageError(f"geometric measure needs decay > 0 and 0 < mass_tol < 1, got {decay}, {mass_tol}")
    cap = WORD_LENGTH_CAP if G.radius_cap is None else min(WORD_LENGTH_CAP, G.radius_cap)
    terms: List[float] = [1.0]
    prev_size = 1
    tail_bound = None
    for r in range(1, cap + 1):
        size = G.ball_sizes(r)[-1]
        terms.append((size - prev_size) * math.exp(-decay * r))
        prev_size = size
        q = terms[-1] / terms[-2]
        if q < 1:
            bound = terms[-1] * q / (1 - q)
            if bound <= mass_tol * 1e-3 * sum(terms):
                tail_bound = bound
                break
    if tail_bound is None:
        logger.error(f"geometric measure on {G.name} with decay {decay} did not converge by radius {cap}")
        raise ResourceError(f"mass_tol {mass_tol} unreachable within radius cap {cap}", largest_radius=cap)
    Z = sum(terms) + tail_bound
    # tails[R] = mass beyond radius R, as a fraction of Z
    tails = []
    acc = tail_bound
    for r in range(len(terms) - 1, -1, -1):
        tails.append(acc)
        acc += terms[r]
    tails.reverse()
    radius = next(R for R in range(len(terms)) if tails[R] / Z <= mass_tol)
    ball = G.ball(radius)
    weights = np.exp(-decay * ball.lengths.astype(float)) / Z
    masses = {x: float(w) for x, w in zip(ball.points, weights)}
    discarded = 1.0 - float(np.sum(weights))
    measure = StepMeasure.from_masses(
        G, masses, truncation=Truncation(radius, discarded, decay), label=f"geometric(c={decay})"
    )
    logger.info(f"geometric measure on {G.name}: R_t={radius}, discarded={discarded:.3e}")
    return measure


def _convolve(mu: StepMeasure, nu: StepMeasure) -> Dict[GroupElement, Mass]:
    G = mu.group
    if len(mu.support) * len(nu.support) > SUPPORT_BUDGET * 50:
        raise ResourceError(f"convolution of {len(mu.support)} x {len(nu.support)} atoms exceeds budget")
    if G.vectorized and not (mu.is_exact and nu.is_exact):
        prod = G.multiply_coords(mu.coords_array[:, None, :], nu.coords_array[None, :, :])
        prod = prod.reshape(-1, prod.shape[-1])
        weights = np.outer(mu.mass_array, nu.mass_array).ravel()
        rows, inverse = np.unique(prod, axis=0, return_inverse=True)
        sums = np.bincount(inverse.ravel(), weights=weights, minlength=len(rows))
        return {G.element(tuple(r)): float(s) for r, s in zip(rows, sums) if s > 0}
    out: Dict[GroupElement, Mass] = {}
    for x, a in mu.support:
        for y, b in nu.support:
            z = G.multiply(x, y)
            out[z] = out.get(z, 0) + a * b
    return out


def convolution_power(mu: StepMeasure, n: int) -> StepMeasure:
    """Exact n-fold convolution mu * ... * mu."""
    if n < 1:
        raise UsageError("convolution power needs n >= 1")
    if n == 1:
        return mu
    result = mu
    for _ in range(n - 1):
        masses = _convolve(result, mu)
        if len(masses) > SUPPORT_BUDGET:
            raise ResourceError(f"convolution support {len(masses)} exceeds budget {SUPPORT_BUDGET}")
        truncation = None
        if mu.truncation is not None:
            kept = float(sum(masses.values()))
            truncation = Truncation(result.reach + mu.reach, 1.0 - kept, mu.truncation.tail_rate)
        result = StepMeasure.from_masses(mu.group, masses, truncation=truncation)
    return StepMeasure(group=result.group, support=result.support, truncation=result.truncation,
                       label=f"{mu.label}^*{n}")


@dataclass
class TailFit:
    rate: Optional[float]
    residual: Optional[float]
    certified_rate: Optional[float]
    compact: bool

    def to_dict(self) -> Dict:
        return {"rate": self.rate, "residual": self.residual,
                "certified_rate": self.certified_rate, "compact": self.compact}


@dataclass
class CourteousReport:
    symmetric: bool
    asymmetry: float
    adapted_radius: Optional[int]
    tail_fit: TailFit
    second_moment: float
    density_floors: Dict[int, float]
    symmetry_tol: float = SYMMETRY_TOL
    continuous_density: str = "vacuous for discrete groups"

    @property
    def density_floor(self) -> Optional[Tuple[int, float]]:
        for n in sorted(self.density_floors):
            if self.density_floors[n] > 0:
                return n, self.density_floors[n]
        return None

    @property
    def courteous(self) -> bool:
        return self.symmetric and self.adapted_radius is not None and (
            self.tail_fit.compact or (self.tail_fit.certified_rate or 0) > 0
        )

    def to_dict(self) -> Dict:
        floor = self.density_floor
        return {
            "symmetric": self.symmetric,
            "asymmetry": self.asymmetry,
            "symmetry_tol": self.symmetry_tol,
            "adapted_radius": self.adapted_radius,
            "tail_fit": self.tail_fit.to_dict(),
            "second_moment": self.second_moment,
            "density_floors": {str(n): c for n, c in self.density_floors.items()},
            "density_floor": {"n": floor[0], "c": floor[1]} if floor else None,
            "continuous_density": self.continuous_density,
            "courteous": self.courteous,
        }


def _asymmetry(mu: StepMeasure) -> Mass:
    G = mu.group
    return sum(abs(m - mu.mass_of(G.invert(x))) for x, m in mu.support)


def adapted_radius(G: GroupPresentation, mu: StepMeasure, cap: int = ADAPTED_CAP) -> Optional[int]:
    """Smallest n with S contained in supp(mu) U supp(mu)^2 U ... U supp(mu)^n.

    This is the union of the powers up to n, not supp(mu)^n alone; the two agree when mu(e) > 0.
    """
    targets = {g.coords for g in G.generators}
    supp = [x.coords for x in mu.elements]
    seen = set(supp)
    current = set(supp)
    for n in range(1, cap + 1):
        if targets <= seen:
            return n
        if n == cap:
            break
        current = {G._mul(a, b) for a in current for b in supp}
        if len(current) > SUPPORT_BUDGET:
            logger.warning(f"adapted-radius search stopped at n={n}: support budget")
            return None
        seen |= current
    return None


def tail_fit(mu: StepMeasure) -> TailFit:
    """Fit Pr[|x| > t] <= exp(-c t) on the stored support plus the discarded mass."""
    G = mu.group
    lengths = np.array([G.word_length(x) for x in mu.elements])
    masses = mu.mass_array
    ts, tails = [], []
    for t in range(0, mu.reach):
        tail = float(masses[lengths > t].sum()) + mu.discarded_mass
        if tail > 0:
            ts.append(t)
            tails.append(tail)
    compact = mu.discarded_mass == 0
    if len(ts) < 2:
        return TailFit(None, None, None, compact)
    logs = np.log(tails)
    slope, intercept = np.polyfit(ts, logs, 1)
    fitted = intercept + slope * np.asarray(ts)
    residual = float(np.sqrt(np.mean((logs - fitted) ** 2)))
    certified = [-math.log(v) / t for t, v in zip(ts, tails) if t >= 1]
    return TailFit(float(-slope), residual, float(min(certified)) if certified else None, compact)


def _sampled_symmetry(mu: StepMeasure, standard_errors: Dict[tuple, float]) -> Tuple[bool, float]:
    """Each |mu(x) - mu(x^-1)| within MC_SYMMETRY_Z combined standard errors; returns the widest band."""
    G = mu.group
    ok, widest = True, SYMMETRY_TOL
    for x, m in mu.support:
        inv = G.invert(x)
        se = math.hypot(standard_errors.get(x.coords, 0.0), standard_errors.get(inv.coords, 0.0))
        band = MC_SYMMETRY_Z * se + SYMMETRY_TOL
        widest = max(widest, band)
        ok = ok and abs(float(m) - float(mu.mass_of(inv))) <= band
    return ok, widest


def check_courteous(
    G: GroupPresentation, mu: StepMeasure, standard_errors: Optional[Dict[tuple, float]] = None
) -> CourteousReport:
    """Symmetry, adaptedness, tail rate, second moment and density floors on S and S^2.

    Pass the per-atom standard errors of a sampled measure to test symmetry against
    sampling noise instead of SYMMETRY_TOL.
    """
    asym = _asymmetry(mu)
    symmetry_tol = SYMMETRY_TOL
    if standard_errors is not None:
        symmetric, symmetry_tol = _sampled_symmetry(mu, standard_errors)
    else:
        symmetric = asym == 0 if mu.is_exact else float(asym) < SYMMETRY_TOL
    lengths = np.array([G.word_length(x) for x in mu.elements], dtype=float)
    sigma2 = float(np.sum(mu.mass_array * lengths ** 2))
    floors = {}
    scale = len(G.generators)
    for n in (1, 2):
        ball = G.ball(n)
        floors[n] = float(min(mu.mass_of(x) for x in ball.points) * scale)
    report = CourteousReport(
        symmetric=bool(symmetric),
        asymmetry=float(asym),
        adapted_radius=adapted_radius(G, mu),
        tail_fit=tail_fit(mu),
        second_moment=sigma2,
        density_floors=floors,
        symmetry_tol=symmetry_tol,
    )
    logger.info(f"courteous check on {G.name}/{mu.label}: symmetric={report.symmetric}, "
                f"adapted={report.adapted_radius}, sigma2={sigma2:.4f}")
    return report


def change_of_variables_identity(
    G: GroupPresentation,
    mu: StepMeasure,
    F: Union[Callable[[GroupElement, GroupElement], Mass], Sequence[Sequence[Mass]]],
    radius: int = 4,
) -> Tuple[Mass, Mass]:
    """Both iterated sums: sum_x sum_y F(x,y) mu(x^-1 y) and sum_y sum_x F(x,y) mu(y^-1 x)."""
    pts = G.ball(radius).points
    if callable(F):
        table = [[F(x, y) for y in pts] for x in pts]
    else:
        table = F
    lhs = 0
    for i, x in enumerate(pts):
        xi = G.invert(x)
        for j, y in enumerate(pts):
            lhs += table[i][j] * mu.mass_of(G.multiply(xi, y))
    rhs = 0
    for j, y in enumerate(pts):
        yi = G.invert(y)
        for i, x in enumerate(pts):
            rhs += table[i][j] * mu.mass_of(G.multiply(yi, x))
    return lhs, rhs


@dataclass
class HittingResult:
    measure: StepMeasure
    mode: str
    escaped_mass: float
    tau_distribution: Dict[int, float]
    mean_tau: float
    n_samples: Optional[int] = None
    censored: int = 0
    standard_errors: Dict[tuple, float] = field(default_factory=dict)
    # exact mode: the radius of the ambient ball the chain was solved on
    ambient_trunc_radius: Optional[int] = None

    def to_dict(self) -> Dict:
        tau = {str(t): p for t, p in sorted(self.tau_distribution.items())}
        return {
            "mode": self.mode,
            "measure": self.measure.to_dict(),
            "escaped_mass": self.escaped_mass,
            "tau_distribution": tau,
            "mean_tau": self.mean_tau,
            "n_samples": self.n_samples,
            "censored": self.censored,
            "ambient_trunc_radius": self.ambient_trunc_radius,
            "standard_errors": [
                {"coords": list(c), "se": se} for c, se in sorted(self.standard_errors.items())
            ],
        }


TAU_HORIZON = 10_000
ATOM_FLOOR = 1e-15


def _resolve_subgroup(G: GroupPresentation, H: Union[str, Sublattice]) -> Sublattice:
    if isinstance(H, str):
        H = parse_subgroup(G, H)
    if not isinstance(H, Sublattice) or H.ambient.name != G.name:
        raise UsageError(f"{getattr(H, 'name', H)} is not a finite-index subgroup of {G.name}")
    return H


def hitting_measure(
    G: GroupPresentation,
    H: Union[str, Sublattice],
    mu: StepMeasure,
    mode: str = "exact",
    trunc_radius: int = HITTING_TRUNC,
    n_samples: int = 100_000,
    seed: Optional[int] = None,
    workers: Optional[int] = None,
    step_cap: int = MC_STEP_CAP,
) -> HittingResult:
    """Law of X_tau for the mu-walk from the identity, tau = first t >= 1 with X_t in H."""
    H = _resolve_subgroup(G, H)
    if adapted_radius(G, mu) is None:
        raise PreconditionError(f"{mu.label} is not adapted on {G.name}")
    if mode == "exact":
        return _hitting_exact(G, H, mu, trunc_radius)
    if mode == "monte_carlo":
        if seed is None:
            raise UsageError("monte_carlo hitting measure needs a seed")
        return _hitting_monte_carlo(G, H, mu, n_samples, seed, workers, step_cap)
    raise UsageError(f"unknown hitting mode {mode!r}")


def _hitting_exact(G: GroupPresentation, H: Sublattice, mu: StepMeasure, trunc_radius: int) -> HittingResult:
    ball = G.ball(trunc_radius)
    n = ball.size
    offsets, masses = mu.coords_array, mu.mass_array
    nbr = ball.index_of(G.multiply_coords(ball.coords[:, None, :], offsets[None, :, :]))
    in_h = H.contains_coords(ball.coords)

    first = np.zeros(n)
    ok = nbr[0] >= 0
    np.add.at(first, nbr[0][ok], masses[ok])
    absorbed = np.where(in_h, first, 0.0)

    transient = np.flatnonzero(~in_h)
    h_idx = np.flatnonzero(in_h)
    rows = np.repeat(np.arange(n), len(masses))
    cols = nbr.ravel()
    data = np.tile(masses, n)
    keep = cols >= 0
    P = sparse.csr_matrix((data[keep], (rows[keep], cols[keep])), shape=(n, n))
    Q = P[transient][:, transient].tocsc()
    A = P[transient][:, h_idx].tocsc()
    start = first[transient]

    tau = {}
    if first[in_h].sum() > 0:
        tau[1] = float(first[in_h].sum())
    if start.sum() > 0:
        lhs = (sparse.identity(len(transient), format="csc") - Q).T.tocsc()
        y = np.atleast_1d(spsolve(lhs, start))
        absorbed[h_idx] += A.T @ y
        current = start
        for t in range(2, TAU_HORIZON + 1):
            step = float((A.T @ current).sum())
            if step > 0:
                tau[t] = step
            current = Q.T @ current
            if current.sum() < 1e-13:
                break

    escaped = float(1.0 - absorbed.sum())
    if escaped > HITTING_ESCAPE_TOL:
        logger.error(f"hitting measure escaped mass {escaped:.3e} at truncation radius {trunc_radius}")
        raise TruncationTooSmallError(
            f"escaped mass {escaped:.3e} exceeds {HITTING_ESCAPE_TOL} at trunc_radius {trunc_radius}", escaped
        )
    atoms = {H.element(ball.points[i].coords): float(absorbed[i]) for i in h_idx if absorbed[i] > ATOM_FLOOR}
    kept = float(sum(atoms.values()))
    # truncation radius in the word metric of H, over the H-points of the ambient ball
    h_reach = int(H.lengths_of(ball.coords[h_idx], 10 ** 9).max()) if len(h_idx) else 0
    truncation = Truncation(h_reach, max(0.0, 1.0 - kept)) if kept < 1.0 else None
    if truncation is None:
        total = kept
        atoms = {x: m / total for x, m in atoms.items()}
    measure = StepMeasure.from_masses(H, atoms, truncation=truncation, label=f"hitting({mu.label})")
    mean_tau = sum(t * p for t, p in tau.items()) / max(sum(tau.values()), 1e-300)
    logger.info(f"exact hitting measure on {H.name}: {len(atoms)} atoms, escaped={escaped:.2e}")
    return HittingResult(measure, "exact", max(0.0, escaped), tau, mean_tau, ambient_trunc_radius=trunc_radius)


WALK_BATCH = 16


def _run_walks(G, H, offsets, cdf, seed, indices, step_cap):
    out = []
    last = len(offsets) - 1
    for i in indices:
        rng = np.random.default_rng([seed, i])
        pos = G.identity_coords()
        t = 0
        hit = None
        while t < step_cap and hit is None:
            draws = np.searchsorted(cdf, rng.random(WALK_BATCH), side="right")
            for j in draws:
                pos = G._mul(pos, offsets[min(int(j), last)])
                t += 1
                if H.contains(pos):
                    hit = pos
                    break
                if t >= step_cap:
                    break
        out.append((hit, t))
    return out


def _hitting_monte_carlo(G, H, mu, n_samples, seed, workers, step_cap) -> HittingResult:
    offsets = [x.coords for x in mu.elements]
    probs = mu.mass_array / mu.mass_array.sum()
    cdf = np.cumsum(probs)
    chunks = chunked(list(range(n_samples)), max(1, (workers or 1) * 4))
    results = ordered_map(lambda idx: _run_walks(G, H, offsets, cdf, seed, idx, step_cap), chunks, workers)
    counts: Dict[tuple, int] = {}
    taus: Dict[int, int] = {}
    censored = 0
    for chunk in results:
        for hit, t in chunk:
            if hit is None:
                censored += 1
                continue
            counts[hit] = counts.get(hit, 0) + 1
            taus[t] = taus.get(t, 0) + 1
    if censored:
        logger.warning(f"{censored} of {n_samples} walks censored at {step_cap} steps")
    atoms = {H.element(c): k / n_samples for c, k in counts.items()}
    ses = {c: math.sqrt((k / n_samples) * (1 - k / n_samples) / n_samples) for c, k in counts.items()}
    h_reach = max((H.word_length(x) for x in atoms), default=0)
    truncation = Truncation(h_reach, censored / n_samples) if censored else None
    measure = StepMeasure.from_masses(H, atoms, truncation=truncation, label=f"hitting_mc({mu.label})")
    tau = {t: k / n_samples for t, k in taus.items()}
    finished = n_samples - censored
    mean_tau = sum(t * k for t, k in taus.items()) / finished if finished else float("nan")
    logger.info(f"monte carlo hitting measure on {H.name}: {n_samples} walks, {len(atoms)} atoms")
    return HittingResult(measure, "monte_carlo", censored / n_samples, tau, mean_tau,
                         n_samples=n_samples, censored=censored, standard_errors=ses)
