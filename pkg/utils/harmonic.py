# utils/harmonic.py
"""Functions on balls, the Markov operator, gradients, Gram forms and numerical HF_k bases."""
from dataclasses import dataclass, field
from fractions import Fraction
from math import lcm
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence

import numpy as np
import pandas as pd
import scipy.linalg
import sympy

from config import RANK_TOL, logger
from utils.errors import DomainTooSmallError, UsageError
from utils.groups import Ball, GroupElement, GroupPresentation, Heisenberg, IntegerLattice, Sublattice
from utils.measures import StepMeasure

# Largest neighbour table built at once (rows x offsets).
TABLE_CELLS = 4_000_000


@dataclass(frozen=True, eq=False)
class BallFunction:
    """Values of a function on the points of an identity-centered ball."""

    domain: Ball
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        if len(self.values) != self.domain.size:
            raise UsageError(f"{len(self.values)} values for a ball of {self.domain.size} points")

    @classmethod
    def from_coords(cls, domain: Ball, fn: Callable[[np.ndarray], np.ndarray], label: str = "") -> "BallFunction":
        """Vectorized constructor: fn maps the (n, width) coordinate array to n values."""
        values = np.asarray(fn(domain.coords))
        if values.ndim == 0:
            values = np.full(domain.size, values)
        return cls(domain, values, label)

    @classmethod
    def from_elements(cls, domain: Ball, fn: Callable[[GroupElement], object], label: str = "") -> "BallFunction":
        raw = [fn(x) for x in domain.points]
        exact = all(isinstance(v, (int, Fraction)) for v in raw)
        values = np.array(raw, dtype=object) if exact else np.array(raw)
        return cls(domain, values, label)

    @property
    def group(self) -> GroupPresentation:
        return self.domain.group

    @property
    def radius(self) -> int:
        return self.domain.radius

    @property
    def is_exact(self) -> bool:
        return self.values.dtype == object

    def restrict(self, radius: int) -> "BallFunction":
        if radius > self.radius:
            raise DomainTooSmallError(f"cannot restrict radius-{self.radius} function to radius {radius}")
        sub = self.group.ball(radius)
        return BallFunction(sub, self.values[: sub.size], self.label)

    def values_on(self, ball: Ball) -> np.ndarray:
        """Values at the points of another ball of the same group."""
        if ball.is_identity_centered and ball.radius <= self.radius and self.domain.is_identity_centered:
            return self.values[: ball.size]
        idx = self.domain.index_of_elements(ball.points) if ball.coords is None else self.domain.index_of(ball.coords)
        if (idx < 0).any():
            raise DomainTooSmallError(f"ball {ball.summary()} leaves the domain of radius {self.radius}")
        return self.values[idx]

    def _combine(self, other, op) -> "BallFunction":
        if isinstance(other, BallFunction):
            if other.domain is not self.domain:
                raise UsageError("functions live on different domains")
            return BallFunction(self.domain, op(self.values, other.values))
        return BallFunction(self.domain, op(self.values, other))

    def __add__(self, other):
        return self._combine(other, lambda a, b: a + b)

    def __sub__(self, other):
        return self._combine(other, lambda a, b: a - b)

    def __mul__(self, scalar):
        return BallFunction(self.domain, self.values * scalar, self.label)

    __rmul__ = __mul__

    def __neg__(self):
        return BallFunction(self.domain, -self.values, self.label)

    def to_frame(self) -> pd.DataFrame:
        """CSV-ready dump: one column per coordinate plus the value."""
        if self.domain.coords is None:
            coords = pd.DataFrame({"element": [repr(p) for p in self.domain.points]})
        else:
            coords = pd.DataFrame(self.domain.coords, columns=[f"x{i + 1}" for i in range(self.domain.coords.shape[1])])
        coords["value"] = self.values
        return coords


def _neighbor_table(domain: Ball, n_rows: int, offsets: Sequence[tuple], left: bool = False, start: int = 0) -> np.ndarray:
    """Indices of x*s (or s*x when left) for domain points start..n_rows-1."""
    G = domain.group
    if G.vectorized:
        offs = np.array(offsets, dtype=np.int64).reshape(len(offsets), -1)
        base = domain.coords[start:n_rows]
        if left:
            q = G.multiply_coords(offs[None, :, :], base[:, None, :])
        else:
            q = G.multiply_coords(base[:, None, :], offs[None, :, :])
        table = domain.index_of(q)
    else:
        rows = []
        for p in domain.points[start:n_rows]:
            prods = [G._mul(s, p.coords) if left else G._mul(p.coords, s) for s in offsets]
            rows.append([domain._index.get(c, -1) for c in prods])
        table = np.array(rows, dtype=np.int64).reshape(n_rows - start, len(offsets))
    if (table < 0).any():
        raise DomainTooSmallError(f"translates leave the radius-{domain.radius} domain")
    return table


def _row_blocks(n_rows: int, n_cols: int):
    step = max(1, TABLE_CELLS // max(1, n_cols))
    for start in range(0, n_rows, step):
        yield start, min(n_rows, start + step)


def _inner_radius(f: BallFunction, reach: int, inner_radius: Optional[int]) -> int:
    if not f.domain.is_identity_centered:
        raise UsageError("function domains must be centered at the identity")
    available = f.radius - reach
    if available < 0:
        raise DomainTooSmallError(f"domain radius {f.radius} is smaller than reach {reach}")
    if inner_radius is None:
        return available
    if inner_radius > available:
        raise DomainTooSmallError(f"inner radius {inner_radius} exceeds {available} = R - reach")
    return inner_radius


def markov_operator(f: BallFunction, mu: StepMeasure, inner_radius: Optional[int] = None) -> BallFunction:
    """(Pf)(x) = sum_s f(xs) mass(s) on B(R - R_t)."""
    inner = _inner_radius(f, mu.reach, inner_radius)
    target = f.group.ball(inner)
    offsets = [x.coords for x in mu.elements]
    if f.is_exact and mu.is_exact:
        masses = np.array(mu.masses, dtype=object)
        table = _neighbor_table(f.domain, target.size, offsets)
        out = (f.values[table] * masses[None, :]).sum(axis=1)
        return BallFunction(target, out, f"P{f.label}")
    masses = mu.mass_array
    values = f.values.astype(complex) if np.iscomplexobj(f.values) else f.values.astype(float)
    out = np.empty(target.size, dtype=values.dtype)
    for start, stop in _row_blocks(target.size, len(offsets)):
        table = _neighbor_table(f.domain, stop, offsets, start=start)
        out[start:stop] = values[table] @ masses
    return BallFunction(target, out, f"P{f.label}")


def _numeric(values: np.ndarray) -> np.ndarray:
    if values.dtype == object:
        return values.astype(float)
    return values


class Residual(NamedTuple):
    sup: float
    l2: float


def harmonicity_residual(f: BallFunction, mu: StepMeasure, inner_radius: int) -> Residual:
    """Sup and weighted l2 norms of f - Pf over B(inner_radius)."""
    pf = markov_operator(f, mu, inner_radius)
    diff = np.abs(_numeric(f.values[: pf.domain.size] - pf.values))
    w = float(f.domain.point_weight)
    return Residual(float(diff.max(initial=0.0)), float(np.sqrt(np.sum(diff ** 2) * w)))


GRADIENT_MODES = ("inf", "mu", "B1")


def gradient(
    f: BallFunction,
    mode: str,
    inner_radius: Optional[int] = None,
    measure: Optional[StepMeasure] = None,
    ball_radius: Optional[int] = None,
) -> BallFunction:
    """Pointwise |grad f|_inf, |grad f|_mu or |grad f|_{B,1} on B(inner_radius)."""
    G = f.group
    if mode == "inf":
        offsets, reach = [g.coords for g in G.generators], 1
    elif mode == "mu":
        if measure is None:
            raise UsageError("mu-gradient needs a measure")
        offsets, reach = [x.coords for x in measure.elements], measure.reach
    elif mode == "B1":
        if ball_radius is None:
            raise UsageError("B1-gradient needs ball_radius")
        offsets, reach = [p.coords for p in G.ball(ball_radius).points], ball_radius
    else:
        raise UsageError(f"unknown gradient mode {mode!r}; expected one of {GRADIENT_MODES}")
    inner = _inner_radius(f, reach, inner_radius)
    target = G.ball(inner)
    values = _numeric(f.values)
    out = np.empty(target.size)
    for start, stop in _row_blocks(target.size, len(offsets)):
        table = _neighbor_table(f.domain, stop, offsets, start=start)
        diffs = np.abs(values[table] - values[start:stop, None])
        if mode == "inf":
            out[start:stop] = diffs.max(axis=1)
        elif mode == "mu":
            out[start:stop] = np.sqrt((diffs ** 2) @ measure.mass_array)
        else:
            out[start:stop] = diffs.mean(axis=1)
    return BallFunction(target, out, f"|grad {f.label}|_{mode}")


def seminorm_ball(f: BallFunction, K: Ball) -> float:
    """(integral over K of |f|^2 dm)^(1/2) with Haar weight 1/|S| per point."""
    vals = np.abs(_numeric(f.values_on(K)))
    return float(np.sqrt(np.sum(vals ** 2) * float(K.point_weight)))


def polynomial_k_norm(f: BallFunction, k: float) -> float:
    """max |f(x)| / (1 + |x|)^k over the domain (the ball-restricted c_f)."""
    if k < 0:
        raise UsageError("k must be nonnegative")
    lengths = f.domain.lengths.astype(float)
    vals = np.abs(_numeric(f.values))
    return float(np.max(vals / (1.0 + lengths) ** k))


@dataclass
class GramForm:
    radius: int
    basis_size: int
    matrix: np.ndarray
    det: float
    logdet: float
    numerical_rank: int
    rank_tol: float
    singular_values: np.ndarray

    def to_dict(self) -> Dict:
        return {
            "radius": self.radius,
            "basis_size": self.basis_size,
            "det": self.det,
            "logdet": self.logdet,
            "numerical_rank": self.numerical_rank,
            "rank_tol": self.rank_tol,
            "singular_values": [float(s) for s in self.singular_values],
        }


def equilibrated_rank(M: np.ndarray, rank_tol: float) -> tuple:
    """Rank of a PSD matrix after unit-diagonal scaling, with the scaled spectrum."""
    d = np.sqrt(np.clip(np.real(np.diag(M)), 0.0, None))
    live = d > 0
    if not live.any():
        return 0, np.zeros(0)
    scaled = M[np.ix_(live, live)] / np.outer(d[live], d[live])
    sv = scipy.linalg.svdvals(scaled)
    return int(np.sum(sv > rank_tol * sv.max())), sv


def gram_matrix(functions: Sequence[BallFunction], radius: int, rank_tol: float = RANK_TOL) -> GramForm:
    """Q_R(u, v) = sum over B(R) of u(x) conj(v(x)) / |S|."""
    if not functions:
        raise UsageError("gram_matrix needs at least one function")
    G = functions[0].group
    ball = G.ball(radius)
    V = np.column_stack([_numeric(f.values_on(ball)) for f in functions])
    M = (V.T @ V.conj()) * float(ball.point_weight)
    M = (M + M.conj().T) / 2
    rank, _ = equilibrated_rank(M, rank_tol)
    sign, logdet = np.linalg.slogdet(M)
    det = float(np.real(sign) * np.exp(logdet)) if sign != 0 else 0.0
    return GramForm(
        radius=radius,
        basis_size=len(functions),
        matrix=M,
        det=det,
        logdet=float(logdet) if sign != 0 else float("-inf"),
        numerical_rank=rank,
        rank_tol=rank_tol,
        singular_values=scipy.linalg.svdvals(M),
    )


def monomial_exponents(G: GroupPresentation, k: int) -> List[tuple]:
    """Exponents of coordinate monomials of (weighted) degree <= k, lowest degree first."""
    if isinstance(G, (IntegerLattice, Sublattice)):
        width = G.ambient.d if isinstance(G, Sublattice) else G.d
        weights = (1,) * width
    elif isinstance(G, Heisenberg):
        width, weights = 3, (1, 1, 2)
    else:
        raise UsageError(f"{G.name} has no polynomial coordinates")
    out = []

    def extend(prefix, remaining):
        if len(prefix) == width:
            out.append(tuple(prefix))
            return
        w = weights[len(prefix)]
        for e in range(remaining // w + 1):
            extend(prefix + [e], remaining - e * w)

    extend([], k)
    return sorted(out, key=lambda e: (sum(a * w for a, w in zip(e, weights)), tuple(-a for a in e)))


def monomial_values(coords: np.ndarray, exponents: Sequence[tuple]) -> np.ndarray:
    """Array of shape coords.shape[:-1] + (len(exponents),)."""
    E = np.array(exponents, dtype=np.int64)
    return np.prod(coords[..., None, :] ** E, axis=-1)


def monomial_label(e: tuple) -> str:
    names = "xyz" if len(e) <= 3 else [f"x{i + 1}" for i in range(len(e))]
    parts = [n if p == 1 else f"{n}^{p}" for n, p in zip(names, e) if p]
    return "*".join(parts) or "1"


@dataclass
class HarmonicBasis:
    group: GroupPresentation
    k: int
    backend: str
    functions: List[BallFunction]
    dimension: int
    spectrum: List[float] = field(default_factory=list)
    threshold: Optional[float] = None
    exponents: Optional[List[tuple]] = None
    coefficients: Optional[np.ndarray] = None

    def evaluate_on(self, ball: Ball) -> List[BallFunction]:
        """The basis on another ball; polynomial bases extend to any ball with ambient coordinates."""
        if self.coefficients is not None:
            vals = monomial_values(ball.coords.astype(float), self.exponents) @ self.coefficients.T
            return [BallFunction(ball, vals[:, i], f"h{i}") for i in range(self.dimension)]
        return [BallFunction(ball, f.values_on(ball), f.label) for f in self.functions]

    def to_dict(self) -> Dict:
        out = {
            "k": self.k,
            "backend": self.backend,
            "dimension": self.dimension,
            "spectrum": [float(s) for s in self.spectrum],
            "threshold": self.threshold,
        }
        if self.coefficients is not None:
            out["monomials"] = [monomial_label(e) for e in self.exponents]
            out["coefficients"] = [[float(c) for c in row] for row in self.coefficients]
        return out


def harmonic_basis(
    G: GroupPresentation,
    mu: StepMeasure,
    k: int,
    backend: str = "poly_ansatz",
    rank_tol: float = RANK_TOL,
    radius: int = 8,
    r_fit: Optional[int] = None,
    r_eval: Optional[int] = None,
) -> HarmonicBasis:
    """Numerical basis of HF_k(G, mu)."""
    if k < 0:
        raise UsageError("k must be nonnegative")
    if backend == "poly_ansatz":
        return _poly_ansatz(G, mu, k, rank_tol, radius)
    if backend == "variational":
        return _variational(G, mu, k, rank_tol, r_fit, r_eval if r_eval is not None else 16)
    raise UsageError(f"unknown backend {backend!r}")


def _sample_radius(G: GroupPresentation, k: int) -> int:
    return 2 * k + 2 if isinstance(G, Heisenberg) else max(k + 2, 4)


def _poly_ansatz(G, mu, k, rank_tol, radius) -> HarmonicBasis:
    if not isinstance(G, (IntegerLattice, Sublattice, Heisenberg)):
        raise UsageError(f"poly_ansatz needs polynomial coordinates; {G.name} has none")
    exps = monomial_exponents(G, k)
    sample = G.ball(_sample_radius(G, k)).coords
    steps = G.multiply_coords(sample[:, None, :], mu.coords_array[None, :, :])
    moved = monomial_values(steps, exps)          # (points, support, monomials)
    here = monomial_values(sample, exps)          # (points, monomials)

    if mu.is_exact and mu.discarded_mass == 0:
        denom = lcm(*[m.denominator for m in mu.masses])
        weights = np.array([int(m * denom) for m in mu.masses], dtype=np.int64)
        A = np.einsum("psm,s->pm", moved, weights) - denom * here
        null = sympy.Matrix(A.tolist()).nullspace()
        coeffs = np.array([[float(v) for v in vec] for vec in null]).reshape(len(null), len(exps))
        spectrum = scipy.linalg.svdvals(A.astype(float)).tolist()
        threshold = 0.0
    else:
        masses = mu.normalized().mass_array
        A = np.einsum("psm,s->pm", moved.astype(float), masses) - here
        scale = np.sqrt(np.mean(here.astype(float) ** 2, axis=0))
        scale[scale == 0] = 1.0
        _, sv, vt = np.linalg.svd(A / scale, full_matrices=True)
        threshold = rank_tol * (sv.max() if sv.size else 0.0)
        padded = np.concatenate([sv, np.zeros(vt.shape[0] - sv.size)])
        coeffs = vt[padded <= threshold] / scale
        spectrum = sv.tolist()
    if coeffs.shape[0]:
        q, _ = np.linalg.qr(coeffs.T)
        coeffs = q.T
    domain = G.ball(radius)
    vals = monomial_values(domain.coords.astype(float), exps) @ coeffs.T if coeffs.shape[0] else np.zeros((domain.size, 0))
    functions = [BallFunction(domain, vals[:, i], f"h{i}") for i in range(coeffs.shape[0])]
    logger.info(f"poly_ansatz on {G.name}/{mu.label}, k={k}: dimension {len(functions)}")
    return HarmonicBasis(G, k, "poly_ansatz", functions, len(functions), spectrum, threshold, exps, coeffs)


def _variational(G, mu, k, rank_tol, r_fit, r_eval) -> HarmonicBasis:
    mu = mu.normalized()
    r_fit = r_eval - mu.reach if r_fit is None else r_fit
    r_in = r_eval // 2
    if r_fit < r_in or r_fit + mu.reach > r_eval:
        raise DomainTooSmallError(f"variational backend needs r_eval - reach >= r_fit >= r_eval/2 (got {r_fit}, {r_eval})")
    domain = G.ball(r_eval)
    n_fit = domain.count_within(r_fit)
    offsets = [x.coords for x in mu.elements]
    table = _neighbor_table(domain, n_fit, offsets)
    A = np.zeros((n_fit, domain.size))
    A[np.arange(n_fit), np.arange(n_fit)] = 1.0
    np.add.at(A, (np.repeat(np.arange(n_fit), len(offsets)), table.ravel()), -np.tile(mu.mass_array, n_fit))
    N = scipy.linalg.null_space(A, rcond=rank_tol)
    w = float(domain.point_weight)
    inner = np.zeros(domain.size)
    inner[: domain.count_within(r_in)] = w
    q_in = N.T @ (inner[:, None] * N)
    q_out = (N.T @ N) * w
    profile = (1.0 + domain.lengths.astype(float)) ** k
    ref = np.sum(profile ** 2) * w / np.sum(inner * profile ** 2)
    threshold = 2.0 * ref
    if N.shape[1] == 0:
        return HarmonicBasis(G, k, "variational", [], 0, [], threshold)
    nu, vecs = scipy.linalg.eigh(q_in, q_out)
    with np.errstate(divide="ignore"):
        growth = np.where(nu > 0, 1.0 / np.maximum(nu, 1e-300), np.inf)
    keep = growth <= threshold
    vals = N @ vecs[:, keep]
    functions = [BallFunction(domain, vals[:, i], f"v{i}") for i in range(vals.shape[1])]
    logger.info(f"variational on {G.name}/{mu.label}, k={k}, R={r_eval}: "
                f"{N.shape[1]} harmonic directions, {len(functions)} within growth")
    return HarmonicBasis(G, k, "variational", functions, len(functions), sorted(growth.tolist()), threshold)
