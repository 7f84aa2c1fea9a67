# utils/polynomials.py
"""Left derivatives, polynomial degree tests and the weight decomposition of the translation action."""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy.linalg

from config import DEGREE_TOL, UNIPOTENT_TOL, logger
from utils.errors import DomainTooSmallError, UsageError
from utils.groups import GroupElement, GroupPresentation
from utils.harmonic import (
    BallFunction,
    GramForm,
    _neighbor_table,
    _numeric,
    monomial_exponents,
    monomial_label,
    monomial_values,
)


@dataclass(frozen=True)
class DerivativeWord:
    elements: tuple

    def __post_init__(self):
        if not self.elements:
            raise UsageError("a derivative word needs at least one element")


def _left_shift(f: BallFunction, u: GroupElement) -> BallFunction:
    """x -> f(ux) on B(R - |u|)."""
    G = f.group
    G._check(u)
    radius = f.radius - G.word_length(u)
    if radius < 0:
        raise DomainTooSmallError(f"|{u!r}| exceeds the domain radius {f.radius}")
    target = G.ball(radius)
    table = _neighbor_table(f.domain, target.size, [u.coords], left=True)
    return BallFunction(target, f.values[table[:, 0]], f.label)


def left_derivative(f: BallFunction, u: GroupElement) -> BallFunction:
    """(d_u f)(x) = f(ux) - f(x)."""
    shifted = _left_shift(f, u)
    return BallFunction(shifted.domain, shifted.values - f.values[: shifted.domain.size], f"d_{u.coords}{f.label}")


def derivative(f: BallFunction, word: DerivativeWord) -> BallFunction:
    """d_{u1} ... d_{um} f, innermost derivative applied first."""
    out = f
    for u in reversed(word.elements):
        out = left_derivative(out, u)
    return out


def left_translate(f: BallFunction, g: GroupElement) -> BallFunction:
    """(g.f)(x) = f(g^-1 x)."""
    return _left_shift(f, f.group.invert(g))


@dataclass
class DegreeTest:
    is_degree_at_most_k: bool
    max_violation: float
    k: int
    word_cap: int
    words_tested: int
    eval_radius: int

    def to_dict(self) -> Dict:
        return {
            "is_degree_at_most_k": self.is_degree_at_most_k,
            "max_violation": self.max_violation,
            "k": self.k,
            "word_cap": self.word_cap,
            "words_tested": self.words_tested,
            "eval_radius": self.eval_radius,
        }


def derivative_words(G: GroupPresentation, word_cap: int) -> List[GroupElement]:
    """Non-identity elements of word length <= word_cap."""
    return [p for p in G.ball(word_cap).points if p != G.identity()]


def polynomial_degree_test(
    f: BallFunction, k: int, word_cap: int = 2, eval_radius: Optional[int] = None
) -> DegreeTest:
    """True iff every (k+1)-fold left derivative along short words vanishes within DEGREE_TOL."""
    eval_radius = f.radius if eval_radius is None else eval_radius
    if eval_radius > f.radius or eval_radius < (k + 1) * word_cap:
        raise DomainTooSmallError(
            f"eval radius {eval_radius} must lie in [(k+1)L, R] = [{(k + 1) * word_cap}, {f.radius}]"
        )
    words = derivative_words(f.group, word_cap)
    level = [f.restrict(eval_radius)]
    tested = 0
    for depth in range(1, k + 2):
        radius = eval_radius - depth * word_cap
        nxt: Dict[bytes, BallFunction] = {}
        for g in level:
            for u in words:
                d = left_derivative(g, u).restrict(radius)
                tested += 1
                vals = _numeric(d.values)
                if depth < k + 1 and np.max(np.abs(vals), initial=0.0) <= DEGREE_TOL:
                    continue
                # identical functions have identical descendants
                nxt.setdefault((np.round(vals, 9) + 0.0).tobytes(), d)
        level = list(nxt.values())
    violation = max((float(np.max(np.abs(_numeric(d.values)), initial=0.0)) for d in level), default=0.0)
    return DegreeTest(violation <= DEGREE_TOL, violation, k, word_cap, tested, eval_radius)


def poly_space_basis(G: GroupPresentation, k: int, radius: int = 8) -> List[BallFunction]:
    """Coordinate monomials of (weighted) degree <= k on B(radius)."""
    exps = monomial_exponents(G, k)
    domain = G.ball(radius)
    vals = monomial_values(domain.coords, exps)
    return [BallFunction(domain, vals[:, i].astype(float), monomial_label(e)) for i, e in enumerate(exps)]


@dataclass
class ActionMatrix:
    element: GroupElement
    matrix: np.ndarray
    residual: float

    def to_dict(self) -> Dict:
        return {
            "element": list(self.element.coords),
            "matrix": [[float(v) for v in row] for row in np.real(self.matrix)],
            "residual": self.residual,
        }


@dataclass
class WeightDecomposition:
    actions: List[ActionMatrix]
    eigenvalues: Dict[tuple, List[complex]]
    clusters: Dict[tuple, List[Dict]]
    chain_dims: List[int]
    unipotent: bool
    max_eigen_deviation: float
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "actions": [a.to_dict() for a in self.actions],
            "spectra": {
                str(list(g)): [{"re": float(np.real(v)), "im": float(np.imag(v))} for v in vals]
                for g, vals in self.eigenvalues.items()
            },
            "clusters": {str(list(g)): c for g, c in self.clusters.items()},
            "chain_dims": self.chain_dims,
            "unipotent": self.unipotent,
            "max_eigen_deviation": self.max_eigen_deviation,
            "notes": self.notes,
        }


def _clusters(values: np.ndarray, tol: float = UNIPOTENT_TOL) -> List[Dict]:
    out: List[Dict] = []
    for v in sorted(values, key=lambda z: (np.real(z), np.imag(z))):
        for c in out:
            if abs(c["value"] - v) <= tol:
                c["multiplicity"] += 1
                break
        else:
            out.append({"value": complex(v), "multiplicity": 1})
    return [{"re": float(c["value"].real), "im": float(c["value"].imag), "multiplicity": c["multiplicity"]}
            for c in out]


def _kernel(A: np.ndarray, tol: float) -> np.ndarray:
    """Orthonormal basis of the right kernel, keeping singular values <= tol (absolute)."""
    _, s, vh = scipy.linalg.svd(A)
    rank = int(np.sum(s > tol))
    return vh[rank:].conj().T


def weight_decomposition(
    basis: Sequence[BallFunction],
    generators: Sequence[GroupElement],
    Q: GramForm,
    kernel_tol: float = 1e-7,
) -> WeightDecomposition:
    """Matrices of f -> g.f in the basis, their joint generalized 1-eigenspace flag and spectra."""
    m = len(basis)
    if Q.basis_size != m or Q.numerical_rank < m:
        raise UsageError(f"basis of size {m} is rank deficient (rank {Q.numerical_rank}) at radius {Q.radius}")
    G = basis[0].group
    ball = G.ball(Q.radius)
    V = np.column_stack([_numeric(f.values_on(ball)) for f in basis])
    actions = []
    for g in generators:
        if g == G.identity():
            continue
        T = np.column_stack([_numeric(left_translate(f, g).values_on(ball)) for f in basis])
        A, *_ = np.linalg.lstsq(V, T, rcond=None)
        residual = float(np.linalg.norm(V @ A - T) / max(np.linalg.norm(T), 1e-300))
        actions.append(ActionMatrix(g, A, residual))

    # Q-orthonormal coordinates: c' = L^T c with Q = L L^T
    L = np.linalg.cholesky(np.real(Q.matrix))
    nilpotents = [L.T @ a.matrix @ np.linalg.inv(L.T) - np.eye(m) for a in actions]

    # absolute cutoff: once the flag is nearly everything, proj @ N is rounding noise
    scale = max([float(np.linalg.norm(n, 2)) for n in nilpotents] + [1.0])
    chain_dims: List[int] = []
    flag = np.zeros((m, 0))
    while True:
        proj = np.eye(m) - flag @ flag.T
        stacked = np.vstack([proj @ n for n in nilpotents]) if nilpotents else np.zeros((1, m))
        kernel = _kernel(stacked, kernel_tol * scale)
        new = kernel.shape[1] - flag.shape[1]
        if new <= 0:
            break
        left, _, _ = scipy.linalg.svd(proj @ kernel, full_matrices=False)
        flag = np.hstack([flag, left[:, :new]])
        chain_dims.append(flag.shape[1])
        if flag.shape[1] == m:
            break

    blocks = [chain_dims[0]] + [b - a for a, b in zip(chain_dims, chain_dims[1:])] if chain_dims else []
    U = flag
    notes = []
    if U.shape[1] < m:
        rest = scipy.linalg.null_space(U.T) if U.shape[1] else np.eye(m)
        U = np.hstack([U, rest])
        blocks.append(m - flag.shape[1])
        notes.append(f"translation action has a non-unipotent part of dimension {m - flag.shape[1]}")

    eigenvalues: Dict[tuple, List[complex]] = {}
    clusters: Dict[tuple, List[Dict]] = {}
    deviation = 0.0
    for a, n in zip(actions, nilpotents):
        adapted = U.T @ (n + np.eye(m)) @ U
        vals, start = [], 0
        for size in blocks:
            vals.extend(np.linalg.eigvals(adapted[start:start + size, start:start + size]).tolist())
            start += size
        eigenvalues[a.element.coords] = vals
        clusters[a.element.coords] = _clusters(np.array(vals))
        deviation = max(deviation, max(abs(v - 1) for v in vals))
    unipotent = bool(flag.shape[1] == m and deviation <= UNIPOTENT_TOL)
    logger.info(f"weight decomposition on {G.name}: chain dims {chain_dims}, unipotent={unipotent}")
    return WeightDecomposition(actions, eigenvalues, clusters, chain_dims, unipotent, float(deviation), notes)
