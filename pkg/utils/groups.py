# utils/groups.py
"""Finitely generated groups as word-metric spaces.

Every presentation keeps a cache of BFS shells around the identity; balls around
other centers are left translates of the identity ball.
"""
import json
import re
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import sympy

from config import BALL_POINT_BUDGET, LAMPLIGHTER_CAP, WORD_LENGTH_CAP, logger
from utils.errors import CapExceededError, ResourceError, UsageError


@dataclass(frozen=True, order=True)
class GroupElement:
    coords: tuple
    group: str

    def __repr__(self) -> str:
        return f"{self.group}{self.coords}"


class _CoordIndex:
    """Sorted-key lookup from integer coordinate rows to positions."""

    def __init__(self, coords: np.ndarray):
        self.lo = coords.min(axis=0)
        self.hi = coords.max(axis=0)
        self.shape = tuple(int(v) for v in (self.hi - self.lo + 1))
        keys = np.ravel_multi_index(tuple((coords - self.lo).T), self.shape)
        self.order = np.argsort(keys, kind="stable")
        self.sorted_keys = keys[self.order]

    def lookup(self, query: np.ndarray) -> np.ndarray:
        flat = query.reshape(-1, query.shape[-1])
        inside = np.all((flat >= self.lo) & (flat <= self.hi), axis=1)
        result = np.full(flat.shape[0], -1, dtype=np.int64)
        if inside.any():
            keys = np.ravel_multi_index(tuple((flat[inside] - self.lo).T), self.shape)
            pos = np.searchsorted(self.sorted_keys, keys)
            pos = np.minimum(pos, len(self.sorted_keys) - 1)
            hit = self.sorted_keys[pos] == keys
            found = np.where(hit, self.order[pos], -1)
            result[inside] = found
        return result.reshape(query.shape[:-1])


@dataclass(frozen=True, eq=False)
class Ball:
    """Closed word-metric ball in BFS-then-lexicographic order."""

    group: "GroupPresentation"
    center: GroupElement
    radius: int
    points: Tuple[GroupElement, ...]
    lengths: np.ndarray
    point_weight: Fraction
    coords: Optional[np.ndarray] = None
    _index: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.coords is not None:
            object.__setattr__(self, "_index", _CoordIndex(self.coords))
        else:
            object.__setattr__(self, "_index", {p.coords: i for i, p in enumerate(self.points)})

    @property
    def size(self) -> int:
        return len(self.points)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def haar_volume(self) -> float:
        return float(self.size * self.point_weight)

    @property
    def is_identity_centered(self) -> bool:
        return self.center == self.group.identity()

    def count_within(self, r: int) -> int:
        """Number of points at distance <= r from the center."""
        return int(np.searchsorted(self.lengths, r, side="right"))

    def index_of(self, coords: np.ndarray) -> np.ndarray:
        """Positions of coordinate rows in this ball, -1 where absent."""
        if self.coords is None:
            raise UsageError(f"{self.group.name} balls have no coordinate arrays")
        return self._index.lookup(np.asarray(coords, dtype=np.int64))

    def index_of_elements(self, elements: Sequence[GroupElement]) -> np.ndarray:
        if self.coords is not None:
            arr = np.array([e.coords for e in elements], dtype=np.int64).reshape(len(elements), -1)
            return self.index_of(arr)
        return np.array([self._index.get(e.coords, -1) for e in elements], dtype=np.int64)

    def contains(self, element: GroupElement) -> bool:
        return int(self.index_of_elements([element])[0]) >= 0

    def summary(self) -> Dict:
        return {
            "group": self.group.name,
            "center": list(coords_json(self.center.coords)),
            "radius": self.radius,
            "count": self.size,
            "haar_volume": self.haar_volume,
            "point_weight": str(self.point_weight),
        }


def coords_json(coords):
    return [list(c) if isinstance(c, tuple) else c for c in coords]


class GroupPresentation(ABC):
    """A group with a finite symmetric generating set S containing the identity."""

    name: str = ""
    dimension_hint: Optional[int] = None
    vectorized: bool = True
    radius_cap: Optional[int] = None

    def __init__(self):
        self._lock = threading.Lock()
        ident = self.identity_coords()
        self._shells: List[List[tuple]] = [[ident]]
        self._dist: Dict[tuple, int] = {ident: 0}
        self._balls: Dict[int, Ball] = {}
        gens = sorted(set(self.generator_coords()))
        for g in gens:
            if self._inv(g) not in gens:
                raise UsageError(f"{self.name}: generating set not symmetric at {g}")
        if ident not in gens:
            raise UsageError(f"{self.name}: generating set must contain the identity")
        self._gen_coords = gens
        _REGISTRY.setdefault(self.name, self)

    # group law
    @abstractmethod
    def identity_coords(self) -> tuple: ...

    @abstractmethod
    def generator_coords(self) -> List[tuple]: ...

    @abstractmethod
    def _mul(self, a: tuple, b: tuple) -> tuple: ...

    @abstractmethod
    def _inv(self, a: tuple) -> tuple: ...

    def canonical(self, coords) -> tuple:
        return tuple(int(c) for c in coords)

    def element(self, coords) -> GroupElement:
        return GroupElement(self.canonical(coords), self.name)

    def identity(self) -> GroupElement:
        return GroupElement(self.identity_coords(), self.name)

    @property
    def generators(self) -> Tuple[GroupElement, ...]:
        ordered = sorted(self._gen_coords, key=lambda c: (self._dist.get(c, 1), c))
        return tuple(GroupElement(c, self.name) for c in ordered)

    @property
    def point_weight(self) -> Fraction:
        return Fraction(1, len(self._gen_coords))

    def _check(self, *elements: GroupElement) -> None:
        for e in elements:
            if e.group != self.name:
                raise UsageError(f"element {e!r} does not belong to {self.name}")

    def multiply(self, g: GroupElement, h: GroupElement) -> GroupElement:
        self._check(g, h)
        return GroupElement(self._mul(g.coords, h.coords), self.name)

    def invert(self, g: GroupElement) -> GroupElement:
        self._check(g)
        return GroupElement(self._inv(g.coords), self.name)

    # vectorized arithmetic on integer coordinate rows
    def multiply_coords(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        raise UsageError(f"{self.name} has no vectorized multiplication")

    def invert_coords(self, a: np.ndarray) -> np.ndarray:
        raise UsageError(f"{self.name} has no vectorized inversion")

    # metric
    def _grow_to(self, radius: int) -> None:
        with self._lock:
            total = sum(len(s) for s in self._shells)
            while len(self._shells) <= radius:
                done = len(self._shells) - 1
                if self.radius_cap is not None and done >= self.radius_cap:
                    raise ResourceError(
                        f"{self.name}: radius {radius} beyond cap {self.radius_cap}", largest_radius=done
                    )
                fresh = set()
                for p in self._shells[-1]:
                    for s in self._gen_coords:
                        q = self._mul(p, s)
                        if q not in self._dist:
                            fresh.add(q)
                if total + len(fresh) > BALL_POINT_BUDGET:
                    logger.error(f"Ball budget exceeded for {self.name} at radius {done + 1}")
                    raise ResourceError(
                        f"{self.name}: ball of radius {done + 1} exceeds {BALL_POINT_BUDGET} points",
                        largest_radius=done,
                    )
                shell = sorted(fresh)
                for q in shell:
                    self._dist[q] = done + 1
                self._shells.append(shell)
                total += len(shell)

    def word_length(self, x: GroupElement) -> int:
        """BFS distance from the identity."""
        self._check(x)
        cap = WORD_LENGTH_CAP if self.radius_cap is None else min(WORD_LENGTH_CAP, self.radius_cap)
        r = len(self._shells) - 1
        while x.coords not in self._dist:
            if r >= cap:
                raise CapExceededError(f"{x!r} not reached within radius {cap}", largest_radius=r)
            r += 1
            self._grow_to(r)
        return self._dist[x.coords]

    def lengths_of(self, coords: np.ndarray, bound: int) -> np.ndarray:
        """Word lengths of coordinate rows; rows longer than bound get bound + 1."""
        ball = self.ball(bound)
        idx = ball.index_of(coords)
        out = np.full(idx.shape, bound + 1, dtype=np.int64)
        mask = idx >= 0
        out[mask] = ball.lengths[idx[mask]]
        return out

    def ball_sizes(self, r_max: int) -> List[int]:
        """|B(1)|, ..., |B(r_max)| in counting measure."""
        self._grow_to(r_max)
        sizes, total = [], 1
        for r in range(1, r_max + 1):
            total += len(self._shells[r])
            sizes.append(total)
        return sizes

    def ball(self, radius: int) -> Ball:
        """Identity-centered ball, cached per radius."""
        if radius < 0:
            raise UsageError("ball radius must be nonnegative")
        cached = self._balls.get(radius)
        if cached is not None:
            return cached
        self._grow_to(radius)
        pts, lens = [], []
        for r in range(radius + 1):
            pts.extend(self._shells[r])
            lens.extend([r] * len(self._shells[r]))
        ball = self._make_ball(self.identity(), radius, pts, lens)
        self._balls[radius] = ball
        logger.debug(f"{self.name}: B({radius}) has {ball.size} points")
        return ball

    def _make_ball(self, center: GroupElement, radius: int, pts: List[tuple], lens: List[int]) -> Ball:
        coords = np.array(pts, dtype=np.int64).reshape(len(pts), -1) if self.vectorized else None
        return Ball(
            group=self,
            center=center,
            radius=radius,
            points=tuple(GroupElement(p, self.name) for p in pts),
            lengths=np.array(lens, dtype=np.int64),
            point_weight=self.point_weight,
            coords=coords,
        )


def enumerate_ball(G: GroupPresentation, center: GroupElement, radius: int) -> Ball:
    """Ball B(center, R) = center * B(R) in BFS-then-lexicographic order."""
    G._check(center)
    base = G.ball(radius)
    if center == G.identity():
        return base
    shells: Dict[int, List[tuple]] = {}
    for p, r in zip(base.points, base.lengths):
        shells.setdefault(int(r), []).append(G._mul(center.coords, p.coords))
    pts, lens = [], []
    for r in range(radius + 1):
        shell = sorted(shells.get(r, []))
        pts.extend(shell)
        lens.extend([r] * len(shell))
    return G._make_ball(center, radius, pts, lens)


def word_length(G: GroupPresentation, x: GroupElement) -> int:
    return G.word_length(x)


def multiply(g: GroupElement, h: GroupElement) -> GroupElement:
    return resolve(g).multiply(g, h)


def invert(g: GroupElement) -> GroupElement:
    return resolve(g).invert(g)


def pairwise_distances(G: GroupPresentation, xs: np.ndarray, ys: np.ndarray, bound: int) -> np.ndarray:
    """d(x, y) = |x^-1 y| for coordinate rows; distances above bound read bound + 1."""
    z = G.multiply_coords(G.invert_coords(xs)[:, None, :], ys[None, :, :])
    return G.lengths_of(z.reshape(-1, xs.shape[1]), bound).reshape(len(xs), len(ys))


class IntegerLattice(GroupPresentation):
    """Z^d with S = {0, +-e_i}."""

    def __init__(self, d: int):
        if d < 1:
            raise UsageError("lattice dimension must be positive")
        self.d = d
        self.name = f"Z^{d}"
        self.dimension_hint = d
        super().__init__()

    def identity_coords(self):
        return (0,) * self.d

    def generator_coords(self):
        gens = [self.identity_coords()]
        for i in range(self.d):
            for sign in (1, -1):
                e = [0] * self.d
                e[i] = sign
                gens.append(tuple(e))
        return gens

    def _mul(self, a, b):
        return tuple(x + y for x, y in zip(a, b))

    def _inv(self, a):
        return tuple(-x for x in a)

    def canonical(self, coords):
        coords = tuple(int(c) for c in coords)
        if len(coords) != self.d:
            raise UsageError(f"{self.name} expects {self.d} coordinates, got {coords}")
        return coords

    def multiply_coords(self, a, b):
        return a + b

    def invert_coords(self, a):
        return -a

    def word_length(self, x):
        self._check(x)
        return int(sum(abs(c) for c in x.coords))

    def lengths_of(self, coords, bound):
        return np.minimum(np.abs(coords).sum(axis=-1), bound + 1)


class Heisenberg(GroupPresentation):
    """H_3(Z) in upper-triangular coordinates (x, y, z); S = {a^+-1, b^+-1, 1}."""

    name = "heisenberg"
    dimension_hint = 4

    def identity_coords(self):
        return (0, 0, 0)

    def generator_coords(self):
        return [(0, 0, 0), (1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0)]

    def _mul(self, a, b):
        return (a[0] + b[0], a[1] + b[1], a[2] + b[2] + a[0] * b[1])

    def _inv(self, a):
        return (-a[0], -a[1], -a[2] + a[0] * a[1])

    def canonical(self, coords):
        coords = tuple(int(c) for c in coords)
        if len(coords) != 3:
            raise UsageError(f"heisenberg expects 3 coordinates, got {coords}")
        return coords

    def multiply_coords(self, a, b):
        a, b = np.broadcast_arrays(a, b)
        return np.stack([a[..., 0] + b[..., 0], a[..., 1] + b[..., 1],
                         a[..., 2] + b[..., 2] + a[..., 0] * b[..., 1]], axis=-1)

    def invert_coords(self, a):
        return np.stack([-a[..., 0], -a[..., 1], -a[..., 2] + a[..., 0] * a[..., 1]], axis=-1)


class Lamplighter(GroupPresentation):
    """Z_2 wr Z as (sorted lit lamps, position); S = {1, a, t, t^-1}."""

    name = "lamplighter"
    dimension_hint = None
    vectorized = False

    def __init__(self, radius_cap: int = LAMPLIGHTER_CAP):
        self.radius_cap = radius_cap
        super().__init__()

    def identity_coords(self):
        return ((), 0)

    def generator_coords(self):
        return [((), 0), ((0,), 0), ((), 1), ((), -1)]

    def _mul(self, a, b):
        lamps = set(a[0]).symmetric_difference(l + a[1] for l in b[0])
        return (tuple(sorted(lamps)), a[1] + b[1])

    def _inv(self, a):
        return (tuple(sorted(l - a[1] for l in a[0])), -a[1])

    def canonical(self, coords):
        lamps, pos = coords
        return (tuple(sorted(set(int(l) for l in lamps))), int(pos))

    def lengths_of(self, coords, bound):
        raise UsageError("lamplighter lengths need element lookups")


class Sublattice(GroupPresentation):
    """Finite-index subgroup of Z^d spanned by basis rows; S = {0, +-rows}."""

    def __init__(self, ambient: IntegerLattice, basis: Sequence[Sequence[int]]):
        if not isinstance(ambient, IntegerLattice):
            raise UsageError("sublattices are only supported inside Z^d")
        rows = [tuple(int(v) for v in row) for row in basis]
        if len(rows) != ambient.d or any(len(r) != ambient.d for r in rows):
            raise UsageError(f"sublattice of {ambient.name} needs {ambient.d} basis rows of length {ambient.d}")
        matrix = sympy.Matrix(rows)
        det = int(matrix.det())
        if det == 0:
            raise UsageError("sublattice basis is singular (infinite index)")
        self.ambient = ambient
        self.basis = rows
        self.index = abs(det)
        self._det = det
        self._adj = np.array(matrix.adjugate().tolist(), dtype=np.int64)
        self.name = f"sublattice:{ambient.name}:basis={json.dumps([list(r) for r in rows], separators=(',', ':'))}"
        self.dimension_hint = ambient.d
        super().__init__()
        self.coset_count = self._count_cosets()
        if self.coset_count != self.index:
            raise UsageError(f"{self.name}: coset enumeration found {self.coset_count}, det gives {self.index}")

    def identity_coords(self):
        return (0,) * self.ambient.d

    def generator_coords(self):
        gens = [self.identity_coords()]
        for row in self.basis:
            gens.append(row)
            gens.append(tuple(-v for v in row))
        return gens

    def _mul(self, a, b):
        return tuple(x + y for x, y in zip(a, b))

    def _inv(self, a):
        return tuple(-x for x in a)

    def multiply_coords(self, a, b):
        return a + b

    def invert_coords(self, a):
        return -a

    def _scaled_coefficients(self, coords: np.ndarray) -> np.ndarray:
        # x = c B  <=>  c * det = x adj(B)
        return np.asarray(coords, dtype=np.int64) @ self._adj

    def contains_coords(self, coords: np.ndarray) -> np.ndarray:
        return np.all(self._scaled_coefficients(coords) % self.index == 0, axis=-1)

    def contains(self, coords: tuple) -> bool:
        d = self.ambient.d
        return all(sum(coords[i] * int(self._adj[i, j]) for i in range(d)) % self.index == 0 for j in range(d))

    def canonical(self, coords):
        coords = tuple(int(c) for c in coords)
        if len(coords) != self.ambient.d or not self.contains(coords):
            raise UsageError(f"{coords} is not in {self.name}")
        return coords

    def lift(self, g: GroupElement) -> GroupElement:
        """View an ambient element as an element of this sublattice."""
        self.ambient._check(g)
        return self.element(g.coords)

    def _count_cosets(self) -> int:
        reach = sum(abs(v) for row in self.basis for v in row)
        pts = self.ambient.ball(reach).coords
        keys = self._scaled_coefficients(pts) % self.index
        return int(len(np.unique(keys, axis=0)))

    def word_length(self, x):
        self._check(x)
        return int(self.lengths_of(np.array([x.coords]), 10 ** 9)[0])

    def lengths_of(self, coords, bound):
        scaled = self._scaled_coefficients(coords)
        member = np.all(scaled % self._det == 0, axis=-1)
        lengths = np.abs(scaled // self._det).sum(axis=-1)
        return np.where(member, np.minimum(lengths, bound + 1), bound + 1)


@dataclass
class DoublingProfile:
    radii: List[int]
    growth: List[int]
    ratios: Dict[int, float]
    D: float
    argmax_radius: int
    growth_degree: float
    uniform: bool

    def to_dict(self) -> Dict:
        return {
            "radii": self.radii,
            "growth": self.growth,
            "ratios": {str(k): v for k, v in self.ratios.items()},
            "D": self.D,
            "argmax_radius": self.argmax_radius,
            "growth_degree": self.growth_degree,
            "uniform": self.uniform,
        }


NONUNIFORM_STEP = 1.15


def growth_degree_fit(radii: Sequence[int], growth: Sequence[int]) -> float:
    """Slope of log|B(R)| against log R over the upper half of the range."""
    half = max(1, len(radii) // 2)
    r = np.log(np.asarray(radii[-half - 1:], dtype=float))
    v = np.log(np.asarray(growth[-half - 1:], dtype=float))
    if len(r) < 2:
        return float("nan")
    slope, _ = np.polyfit(r, v, 1)
    return float(slope)


def doubling_constant(G: GroupPresentation, r_max: int) -> DoublingProfile:
    """Growth sequence and D = max over 2R <= r_max of |B(2R)|/|B(R)|."""
    if r_max < 2:
        raise UsageError("doubling_constant needs r_max >= 2")
    growth = G.ball_sizes(r_max)
    ratios = {R: growth[2 * R - 1] / growth[R - 1] for R in range(1, r_max // 2 + 1)}
    argmax = max(ratios, key=lambda R: (ratios[R], -R))
    seq = [ratios[R] for R in sorted(ratios)]
    uniform = True
    if len(seq) >= 3:
        uniform = seq[-1] / seq[-2] <= NONUNIFORM_STEP
    radii = list(range(1, r_max + 1))
    profile = DoublingProfile(
        radii=radii,
        growth=growth,
        ratios=ratios,
        D=max(1.0, ratios[argmax]),
        argmax_radius=argmax,
        growth_degree=growth_degree_fit(radii, growth),
        uniform=uniform,
    )
    logger.info(f"{G.name}: D={profile.D:.4f} over R<={r_max}, uniform={uniform}")
    return profile


_REGISTRY: Dict[str, GroupPresentation] = {}


def resolve(element: GroupElement) -> GroupPresentation:
    try:
        return _REGISTRY[element.group]
    except KeyError as e:
        raise UsageError(f"unknown presentation {element.group}") from e


def _register(G: GroupPresentation) -> GroupPresentation:
    _REGISTRY.setdefault(G.name, G)
    return _REGISTRY[G.name]


_LATTICE = re.compile(r"^Z(?:\^(\d+))?(?::d=(\d+))?$")


@lru_cache(maxsize=64)
def parse_group(spec: str) -> GroupPresentation:
    """Group from a name string such as "Z^d:d=2", "heisenberg" or "sublattice:Z^2:basis=[[2,0],[0,1]]"."""
    spec = spec.strip()
    if spec.lower() == "heisenberg":
        return _register(Heisenberg())
    if spec.lower() == "lamplighter":
        return _register(Lamplighter())
    if spec.startswith("sublattice:"):
        rest = spec[len("sublattice:"):]
        ambient_spec, _, params = rest.partition(":")
        return parse_subgroup(parse_group(ambient_spec), "sublattice:" + params)
    m = _LATTICE.match(spec.replace("Z^d", "Z"))
    if m:
        d = m.group(2) or m.group(1) or "1"
        return _register(IntegerLattice(int(d)))
    raise UsageError(f"unrecognized group spec {spec!r}")


_BASIS = re.compile(r"basis=(\[.*\])")
_INDEX = re.compile(r"index=(\d+)")


def parse_subgroup(G: GroupPresentation, spec: str) -> Sublattice:
    """Sublattice of G from "sublattice:basis=[[2,0],[0,1]]" (optionally with index=n)."""
    if not spec.startswith("sublattice:"):
        raise UsageError(f"unrecognized subgroup spec {spec!r}")
    m = _BASIS.search(spec)
    if not m:
        raise UsageError(f"subgroup spec {spec!r} lacks basis=[...]")
    try:
        basis = json.loads(m.group(1))
    except json.JSONDecodeError as e:
        raise UsageError(f"cannot parse basis in {spec!r}: {e}") from e
    if not isinstance(G, IntegerLattice):
        raise UsageError("finite-index subgroups are only supported for Z^d")
    H = _register(Sublattice(G, basis))
    idx = _INDEX.search(spec)
    if idx and int(idx.group(1)) != H.index:
        raise UsageError(f"declared index {idx.group(1)} but basis has index {H.index}")
    return H


def dyadic_exponent(epsilon) -> int:
    """Smallest integer e with 2**e >= 2/epsilon, in exact arithmetic."""
    eps = Fraction(epsilon)
    if eps <= 0:
        raise UsageError("epsilon must be positive")
    e = 0
    while Fraction(2 ** e) * eps < 2:
        e += 1
    return e
