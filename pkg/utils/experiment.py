# utils/experiment.py
"""Experiment configs, task dispatch and report assembly for the batch runner."""
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import sympy
import yaml

from config import HARMONIC_TOL, HITTING_TRUNC, LAB_VERSION, RANK_TOL, REPORT_DIR, REPORT_SCHEMA_VERSION, logger
from utils.dimension import (
    STATUS_INCONCLUSIVE,
    STATUS_OK,
    det_doubling_scan,
    doubling_subspace,
    estimate_hfk_dim,
    kernel_injectivity_check,
    kleiner_bound,
    norm_equivalence_ratio,
    restriction_check,
)
from utils.errors import ConfigError, LabError, ResourceError
from utils.groups import GroupPresentation, doubling_constant, parse_group, parse_subgroup
from utils.harmonic import BallFunction, gram_matrix, harmonic_basis
from utils.inequalities import (
    poincare_check,
    reverse_poincare_check,
    separated_cover,
    smoothing_gradient_check,
    tail_error_sweep,
)
from utils.measures import (
    CourteousReport,
    StepMeasure,
    change_of_variables_identity,
    check_courteous,
    convolution_power,
    geometric_tail_measure,
    hitting_measure,
    simple_random_walk,
    uniform_on_generators,
)
from utils.polynomials import polynomial_degree_test, weight_decomposition
from utils.reports import config_digest, emit_summary, write_report, write_tables
from utils.workers import ordered_map

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RESOURCE = 3
EXIT_INCONCLUSIVE = 4
EXIT_CHECK_FAILED = 5
STATUS_CHECK_FAILED = "check_failed"

TASKS = (
    "growth", "courteous", "hitting", "poincare", "reverse-poincare", "cover",
    "dim", "polytest", "weights", "scan", "kernel", "restriction",
)
MEASURE_FAMILIES = ("uniform", "srw", "geometric")
BACKENDS = ("poly_ansatz", "variational")
VARIANTS = ("inf", "courteous", "smoothing")
FORMATS = ("json", "csv")
HITTING_MODES = ("exact", "monte_carlo")

# keys left out of the config echo; they never change report content
_NOT_ECHOED = ("workers", "out")


@dataclass
class MeasureSpec:
    family: str = "srw"
    power: int = 1
    decay: float = 1.0
    mass_tol: float = 1e-8


@dataclass
class ExperimentConfig:
    task: str
    group: str = "Z^d:d=2"
    measure: MeasureSpec = field(default_factory=MeasureSpec)
    radii: List[int] = field(default_factory=lambda: [4, 8, 16])
    epsilon: Union[float, str] = 0.25
    k: int = 1
    rank_tol: float = RANK_TOL
    seed: Optional[int] = None
    backend: str = "poly_ansatz"
    subgroup: Optional[str] = None
    mode: str = "exact"
    n_samples: int = 100_000
    trunc_radius: int = HITTING_TRUNC
    n_functions: int = 100
    variants: List[str] = field(default_factory=lambda: ["inf", "courteous"])
    functions: List[str] = field(default_factory=list)
    word_cap: int = 2
    name: Optional[str] = None
    format: str = "json"
    out: str = str(REPORT_DIR)
    workers: Optional[int] = None

    @classmethod
    def from_mapping(cls, values: Dict) -> "ExperimentConfig":
        values = dict(values)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")
        if "task" not in values:
            raise ConfigError("config has no task")
        measure = values.pop("measure", None) or {}
        if isinstance(measure, str):
            measure = {"family": measure}
        bad = sorted(set(measure) - {f.name for f in fields(MeasureSpec)})
        if bad:
            raise ConfigError(f"unknown measure keys {bad}")
        try:
            config = cls(measure=MeasureSpec(**measure), **values)
        except TypeError as e:
            raise ConfigError(str(e)) from e
        config.validate()
        return config

    @property
    def epsilon_exact(self) -> Fraction:
        return Fraction(str(self.epsilon))

    @property
    def stochastic(self) -> bool:
        return self.task == "poincare" or (self.task == "hitting" and self.mode == "monte_carlo")

    def validate(self) -> None:
        def need(ok: bool, message: str):
            if not ok:
                raise ConfigError(message)

        need(self.task in TASKS, f"unknown task {self.task!r}; expected one of {list(TASKS)}")
        need(isinstance(self.radii, list) and len(self.radii) > 0, "radii must be a nonempty list")
        need(all(isinstance(r, int) and not isinstance(r, bool) and 1 <= r <= 256 for r in self.radii),
             f"radii must be integers in [1, 256], got {self.radii}")
        if self.task == "dim":
            need(all(b > a for a, b in zip(self.radii, self.radii[1:])), f"dim radii must increase: {self.radii}")
        try:
            eps = self.epsilon_exact
        except (ValueError, ZeroDivisionError) as e:
            raise ConfigError(f"epsilon {self.epsilon!r} is not a number") from e
        need(0 < eps <= Fraction(1, 2), f"epsilon must lie in (0, 1/2], got {self.epsilon}")
        need(isinstance(self.k, int) and 0 <= self.k <= 6, f"k must be an integer in [0, 6], got {self.k}")
        need(0 < self.rank_tol < 1e-2, f"rank_tol must lie in (0, 1e-2), got {self.rank_tol}")
        need(self.backend in BACKENDS, f"unknown backend {self.backend!r}")
        need(self.mode in HITTING_MODES, f"unknown hitting mode {self.mode!r}")
        need(self.format in FORMATS, f"format must be one of {list(FORMATS)}")
        need(1 <= self.n_samples <= 10_000_000, f"n_samples must lie in [1, 1e7], got {self.n_samples}")
        need(1 <= self.trunc_radius <= 512, f"trunc_radius must lie in [1, 512], got {self.trunc_radius}")
        need(1 <= self.n_functions <= 10_000, f"n_functions must lie in [1, 10000], got {self.n_functions}")
        need(1 <= self.word_cap <= 4, f"word_cap must lie in [1, 4], got {self.word_cap}")
        need(bool(self.variants) and all(v in VARIANTS for v in self.variants),
             f"variants must be a nonempty subset of {list(VARIANTS)}")
        need(self.workers is None or self.workers >= 1, "workers must be at least 1")
        m = self.measure
        need(m.family in MEASURE_FAMILIES, f"unknown measure family {m.family!r}")
        need(isinstance(m.power, int) and 1 <= m.power <= 4, f"measure power must lie in [1, 4], got {m.power}")
        need(m.decay > 0, f"geometric decay must be positive, got {m.decay}")
        need(0 < m.mass_tol < 1, f"mass_tol must lie in (0, 1), got {m.mass_tol}")
        if self.task in ("hitting", "restriction"):
            need(self.subgroup is not None, f"task {self.task} needs a subgroup")
        if self.stochastic:
            need(isinstance(self.seed, int) and self.seed >= 0, f"task {self.task} is stochastic and needs a seed")

    def echo(self) -> Dict:
        out = asdict(self)
        for key in _NOT_ECHOED:
            out.pop(key)
        return out


def load_config_file(path: Union[str, Path]) -> Dict:
    """YAML or JSON file into a plain mapping."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as e:
        logger.error(f"Cannot read config {path}: {e}")
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} is not a mapping")
    return data


def merge_overrides(base: Dict, overrides: Dict) -> Dict:
    """Flags win over file values; None means the flag was not given."""
    merged = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if key == "measure" and isinstance(value, dict):
            current = merged.get("measure") or {}
            if isinstance(current, str):
                current = {"family": current}
            merged["measure"] = {**current, **{k: v for k, v in value.items() if v is not None}}
        else:
            merged[key] = value
    return merged


def build_measure(G: GroupPresentation, spec: MeasureSpec) -> StepMeasure:
    if spec.family == "uniform":
        mu = uniform_on_generators(G)
    elif spec.family == "srw":
        mu = simple_random_walk(G)
    else:
        mu = geometric_tail_measure(G, spec.decay, spec.mass_tol)
    return convolution_power(mu, spec.power) if spec.power > 1 else mu


def _measure_constants(mu: StepMeasure, report: CourteousReport) -> Dict:
    tail_rate = mu.truncation.tail_rate if mu.truncation is not None else None
    return {
        "c": report.density_floors.get(2, 0.0),
        "c_S": report.density_floors.get(1, 0.0),
        "sigma2": report.second_moment,
        "c_mu": tail_rate if tail_rate is not None else report.tail_fit.certified_rate,
    }


def _coords_key(coords) -> str:
    return ",".join(str(c) for c in coords)


def parse_functions(G: GroupPresentation, expressions: Sequence[str], radius: int) -> List[BallFunction]:
    """Polynomial expressions in the coordinates (x, y, z or x1..xd) evaluated on B(radius)."""
    domain = G.ball(radius)
    if domain.coords is None:
        raise ConfigError(f"{G.name} has no coordinates to evaluate expressions on")
    width = domain.coords.shape[1]
    names = "x y z" if width <= 3 else " ".join(f"x{i + 1}" for i in range(width))
    symbols = sympy.symbols(names, seq=True)[:width]
    out = []
    for expr in expressions:
        try:
            parsed = sympy.sympify(expr, locals={s.name: s for s in symbols})
        except (sympy.SympifyError, TypeError) as e:
            raise ConfigError(f"cannot parse function {expr!r}: {e}") from e
        extra = parsed.free_symbols - set(symbols)
        if extra:
            raise ConfigError(f"function {expr!r} uses unknown variables {sorted(map(str, extra))}")
        fn = sympy.lambdify(symbols, parsed, modules="numpy")
        cols = [domain.coords[:, i].astype(float) for i in range(width)]
        values = np.broadcast_to(np.asarray(fn(*cols), dtype=float), (domain.size,)).copy()
        out.append(BallFunction(domain, values, expr))
    return out


@dataclass
class Outcome:
    result: Dict
    constants: Dict = field(default_factory=dict)
    flags: Dict[str, bool] = field(default_factory=dict)
    headline: Dict = field(default_factory=dict)
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    status: str = STATUS_OK
    # flags that must hold for exit 0; the rest are informational
    gated: Tuple[str, ...] = ()


def _growth(config: ExperimentConfig, G: GroupPresentation) -> Outcome:
    r_max = max(config.radii)
    if G.radius_cap is not None:
        r_max = min(r_max, G.radius_cap)
    profile = doubling_constant(G, max(2, r_max))
    growth = pd.DataFrame({"R": profile.radii, "ball_size": profile.growth})
    ratios = pd.DataFrame({"R": list(profile.ratios), "ratio": list(profile.ratios.values())})
    return Outcome(
        result={"profile": profile.to_dict()},
        constants={"D": profile.D},
        flags={"uniform_doubling": profile.uniform},
        headline={"D": profile.D, "growth_degree": profile.growth_degree},
        tables={"growth": growth, "ratios": ratios},
    )


def _courteous(config: ExperimentConfig, G: GroupPresentation) -> Outcome:
    mu = build_measure(G, config.measure)
    report = check_courteous(G, mu)
    lhs, rhs = change_of_variables_identity(
        G, mu, lambda x, y: (G.word_length(x) + 1) * (G.word_length(y) + 2), radius=3
    )
    identity_holds = lhs == rhs if mu.is_exact else abs(float(lhs) - float(rhs)) <= 1e-12 * max(1.0, abs(float(lhs)))
    atoms = pd.DataFrame({
        "coords": [_coords_key(x.coords) for x in mu.elements],
        "mass": mu.mass_array,
    })
    return Outcome(
        result={"measure": mu.to_dict(), "courteous": report.to_dict(),
                "change_of_variables": {"lhs": float(lhs), "rhs": float(rhs)}},
        constants=_measure_constants(mu, report),
        flags={
            "symmetric": report.symmetric,
            "adapted": report.adapted_radius is not None,
            "courteous": report.courteous,
            "change_of_variables": bool(identity_holds),
        },
        headline={"courteous": report.courteous},
        tables={"atoms": atoms},
        gated=("symmetric", "change_of_variables"),
    )


def _hitting(config: ExperimentConfig, G: GroupPresentation) -> Outcome:
    H = parse_subgroup(G, config.subgroup)
    mu = build_measure(G, config.measure)
    res = hitting_measure(G, H, mu, mode=config.mode, trunc_radius=config.trunc_radius,
                          n_samples=config.n_samples, seed=config.seed, workers=config.workers)
    h_report = check_courteous(H, res.measure, res.standard_errors if config.mode == "monte_carlo" else None)
    measure = {_coords_key(x.coords): float(m) for x, m in res.measure.support}
    table = pd.DataFrame({
        "coords": list(measure),
        "mass": list(measure.values()),
        "se": [res.standard_errors.get(x.coords, 0.0) for x in res.measure.elements],
    })
    constants = _measure_constants(mu, check_courteous(G, mu))
    constants["ambient_trunc_radius"] = res.ambient_trunc_radius
    constants["symmetry_tol"] = h_report.symmetry_tol
    return Outcome(
        result={"hitting": res.to_dict(), "subgroup_courteous": h_report.to_dict(), "index": H.index},
        constants=constants,
        flags={"symmetric": h_report.symmetric, "adapted": h_report.adapted_radius is not None},
        headline={"measure": measure},
        tables={"measure": table},
        gated=("symmetric", "adapted"),
    )


def _poincare(config: ExperimentConfig, G: GroupPresentation) -> Outcome:
    mu = build_measure(G, config.measure)
    report = check_courteous(G, mu)
    variants = list(config.variants)
    rows = []
    for R in config.radii:
        domain = G.ball(3 * R + max(1, mu.reach))

        def run(i: int, R=R, domain=domain):
            rng = np.random.default_rng([config.seed, R, i])
            f = BallFunction(domain, rng.standard_normal(domain.size), f"random{i}")
            out = []
            for v in variants:
                if v == "smoothing":
                    out.append(smoothing_gradient_check(f, R))
                else:
                    out.append(poincare_check(f, R, v, mu=mu, courteous=report))
            return out

        for i, checks in enumerate(ordered_map(run, range(config.n_functions), config.workers)):
            for v, check in zip(variants, checks):
                rows.append({"R": R, "variant": v, "function": i, "lhs": check.lhs,
                             "rhs": check.rhs_main + check.rhs_error, "ratio": check.ratio, "pass": check.passed})
    table = pd.DataFrame(rows)
    rates = {v: float(table.loc[table["variant"] == v, "pass"].mean()) for v in variants}
    pass_rate = float(table["pass"].mean())
    logger.info(f"Poincaré suite on {G.name}: pass rates {rates}")
    return Outcome(
        result={"pass_rates": rates, "checks": len(table), "max_ratio": float(table["ratio"].max())},
        constants=_measure_constants(mu, report),
        flags={f"{v}_all_pass": rates[v] == 1.0 for v in variants},
        gated=tuple(f"{v}_all_pass" for v in variants),
        headline={"pass_rate": pass_rate},
        tables={"checks": table},
    )


def _harmonic_functions(config: ExperimentConfig, G: GroupPresentation, mu: StepMeasure,
                        radius: int) -> List[BallFunction]:
    if config.functions:
        return parse_functions(G, config.functions, radius)
    return harmonic_basis(G, mu, config.k, rank_tol=config.rank_tol, radius=radius).functions


def _reverse_poincare(config: ExperimentConfig, G: GroupPresentation) -> Outcome:
    mu = build_measure(G, config.measure)
    report = check_courteous(G, mu)
    radii = sorted(config.radii)
    functions = _harmonic_functions(config, G, mu, 3 * radii[-1] + mu.reach)
    jobs = [(f, R) for f in functions for R in radii]
    checks = ordered_map(lambda job: reverse_poincare_check(job[0], job[1], mu, config.k), jobs, config.workers)
    rows = [{
        "function": f.label, "R": R, "lhs": c.lhs, "rhs_main": c.rhs_main, "rhs_error": c.rhs_error,
        "ratio": c.ratio, "pass": c.passed, "phi_energy": c.details["phi_energy"],
    } for (f, R), c in zip(jobs, checks)]
    table = pd.DataFrame(rows)

    c_mu = mu.truncation.tail_rate if mu.truncation is not None else None
    sweep = list(range(radii[0], radii[-1] + 1))
    tails, fits = [], {}
    for f in functions:
        frame, fit = tail_error_sweep(f, mu, sweep, config.workers)
        frame.insert(0, "function", f.label)
        tails.append(frame)
        fits[f.label] = fit._asdict()
    decay_ok = all(
        fit["rate"] is None or c_mu is None or fit["rate"] >= c_mu / 2 for fit in fits.values()
    )
    pass_rate = float(table["pass"].mean())
    return Outcome(
        result={"decay_fits": fits, "sweep_radii": sweep, "checks": len(table)},
        constants={**_measure_constants(mu, report), "k": config.k, "tail_factor": 12.0},
        flags={"all_pass": pass_rate == 1.0, "tail_decay": decay_ok},
        headline={"pass_rate": pass_rate},
        tables={"checks": table, "tails": pd.concat(tails, ignore_index=True)},
        gated=("all_pass", "tail_decay"),
    )


def _cover(config: ExperimentConfig, G: GroupPresentation) -> Outcome:
    eps = float(config.epsilon_exact)
    covers = ordered_map(lambda R: separated_cover(G, R, eps), config.radii, config.workers)
    rows = [{
        "R": c.radius, "J": c.J, "beta": c.beta, "D": c.D,
        "J_counting": c.bounds["J_counting"], "beta_counting": c.bounds["beta_counting"],
        "J_doubling": c.bounds["J_doubling"], "beta_doubling": c.bounds["beta_doubling"],
        "covering": c.covering_verified, "separated": c.separation_verified,
    } for c in covers]
    table = pd.DataFrame(rows)
    flags = {
        "covering_verified": all(c.covering_verified for c in covers),
        "separation_verified": all(c.separation_verified for c in covers),
        "J_within_counting": bool((table["J"] <= table["J_counting"]).all()),
        "beta_within_counting": bool((table["beta"] <= table["beta_counting"]).all()),
        "J_within_doubling": all(c.bounds["J_within_doubling"] for c in covers),
        "beta_within_doubling": all(c.bounds["beta_within_doubling"] for c in covers),
    }
    return Outcome(
        result={"covers": [c.to_dict() for c in covers]},
        constants={"D": max(c.D for c in covers), "epsilon": str(config.epsilon_exact)},
        flags=flags,
        headline={"J": [c.J for c in covers], "beta": [c.beta for c in covers]},
        tables={"covers": table},
        gated=("covering_verified", "separation_verified", "J_within_counting", "beta_within_counting"),
    )


def _kleiner(D: float, epsilon: Fraction) -> Optional[int]:
    return kleiner_bound(D, epsilon) if epsilon < Fraction(1, 3) else None


def _dim(config: ExperimentConfig, G: GroupPresentation) -> Outcome:
    mu = build_measure(G, config.measure)
    est = estimate_hfk_dim(G, mu, config.k, config.radii, config.rank_tol, config.backend)
    D = est.doubling.D
    bound = _kleiner(D, config.epsilon_exact)
    flags = {"uniform_doubling": est.doubling.uniform, "stable": est.status == STATUS_OK}
    if est.dimension is not None and bound is not None:
        flags["within_kleiner_bound"] = est.dimension <= bound
    constants = {"D": D, "epsilon": str(config.epsilon_exact)}
    if est.status == STATUS_OK:
        constants.update(_measure_constants(mu, check_courteous(G, mu)))
    table = pd.DataFrame([r.to_dict() for r in est.per_radius], columns=["radius", "dimension", "gram_rank", "margin"])
    return Outcome(
        result={"estimate": est.to_dict()},
        constants=constants,
        flags=flags,
        headline={"dimension": est.dimension, "kleiner_bound": bound},
        tables={"ranks": table},
        status=est.status,
        gated=("within_kleiner_bound",),
    )


def _polytest(config: ExperimentConfig, G: GroupPresentation) -> Outcome:
    mu = build_measure(G, config.measure)
    functions = _harmonic_functions(config, G, mu, max(config.radii))
    tests = ordered_map(lambda f: polynomial_degree_test(f, config.k, config.word_cap), functions, config.workers)
    table = pd.DataFrame([{"function": f.label, **t.to_dict()} for f, t in zip(functions, tests)])
    return Outcome(
        result={"tests": table.to_dict(orient="records")},
        constants={"degree_tol": 1e-9, "word_cap": config.word_cap},
        flags={"all_degree_at_most_k": all(t.is_degree_at_most_k for t in tests)},
        headline={"functions": len(functions)},
        tables={"degree": table},
        gated=("all_degree_at_most_k",),
    )


def _weights(config: ExperimentConfig, G: GroupPresentation) -> Outcome:
    mu = build_measure(G, config.measure)
    R = max(config.radii)
    functions = _harmonic_functions(config, G, mu, R + 1)
    Q = gram_matrix(functions, R, config.rank_tol)
    gens = [g for g in G.generators if g != G.identity()]
    wd = weight_decomposition(functions, gens, Q)
    return Outcome(
        result={"weights": wd.to_dict(), "gram": Q.to_dict()},
        constants={"unipotent_tol": 1e-6},
        flags={"unipotent": wd.unipotent},
        headline={"chain_dims": wd.chain_dims, "dimension": len(functions)},
        gated=("unipotent",),
    )


def _scan(config: ExperimentConfig, G: GroupPresentation) -> Outcome:
    mu = build_measure(G, config.measure)
    basis = harmonic_basis(G, mu, config.k, rank_tol=config.rank_tol)
    d = G.dimension_hint
    if d is None:
        d = doubling_constant(G, max(2, max(config.radii))).growth_degree
    scan = det_doubling_scan(basis, config.radii, d, config.k, rank_tol=config.rank_tol, workers=config.workers)
    result = {"scan": scan.to_dict(), "norm_ratio": norm_equivalence_ratio(basis, config.k, config.radii)}
    if scan.hits:
        dim_u, eigenvalues = doubling_subspace(basis, scan.hits[0], scan.delta, config.rank_tol)
        result["subspace"] = {"radius": scan.hits[0], "dimension": dim_u, "eigenvalues": eigenvalues}
    return Outcome(
        result=result,
        constants={"delta": scan.delta, "d_v": scan.d_v, "d": d},
        flags={"hadamard": all(scan.hadamard), "all_hits": len(scan.hits) == len(scan.radii)},
        headline={"hits": scan.hits},
        tables={"scan": scan.to_frame()},
        gated=("hadamard",),
    )


def _kernel(config: ExperimentConfig, G: GroupPresentation) -> Outcome:
    mu = build_measure(G, config.measure)
    basis = harmonic_basis(G, mu, config.k, rank_tol=config.rank_tol)
    report = kernel_injectivity_check(basis, G, mu, config.k, float(config.epsilon_exact),
                                      max(config.radii), config.rank_tol)
    return Outcome(
        result={"kernel": report.to_dict()},
        constants=report.constants,
        flags={"injective": report.injective,
               "chain_holds": all(d["chain_holds"] for d in report.directions)},
        headline={"kernel_dim": report.kernel_dim, "kleiner_bound": report.dimension_bound,
                  "dimension": basis.dimension},
        gated=("injective", "chain_holds"),
    )


def _restriction(config: ExperimentConfig, G: GroupPresentation) -> Outcome:
    mu = build_measure(G, config.measure)
    H = parse_subgroup(G, config.subgroup)
    res = hitting_measure(G, H, mu, mode="exact", trunc_radius=config.trunc_radius)
    basis = harmonic_basis(G, mu, config.k, rank_tol=config.rank_tol)
    report = restriction_check(basis, H, res.measure, max(config.radii), rank_tol=config.rank_tol)
    return Outcome(
        result={"restriction": report.to_dict(), "hitting": res.to_dict()},
        constants={"restriction_tol": 1e-6, "ambient_trunc_radius": res.ambient_trunc_radius},
        flags={"harmonic": report.harmonic, "full_rank": report.gram_rank == basis.dimension},
        headline={"gram_rank": report.gram_rank, "max_residual": report.max_residual},
        gated=("harmonic", "full_rank"),
    )


HANDLERS: Dict[str, Callable[[ExperimentConfig, GroupPresentation], Outcome]] = {
    "growth": _growth,
    "courteous": _courteous,
    "hitting": _hitting,
    "poincare": _poincare,
    "reverse-poincare": _reverse_poincare,
    "cover": _cover,
    "dim": _dim,
    "polytest": _polytest,
    "weights": _weights,
    "scan": _scan,
    "kernel": _kernel,
    "restriction": _restriction,
}


@dataclass
class ExperimentResult:
    exit_code: int
    report: Optional[Dict] = None
    paths: List[Path] = field(default_factory=list)
    error: Optional[str] = None
    reason: Optional[str] = None

    def status_line(self) -> str:
        if self.error is not None:
            return f"error={self.error} reason={self.reason}"
        failed = self.report.get("failed_checks") or []
        if failed:
            return f"status={self.report['status']} failed={','.join(failed)} report={self.paths[0]}"
        return f"status={self.report['status']} report={self.paths[0]}"


def assemble_report(config: ExperimentConfig, outcome: Outcome) -> Dict:
    constants = {"rank_tol": config.rank_tol, "harmonic_tol": HARMONIC_TOL, **outcome.constants}
    gated = sorted(g for g in outcome.gated if g in outcome.flags)
    failed = [g for g in gated if not outcome.flags[g]]
    status = outcome.status
    if failed and status == STATUS_OK:
        status = STATUS_CHECK_FAILED
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "lab_version": LAB_VERSION,
        "task": config.task,
        "status": status,
        "config": config.echo(),
        "constants": constants,
        "flags": outcome.flags,
        "gated_flags": gated,
        "informational_flags": sorted(set(outcome.flags) - set(gated)),
        "failed_checks": failed,
        "result": outcome.result,
    }
    report.update(outcome.headline)
    return report


def report_stem(config: ExperimentConfig) -> str:
    return f"{config.name or config.task}-{config_digest(config.echo())}"


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run one task and write its report; errors come back as exit codes, never raised."""
    try:
        config.validate()
        G = parse_group(config.group)
        outcome = HANDLERS[config.task](config, G)
    except ResourceError as e:
        logger.error(f"{config.task} hit a resource limit: {e}")
        return ExperimentResult(EXIT_RESOURCE, error="resource", reason=_one_line(e))
    except LabError as e:
        logger.error(f"{config.task} rejected: {e}")
        return ExperimentResult(EXIT_CONFIG, error="config", reason=_one_line(e))

    report = assemble_report(config, outcome)
    stem = report_stem(config)
    paths = [write_report(report, config.out, stem)]
    if config.format == "csv":
        paths.extend(write_tables(outcome.tables, config.out, stem))
    codes = {STATUS_INCONCLUSIVE: EXIT_INCONCLUSIVE, STATUS_CHECK_FAILED: EXIT_CHECK_FAILED}
    code = codes.get(report["status"], EXIT_OK)
    if report["failed_checks"]:
        logger.warning(f"{config.task} failed checks: {', '.join(report['failed_checks'])}")
    return ExperimentResult(code, report, paths)


def _one_line(e: Exception) -> str:
    return " ".join(str(e).split()) or type(e).__name__


def run_suite(config_dir: Union[str, Path], out_dir: Union[str, Path], workers: Optional[int] = None,
              summary: Optional[Union[str, Path]] = None) -> Dict[str, ExperimentResult]:
    """Run every YAML config in config_dir (sorted by name) into out_dir."""
    results: Dict[str, ExperimentResult] = {}
    for path in sorted(Path(config_dir).glob("*.yaml")):
        values = merge_overrides(load_config_file(path), {"out": str(out_dir), "workers": workers})
        values.setdefault("name", path.stem)
        try:
            config = ExperimentConfig.from_mapping(values)
        except ConfigError as e:
            results[path.name] = ExperimentResult(EXIT_CONFIG, error="config", reason=_one_line(e))
            continue
        results[path.name] = run_experiment(config)
        logger.info(f"{path.name}: {results[path.name].status_line()}")
    reports = [r.paths[0] for r in results.values() if r.report is not None]
    if reports:
        emit_summary(reports, summary or Path(out_dir) / "summary.csv")
    return results
