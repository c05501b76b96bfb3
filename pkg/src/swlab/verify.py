"""Inequality-verification harness.

Measures operator norms, weak-type constants, duality-transfer ratios,
Kolmogorov and sharp-function dominations, Rubio de Francia certificates,
and runs the extrapolation demonstrations over a fixed, versioned weight
suite.  Every check reduces to an :class:`InequalityReport` holding both
sides, the ratio, the worst instance, and a pass flag against a configured
ceiling (finiteness when no ceiling applies).

The built-in demonstration operator is ``T_rho f(x)``: the average of f over
the cube centered at x whose side is rho(x) snapped down to the scale
ladder.  Snapping down makes ``T_rho f <= (1 + s/rho)**eta M f <= 2**eta M f``
exact by family membership.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .construct import RdFResult
from .grid import (
    Cube,
    GridFunction,
    GridSpec,
    VectorGridFunction,
    integrate,
    norm,
    side_ladder,
    vector_norm_pointwise,
    window_count,
    window_sum,
)
from .maximal import MaximalConfig, maximal, maximal_power, sharp_maximal
from .potential import CriticalRadiusField
from .weights import ExponentBudget, Weight

__all__ = [
    "InequalityReport",
    "PairFamily",
    "measure_operator_norm",
    "weak_type_check",
    "maximal_duality_check",
    "kolmogorov_check",
    "sharp_domination_check",
    "extrapolation_suite",
    "operator_extrapolation_suite",
    "rdf_properties_check",
    "t_rho_apply",
    "t_rho_operator",
    "default_weight_suite",
    "random_fields",
    "random_vector_fields",
    "random_weights",
    "suite_max_workers",
]

_SNAP = 1e-9

WEIGHT_SUITE_VERSION = "swlab-weight-suite-1"


def suite_max_workers() -> int:
    """Worker cap for suite loops; SWL_THREADS, default 1."""
    try:
        return max(1, int(os.environ.get("SWL_THREADS", "1")))
    except ValueError:
        return 1


def _map(fn, items):
    workers = suite_max_workers()
    if workers == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class InequalityReport:
    """One measured inequality: lhs <= C rhs with C = ratio."""

    name: str
    lhs: float
    rhs: float
    ratio: float
    worst: dict
    suite_size: int
    ceiling: float | None
    passed: bool

    @classmethod
    def build(cls, name, lhs, rhs, worst, suite_size, ceiling=None) -> "InequalityReport":
        if rhs > 0:
            ratio = lhs / rhs
        else:
            ratio = 0.0 if lhs == 0 else math.inf
        if ceiling is None:
            passed = math.isfinite(ratio)
        else:
            passed = ratio <= ceiling
        return cls(name, float(lhs), float(rhs), float(ratio), worst, suite_size, ceiling, passed)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "ratio": self.ratio,
            "worst": self.worst,
            "suite_size": self.suite_size,
            "ceiling": self.ceiling,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class PairFamily:
    """Ordered pairs (f, g) of nonnegative grid functions."""

    pairs: tuple[tuple[GridFunction, GridFunction], ...]
    descriptor: str = ""

    def __post_init__(self):
        if not self.pairs:
            raise ValueError("pair family must be nonempty")
        spec = self.pairs[0][0].spec
        for f, g in self.pairs:
            if f.spec != spec or g.spec != spec:
                raise ValueError("all pairs must share a GridSpec")
            if np.min(f.samples) < 0 or np.min(g.samples) < 0:
                raise ValueError("pair members must be nonnegative")

    @property
    def spec(self) -> GridSpec:
        return self.pairs[0][0].spec


# ---------------------------------------------------------------------------
# deterministic random suites
# ---------------------------------------------------------------------------


def random_fields(spec: GridSpec, rng: np.random.Generator, count: int, kind: str = "mix") -> list[GridFunction]:
    """Deterministic test functions: smoothed noise, bumps, spikes, indicators."""
    out = []
    kinds = ("smooth", "bump", "spike", "indicator") if kind == "mix" else (kind,)
    for i in range(count):
        k = kinds[i % len(kinds)]
        if k == "smooth":
            raw = rng.standard_normal(spec.shape)
            arr = np.abs(ndimage.gaussian_filter(raw, sigma=spec.N / 12)) + 0.05
        elif k == "bump":
            center = rng.uniform(-0.5 * spec.L, 0.5 * spec.L, size=spec.n)
            width = rng.uniform(0.15, 0.6) * spec.L
            coords = spec.coordinate_fields()
            d2 = sum((c - cc) ** 2 for c, cc in zip(coords, center))
            arr = np.exp(-d2 / (2 * width**2))
        elif k == "spike":
            arr = np.zeros(spec.shape)
            for _ in range(int(rng.integers(1, 4))):
                idx = tuple(int(j) for j in rng.integers(0, spec.N, size=spec.n))
                arr[idx] = float(rng.uniform(1.0, 10.0))
        else:
            thr = rng.uniform(0.2, 0.8) * spec.L
            arr = (spec.radius_field() <= thr).astype(float)
        out.append(GridFunction.from_field(spec, arr))
    return out


def random_vector_fields(
    spec: GridSpec, rng: np.random.Generator, count: int, width: int = 4
) -> list[VectorGridFunction]:
    return [
        VectorGridFunction(tuple(random_fields(spec, rng, width)))
        for _ in range(count)
    ]


def random_weights(spec: GridSpec, rng: np.random.Generator, count: int, spread: float = 0.5) -> list[Weight]:
    """Log-normal-style random weights, moderately smoothed."""
    out = []
    for _ in range(count):
        raw = rng.standard_normal(spec.shape)
        smooth = ndimage.gaussian_filter(raw, sigma=spec.N / 16)
        out.append(Weight(GridFunction.from_field(spec, np.exp(spread * smooth))))
    return out


def default_weight_suite(
    spec: GridSpec,
    rho: CriticalRadiusField,
    theta: float,
    rng: np.random.Generator,
    include_constructed: bool = True,
) -> list[tuple[str, Weight]]:
    """The fixed weight suite: constant, decaying and growing radial powers,
    an RdF-built majorant of random data, and factorization factors."""
    from .construct import factorize, rdf_majorant

    radial = 1.0 + spec.radius_field()
    suite: list[tuple[str, Weight]] = [("const_one", Weight.constant(spec))]
    for gamma in (0.0, theta / 2.0, theta):
        suite.append(
            (f"decay_gamma_{gamma:g}", Weight.from_field(spec, radial ** (-(spec.n + gamma))))
        )
    for a in (-spec.n / 2.0, spec.n / 4.0):
        suite.append((f"power_{a:g}", Weight.from_field(spec, radial**a)))
    if include_constructed:
        cfg = MaximalConfig.cube(rho, theta)
        h = GridFunction.from_field(
            spec, np.abs(ndimage.gaussian_filter(rng.standard_normal(spec.shape), sigma=spec.N / 16)) + 0.1
        )
        res = rdf_majorant(h, cfg, A=1.0, p=2.0, K=20, tol=1e-6)
        suite.append(("rdf_majorant", Weight(res.majorant)))
        fact = factorize(suite[1][1], 2.0, theta, rho, K=20, tol=1e-6)
        suite.append(("fact_w1", fact.w1))
        suite.append(("fact_w2", fact.w2))
    return suite


# ---------------------------------------------------------------------------
# core measurements
# ---------------------------------------------------------------------------


def measure_operator_norm(op, p: float, weight, suite: list[GridFunction]) -> InequalityReport:
    """max over the suite of |op f|_p,w / |f|_p,w (0/0 pairs skipped)."""
    if not suite:
        raise ValueError("operator-norm suite must be nonempty")
    if all(norm(f, p, weight) == 0 for f in suite):
        raise ValueError("operator-norm suite is identically zero")
    best = (-math.inf, 0.0, 0.0, {})
    for i, f in enumerate(suite):
        denom = norm(f, p, weight)
        if denom == 0:
            continue
        numer = norm(op(f), p, weight)
        if numer / denom > best[0]:
            best = (numer / denom, numer, denom, {"instance": i})
    _, lhs, rhs, worst = best
    return InequalityReport.build("operator_norm", lhs, rhs, worst, len(suite))


def weak_type_check(
    op,
    p: float,
    r: float,
    weight,
    suite: list[GridFunction | VectorGridFunction],
    name: str = "weak_type",
    ceiling: float | None = None,
) -> InequalityReport:
    """sup over the suite of the exact weak-type constant
    ``sup_a a**p w(|op f|_r > a) / integral |f|_r**p w``.

    The sup over levels is evaluated exactly at the finite set of distinct
    output magnitudes (it equals the p-th power of the weak norm).
    """
    best = (-math.inf, 0.0, 0.0, {})
    for i, f in enumerate(suite):
        if isinstance(f, VectorGridFunction):
            agg_in = vector_norm_pointwise(f, r)
        else:
            agg_in = GridFunction(f.spec, np.abs(f.samples))
        denom = norm(agg_in, p, weight) ** p
        if denom == 0:
            continue
        out = op(f)
        agg_out = vector_norm_pointwise(out, r) if isinstance(out, VectorGridFunction) else out
        numer = norm(agg_out, p, weight, mode="weak") ** p
        ratio = numer / denom
        if ratio > best[0]:
            best = (ratio, numer, denom, {"instance": i})
    _, lhs, rhs, worst = best
    return InequalityReport.build(name, lhs, rhs, worst, len(suite), ceiling)


def maximal_duality_check(
    f: GridFunction,
    g: GridFunction,
    q: float,
    budget: ExponentBudget,
    rho: CriticalRadiusField,
    ladder=None,
) -> tuple[InequalityReport, InequalityReport]:
    """Ratios for the duality transfer between penalized maximal operators:
    the uncentered form at exponent eta_bar against M at eta1, and the
    dyadic precursor at exponent eta2 against the same right side."""
    if not q > 1:
        raise ValueError(f"duality exponent q must exceed 1, got {q}")
    gpos = np.abs(g.samples)
    rhs_gf = maximal(g, MaximalConfig.cube(rho, budget.eta1, ladder=ladder))
    rhs = float(np.sum(np.abs(f.samples) ** q * rhs_gf.samples) * f.spec.cell_volume)
    m_full = maximal(f, MaximalConfig.cube(rho, budget.eta_bar, ladder=ladder))
    lhs_full = float(np.sum(m_full.samples**q * gpos) * f.spec.cell_volume)
    m_dyadic = maximal(f, MaximalConfig.dyadic(rho, budget.eta2))
    lhs_dyadic = float(np.sum(m_dyadic.samples**q * gpos) * f.spec.cell_volume)
    rep_full = InequalityReport.build("duality_uncentered", lhs_full, rhs, {}, 1)
    rep_dyadic = InequalityReport.build("duality_dyadic", lhs_dyadic, rhs, {}, 1)
    return rep_full, rep_dyadic


def kolmogorov_check(
    f: GridFunction,
    delta: float,
    Q: Cube,
    cfg: MaximalConfig,
) -> InequalityReport:
    """(1/|Q|) integral_Q (M f)**delta against |Q|**(-delta) |f|_1**delta
    for f supported in Q and 0 < delta < 1."""
    if not 0 < delta < 1:
        raise ValueError(f"Kolmogorov exponent must lie in (0,1), got {delta}")
    spec = f.spec
    outside = np.ones(spec.shape, dtype=bool)
    outside[Q.slices] = False
    if np.any(f.field[outside] != 0):
        raise ValueError("function must be supported in the given cube")
    m = maximal(f, cfg)
    vol = Q.clipped_volume(spec)
    lhs = float((m.field[Q.slices] ** delta).sum()) * spec.cell_volume / vol
    l1 = float(np.abs(f.samples).sum()) * spec.cell_volume
    rhs = vol ** (-delta) * l1**delta
    return InequalityReport.build("kolmogorov", lhs, rhs, {"delta": delta}, 1)


def sharp_domination_check(
    f: GridFunction,
    p: float,
    delta: float,
    eta: float,
    weight,
    ladder=None,
) -> InequalityReport:
    """Weighted p-th power of the (1+side)-penalized maximal power against
    the same power of the scale-split sharp function."""
    if not 0 < delta < 1:
        raise ValueError(f"sharp domination needs 0 < delta < 1, got {delta}")
    cfg = MaximalConfig.phi(eta, ladder=ladder)
    big = maximal_power(f, delta, cfg)
    sharp = sharp_maximal(f, eta, delta=delta, ladder=ladder)
    lhs = norm(big, p, weight) ** p
    rhs = norm(sharp, p, weight) ** p
    return InequalityReport.build("sharp_domination", lhs, rhs, {"p": p, "delta": delta, "eta": eta}, 1)


# ---------------------------------------------------------------------------
# the demonstration operator T_rho and extrapolation suites
# ---------------------------------------------------------------------------


def t_rho_apply(f: GridFunction, rho: CriticalRadiusField, ladder=None) -> GridFunction:
    """Average of f over the cube centered at x with side rho(x) snapped
    down to the ladder."""
    spec = f.spec
    rungs = np.asarray(ladder if ladder is not None else side_ladder(spec))
    rho_vals = rho.rho.field
    snap = np.searchsorted(rungs, rho_vals * (1.0 + 1e-12), side="right") - 1
    snap = np.clip(snap, 0, len(rungs) - 1)
    out = np.empty(spec.shape)
    x = f.field
    for k in np.unique(snap):
        half = int(rungs[k] / (2.0 * spec.h) + _SNAP)
        avg = window_sum(x, half) / window_count(spec.shape, half)
        sel = snap == k
        out[sel] = avg[sel]
    return GridFunction.from_field(spec, out)


def t_rho_operator(rho: CriticalRadiusField, ladder=None):
    return lambda f: t_rho_apply(f, rho, ladder)


def _strong_power(f: GridFunction, p: float, w) -> float:
    return norm(f, p, w) ** p


def extrapolation_suite(
    family: PairFamily,
    p0: float,
    targets: tuple[float, ...],
    weights: list[tuple[str, Weight]],
    modes: tuple[str, ...] = ("strong", "weak", "vector", "vector_weak"),
    q: float = 2.0,
    vector_width: int = 4,
) -> list[InequalityReport]:
    """Measure the extrapolation conclusions on a pair family.

    The base hypothesis constant at p0 is measured first over the whole
    weight suite and must be finite.  Modes: strong (L^p), weak (weak-L^p),
    vector (l^q aggregates in L^p), vector_weak (l^q aggregates in weak-L^p).
    """
    reports: list[InequalityReport] = []
    base = _max_pair_ratio(family.pairs, p0, weights, mode="strong")
    if not math.isfinite(base[0]):
        raise ValueError("base hypothesis fails")
    reports.append(
        InequalityReport.build(
            f"extrapolation_base_p{p0:g}", base[1], base[2], base[3], len(family.pairs)
        )
    )
    groups = _vector_groups(family.pairs, q, vector_width)
    for p in targets:
        for mode in modes:
            if mode == "strong":
                r = _max_pair_ratio(family.pairs, p, weights, mode="strong")
                name = f"extrapolation_strong_p{p:g}"
                size = len(family.pairs)
            elif mode == "weak":
                r = _max_pair_ratio(family.pairs, p, weights, mode="weak")
                name = f"extrapolation_weak_p{p:g}"
                size = len(family.pairs)
            elif mode == "vector":
                r = _max_pair_ratio(groups, p, weights, mode="strong")
                name = f"extrapolation_vector_p{p:g}_q{q:g}"
                size = len(groups)
            elif mode == "vector_weak":
                r = _max_pair_ratio(groups, p, weights, mode="weak")
                name = f"extrapolation_vector_weak_p{p:g}_q{q:g}"
                size = len(groups)
            else:
                raise ValueError(f"unknown extrapolation mode {mode!r}")
            reports.append(InequalityReport.build(name, r[1], r[2], r[3], size))
    return reports


def _vector_groups(pairs, q: float, width: int):
    groups = []
    for beg in range(0, len(pairs) - width + 1, width):
        chunk = pairs[beg : beg + width]
        fa = vector_norm_pointwise(VectorGridFunction(tuple(f for f, _ in chunk)), q)
        ga = vector_norm_pointwise(VectorGridFunction(tuple(g for _, g in chunk)), q)
        groups.append((fa, ga))
    return groups or [(pairs[0][0], pairs[0][1])]


def _max_pair_ratio(pairs, p: float, weights, mode: str):
    best = (-math.inf, 0.0, 0.0, {})
    for i, (f, g) in enumerate(pairs):
        for wname, w in weights:
            if mode == "strong":
                lhs = _strong_power(f, p, w)
                rhs = _strong_power(g, p, w)
            else:
                lhs = norm(f, p, w, mode="weak") ** p
                rhs = norm(g, p, w, mode="weak") ** p
            if rhs == 0:
                ratio = 0.0 if lhs == 0 else math.inf
            else:
                ratio = lhs / rhs
            if ratio > best[0]:
                best = (ratio, lhs, rhs, {"pair": i, "weight": wname})
    return best


def operator_extrapolation_suite(
    op,
    gamma: float,
    base_r: float,
    targets: tuple[float, ...],
    weights: list[tuple[str, Weight]],
    suite: list[GridFunction],
    q: float = 2.0,
    vector_width: int = 4,
) -> list[InequalityReport]:
    """Operator-norm extrapolation: measure |T f|_p,w / |f|_p,w at the base
    exponent and at every target p > gamma, plus the l^q vector form."""
    if gamma < 1:
        raise ValueError(f"gamma must be >= 1, got {gamma}")
    if not base_r > gamma:
        raise ValueError("base exponent must exceed gamma")
    reports = []
    for p in (base_r,) + tuple(t for t in targets if t > gamma):
        best = (-math.inf, 0.0, 0.0, {})
        for i, f in enumerate(suite):
            for wname, w in weights:
                denom = norm(f, p, w)
                if denom == 0:
                    continue
                numer = norm(op(f), p, w)
                if numer / denom > best[0]:
                    best = (numer / denom, numer, denom, {"instance": i, "weight": wname})
        reports.append(
            InequalityReport.build(f"operator_extrapolation_p{p:g}", best[1], best[2], best[3], len(suite))
        )
    # vector form at the first valid target
    v_targets = [t for t in targets if t > gamma]
    if v_targets and len(suite) >= vector_width:
        p = v_targets[0]
        best = (-math.inf, 0.0, 0.0, {})
        chunk = suite[:vector_width]
        fa = vector_norm_pointwise(VectorGridFunction(tuple(chunk)), q)
        ta = vector_norm_pointwise(VectorGridFunction(tuple(op(f) for f in chunk)), q)
        for wname, w in weights:
            denom = norm(fa, p, w)
            if denom == 0:
                continue
            numer = norm(ta, p, w)
            if numer / denom > best[0]:
                best = (numer / denom, numer, denom, {"weight": wname})
        reports.append(
            InequalityReport.build(
                f"operator_extrapolation_vector_p{p:g}_q{q:g}", best[1], best[2], best[3], vector_width
            )
        )
    return reports


def rdf_properties_check(result: RdFResult, op, weight=None) -> list[InequalityReport]:
    """Re-measure the majorant certificates: pointwise domination (exact),
    norm doubling against 2, self-majorization against 2A."""
    h = result.base
    R = result.majorant
    dom_viol = float(np.max(h.samples - R.samples))
    rep_a = InequalityReport.build(
        "rdf_pointwise_domination",
        max(dom_viol, 0.0),
        1.0,
        {},
        1,
        ceiling=0.0,
    )
    hn = norm(h, result.p, weight)
    rn = norm(R, result.p, weight)
    rep_b = InequalityReport.build(
        "rdf_norm_doubling", rn, hn if hn > 0 else 1.0, {}, 1, ceiling=2.0 + 1e-6
    )
    applied = op(R)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(R.samples > 0, applied.samples / R.samples, 0.0)
    rep_c = InequalityReport.build(
        "rdf_self_majorization",
        float(ratio.max()),
        1.0,
        {},
        1,
        ceiling=2.0 * result.operator_norm_A * (1.0 + result.tol) + 1e-12,
    )
    return [rep_a, rep_b, rep_c]
