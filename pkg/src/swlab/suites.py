"""Named verification suites behind ``swlab verify``.

Each suite reduces a batch of measurements to :class:`InequalityReport`
records; ``verify all`` concatenates every suite into one regression file.
Randomness is drawn from per-suite Philox streams spawned from the run seed,
so a fixed seed and config reproduce the regression file byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .construct import factorize, rdf_majorant
from .czd import covering_check, decompose, verify_czd
from .grid import (
    Cube,
    DyadicLattice,
    GridFunction,
    GridSpec,
    VectorGridFunction,
    block_reduce,
    norm,
    side_ladder,
    vector_norm_pointwise,
)
from .maximal import MaximalConfig, maximal, maximal_vector
from .potential import (
    CriticalRadiusField,
    Potential,
    RegularityEstimate,
    critical_radius_field,
    fit_regularity,
    penalty_multiplier,
)
from .verify import (
    InequalityReport,
    PairFamily,
    default_weight_suite,
    extrapolation_suite,
    kolmogorov_check,
    maximal_duality_check,
    measure_operator_norm,
    operator_extrapolation_suite,
    random_fields,
    random_vector_fields,
    random_weights,
    rdf_properties_check,
    sharp_domination_check,
    t_rho_apply,
    t_rho_operator,
    weak_type_check,
)
from .weights import Weight, ap_constant, ap_cube_products, dual_weight, exponent_budget

SUITE_NAMES = (
    "weights",
    "weak",
    "duality",
    "czd",
    "covering",
    "rdf",
    "factorization",
    "extrapolation",
    "sharp",
)

__all__ = ["LabContext", "build_context", "run_suite", "run_suites", "SUITE_NAMES"]


@dataclass
class LabContext:
    spec: GridSpec
    potential: Potential
    rho: CriticalRadiusField
    theta: float
    ladder: tuple[float, ...]
    lattice: DyadicLattice
    weights: list[tuple[str, Weight]]
    regularity: RegularityEstimate
    seed: int

    def rng_for(self, suite: str) -> np.random.Generator:
        idx = SUITE_NAMES.index(suite) if suite in SUITE_NAMES else len(SUITE_NAMES)
        child = np.random.SeedSequence(self.seed).spawn(len(SUITE_NAMES) + 2)[idx]
        return np.random.Generator(np.random.Philox(child))


def _potential_from_tag(spec: GridSpec, tag: str) -> Potential:
    if tag == "one":
        return Potential.one(spec)
    if tag == "xsq":
        return Potential.square_norm(spec)
    raise ValueError(f"unknown potential tag {tag!r}")


def build_context(spec: GridSpec, potential_tag: str, theta: float, seed: int) -> LabContext:
    V = _potential_from_tag(spec, potential_tag)
    rho = critical_radius_field(V)
    ladder = side_ladder(spec)
    lattice = DyadicLattice.for_spec(spec)
    ss = np.random.SeedSequence(seed).spawn(len(SUITE_NAMES) + 2)
    rng_ctx = np.random.Generator(np.random.Philox(ss[len(SUITE_NAMES)]))
    pairs = rng_ctx.integers(0, spec.size, size=(256, 2))
    reg = fit_regularity(rho, pairs)
    rng_weights = np.random.Generator(np.random.Philox(ss[len(SUITE_NAMES) + 1]))
    weights = default_weight_suite(spec, rho, theta, rng_weights)
    return LabContext(
        spec=spec,
        potential=V,
        rho=rho,
        theta=theta,
        ladder=ladder,
        lattice=lattice,
        weights=weights,
        regularity=reg,
        seed=seed,
    )


def _tag(suite: str, name: str) -> str:
    return f"{suite}.{name}"


def _retag(suite: str, reports: list[InequalityReport]) -> list[InequalityReport]:
    out = []
    for r in reports:
        out.append(
            InequalityReport(
                _tag(suite, r.name), r.lhs, r.rhs, r.ratio, r.worst, r.suite_size, r.ceiling, r.passed
            )
        )
    return out


# ---------------------------------------------------------------------------


def suite_weights(ctx: LabContext) -> list[InequalityReport]:
    reports: list[InequalityReport] = []
    ps = (1.0, 1.5, 2.0, 3.0)
    for wname, w in ctx.weights:
        constants = []
        for p in ps:
            rep = ap_constant(w, p, ctx.theta, ctx.rho)
            constants.append(rep.constant)
            reports.append(
                InequalityReport.build(
                    _tag("weights", f"ap_{wname}_p{p:g}"), rep.constant, 1.0, rep.worst_cube, 1
                )
            )
        mono_viol = sum(
            1 for a, b in zip(constants[1:], constants[2:]) if b > a * (1.0 + 1e-12)
        )
        reports.append(
            InequalityReport.build(
                _tag("weights", f"ap_monotone_{wname}"), float(mono_viol), 1.0, {}, len(ps) - 1, ceiling=0.0
            )
        )
    rng = ctx.rng_for("weights")
    max_err = 0.0
    for w in random_weights(ctx.spec, rng, 3):
        for p in (1.5, 2.0, 3.0):
            pp = p / (p - 1.0)
            parts_w, _ = ap_cube_products(w, p, ctx.theta, ctx.rho)
            parts_s, _ = ap_cube_products(dual_weight(w, p), pp, ctx.theta, ctx.rho)
            for pw, ps_ in zip(parts_w, parts_s):
                err = np.max(np.abs(ps_.values - pw.values ** (pp - 1.0)) / pw.values ** (pp - 1.0))
                max_err = max(max_err, float(err))
    reports.append(
        InequalityReport.build(_tag("weights", "duality_identity"), max_err, 1.0, {}, 3, ceiling=1e-10)
    )
    return reports


def suite_weak(ctx: LabContext) -> list[InequalityReport]:
    rng = ctx.rng_for("weak")
    reports = []
    F_suite = random_vector_fields(ctx.spec, rng, 3, width=3)
    for p, r in ((2.0, 2.0), (2.0, 3.0)):
        budget = exponent_budget(ctx.regularity.l0, ctx.theta, p, r, ctx.spec.n)
        cfg = MaximalConfig.cube(ctx.rho, budget.eta, ladder=ctx.ladder)

        def op(F, cfg=cfg):
            return VectorGridFunction(tuple(maximal(c, cfg) for c in F.components))

        weak_best, strong_best = 0.0, 0.0
        for wname, w in ctx.weights:
            rep = weak_type_check(op, p, r, w, F_suite)
            weak_best = max(weak_best, rep.ratio)
            for F in F_suite:
                denom = norm(vector_norm_pointwise(F, r), p, w)
                if denom == 0:
                    continue
                numer = norm(maximal_vector(F, cfg, r), p, w)
                strong_best = max(strong_best, numer / denom)
        reports.append(
            InequalityReport.build(
                _tag("weak", f"vector_weak_p{p:g}_r{r:g}"), weak_best, 1.0, {}, len(F_suite)
            )
        )
        reports.append(
            InequalityReport.build(
                _tag("weak", f"vector_strong_p{p:g}_r{r:g}"), strong_best, 1.0, {}, len(F_suite)
            )
        )
    return reports


def suite_duality(ctx: LabContext) -> list[InequalityReport]:
    rng = ctx.rng_for("duality")
    fs = random_fields(ctx.spec, rng, 6)
    gs = random_fields(ctx.spec, rng, 6)
    budget = exponent_budget(ctx.regularity.l0, ctx.theta, 2.0, 3.0, ctx.spec.n)
    full_best, dyadic_best = 0.0, 0.0
    for f, g in zip(fs, gs):
        rep_full, rep_dyadic = maximal_duality_check(f, g, 2.0, budget, ctx.rho, ctx.ladder)
        full_best = max(full_best, rep_full.ratio)
        dyadic_best = max(dyadic_best, rep_dyadic.ratio)
    reports = [
        InequalityReport.build(_tag("duality", "uncentered_q2"), full_best, 1.0, {}, len(fs)),
        InequalityReport.build(_tag("duality", "dyadic_q2"), dyadic_best, 1.0, {}, len(fs)),
    ]
    Q = Cube.from_center(ctx.spec, (0.0,) * ctx.spec.n, ctx.spec.L)
    cfg = MaximalConfig.cube(ctx.rho, ctx.theta, ladder=ctx.ladder)
    kol_best = 0.0
    for f in fs[:3]:
        supported = GridFunction.from_field(ctx.spec, _restrict(f.field, Q))
        if supported.samples.max() == 0:
            continue
        for delta in (0.3, 0.5, 0.7):
            rep = kolmogorov_check(supported, delta, Q, cfg)
            kol_best = max(kol_best, rep.ratio)
    reports.append(InequalityReport.build(_tag("duality", "kolmogorov"), kol_best, 1.0, {}, 3))
    return reports


def _restrict(field: np.ndarray, Q: Cube) -> np.ndarray:
    out = np.zeros_like(field)
    out[Q.slices] = field[Q.slices]
    return out


def _dyadic_pavg_stats(x: np.ndarray, theta: float, rho_f: np.ndarray, lattice: DyadicLattice):
    root = None
    peak = -math.inf
    for level, b in enumerate(lattice.block_sizes):
        pen = penalty_multiplier(theta, lattice.side(level), block_reduce(rho_f, b, "max"))
        pavg = block_reduce(x, b, "mean") * pen
        if level == 0:
            root = float(pavg.max())
        peak = max(peak, float(pavg.max()))
    return root, peak


def suite_czd(ctx: LabContext) -> list[InequalityReport]:
    rng = ctx.rng_for("czd")
    theta1 = ctx.theta * (ctx.regularity.l0 + 1.0)
    fs = random_fields(ctx.spec, rng, 10)
    fractions = (0.2, 0.45, 0.7)
    violations = 0
    slack_max = 0.0
    count = 0
    for i, f in enumerate(fs):
        x = np.abs(f.field)
        if x.max() == 0:
            continue
        root, peak = _dyadic_pavg_stats(x, theta1, ctx.rho.rho.field, ctx.lattice)
        lam = max(1.05 * root, fractions[i % 3] * peak)
        if lam >= peak:
            lam = 0.5 * (root + peak)
        if lam <= 0:
            continue
        d = decompose(f, lam, theta1, ctx.rho, ctx.lattice)
        rep = verify_czd(d, f)
        count += 1
        if not rep.passed:
            violations += 1
        slack_max = max(slack_max, rep.measure_slack)
    return [
        InequalityReport.build(_tag("czd", "properties"), float(violations), 1.0, {}, count, ceiling=0.0),
        InequalityReport.build(_tag("czd", "measure_slack"), slack_max, 1.0, {}, count, ceiling=1.0 + 1e-12),
    ]


def suite_covering(ctx: LabContext) -> list[InequalityReport]:
    rng = ctx.rng_for("covering")
    budget = exponent_budget(ctx.regularity.l0, ctx.theta, 2.0, 3.0, ctx.spec.n)
    spikes = random_fields(ctx.spec, rng, 5, kind="spike")
    violations = 0
    emp = 0.0
    count = 0
    for f in spikes:
        x = np.abs(f.field)
        if x.max() == 0:
            continue
        root, peak = _dyadic_pavg_stats(x, budget.eta2, ctx.rho.rho.field, ctx.lattice)
        lam = 0.5 * (root + peak) if peak > root else 0.9 * peak
        if lam <= 0:
            continue
        rep = covering_check(
            f, lam, budget, ctx.rho, ctx.regularity.C0, ctx.regularity.l0, ctx.lattice, ctx.ladder
        )
        count += 1
        violations += rep.violations
        emp = max(emp, rep.empirical_constant)
    return [
        InequalityReport.build(_tag("covering", "containment"), float(violations), 1.0, {}, count, ceiling=0.0),
        InequalityReport.build(_tag("covering", "empirical_constant"), emp, 1.0, {}, count),
    ]


def suite_rdf(ctx: LabContext) -> list[InequalityReport]:
    rng = ctx.rng_for("rdf")
    s = 2.0
    cfg = MaximalConfig.cube(ctx.rho, s * ctx.theta, ladder=ctx.ladder)
    hs = random_fields(ctx.spec, rng, 4, kind="smooth")
    worst = {"pointwise": 0.0, "doubling": 0.0, "self_major": 0.0}
    for wname, w in ctx.weights[:2]:
        a_rep = measure_operator_norm(lambda f: maximal(f, cfg), s, w, hs)
        for h in hs:
            res = rdf_majorant(h, cfg, A=a_rep.ratio, p=s, weight=w, K=30, tol=1e-9)
            rep_a, rep_b, rep_c = rdf_properties_check(res, lambda f: maximal(f, cfg), w)
            worst["pointwise"] = max(worst["pointwise"], rep_a.ratio)
            worst["doubling"] = max(worst["doubling"], rep_b.ratio)
            worst["self_major"] = max(worst["self_major"], rep_c.ratio / rep_c.ceiling)
    return [
        InequalityReport.build(_tag("rdf", "pointwise_domination"), worst["pointwise"], 1.0, {}, len(hs) * 2, ceiling=0.0),
        InequalityReport.build(_tag("rdf", "norm_doubling"), worst["doubling"], 1.0, {}, len(hs) * 2, ceiling=2.0 + 1e-6),
        InequalityReport.build(_tag("rdf", "self_majorization_rel"), worst["self_major"], 1.0, {}, len(hs) * 2, ceiling=1.0),
    ]


def suite_factorization(ctx: LabContext) -> list[InequalityReport]:
    reports = []
    for p in (1.5, 2.0, 3.0):
        id_err = 0.0
        for wname, w in ctx.weights:
            fact = factorize(w, p, ctx.theta, ctx.rho, ladder=ctx.ladder, K=20, tol=1e-6)
            id_err = max(id_err, fact.product_rel_error)
            reports.append(
                InequalityReport.build(
                    _tag("factorization", f"a1_w1_{wname}_p{p:g}"), fact.a1_constant_w1, 1.0, {}, 1
                )
            )
            reports.append(
                InequalityReport.build(
                    _tag("factorization", f"a1_w2_{wname}_p{p:g}"), fact.a1_constant_w2, 1.0, {}, 1
                )
            )
        reports.append(
            InequalityReport.build(
                _tag("factorization", f"product_identity_p{p:g}"), id_err, 1.0, {}, len(ctx.weights), ceiling=1e-10
            )
        )
    return reports


def suite_extrapolation(ctx: LabContext) -> list[InequalityReport]:
    rng = ctx.rng_for("extrapolation")
    eta = 1.0
    fs = random_fields(ctx.spec, rng, 8)
    cfg = MaximalConfig.cube(ctx.rho, eta, ladder=ctx.ladder)
    pairs = tuple(
        (t_rho_apply(f, ctx.rho, ctx.ladder), maximal(f, cfg)) for f in fs
    )
    family = PairFamily(pairs, descriptor="t_rho_vs_maximal")
    reports = _retag(
        "extrapolation",
        extrapolation_suite(family, 2.0, (0.5, 1.0, 3.0), ctx.weights, q=2.0),
    )
    trivial = PairFamily(tuple((g, g) for g in fs[:4]), descriptor="identical_pairs")
    triv_reports = extrapolation_suite(trivial, 2.0, (0.5, 3.0), ctx.weights[:3], q=2.0)
    for r in triv_reports:
        reports.append(
            InequalityReport(
                _tag("extrapolation", f"trivial_{r.name}"),
                r.lhs,
                r.rhs,
                r.ratio,
                r.worst,
                r.suite_size,
                1.0 + 1e-12,
                r.ratio <= 1.0 + 1e-12,
            )
        )
    reports.extend(
        _retag(
            "extrapolation",
            operator_extrapolation_suite(
                t_rho_operator(ctx.rho, ctx.ladder), 1.0, 2.0, (1.5, 3.0), ctx.weights[:4], fs[:6]
            ),
        )
    )
    pointwise_viol = 0
    bound = 2.0**eta
    for f in fs:
        lhs = t_rho_apply(f, ctx.rho, ctx.ladder).samples
        rhs = bound * maximal(f, cfg).samples
        pointwise_viol += int(np.count_nonzero(lhs > rhs * (1.0 + 1e-12)))
    reports.append(
        InequalityReport.build(
            _tag("extrapolation", "t_rho_pointwise_bound"), float(pointwise_viol), 1.0, {}, len(fs), ceiling=0.0
        )
    )
    return reports


def suite_sharp(ctx: LabContext) -> list[InequalityReport]:
    rng = ctx.rng_for("sharp")
    fs = random_fields(ctx.spec, rng, 4, kind="bump")
    best = 0.0
    for f in fs:
        for wname, w in ctx.weights[:4]:
            rep = sharp_domination_check(f, 2.0, 0.5, 1.0, w, ctx.ladder)
            best = max(best, rep.ratio)
    return [InequalityReport.build(_tag("sharp", "fs_ratio"), best, 1.0, {}, len(fs) * 4)]


_SUITE_FNS = {
    "weights": suite_weights,
    "weak": suite_weak,
    "duality": suite_duality,
    "czd": suite_czd,
    "covering": suite_covering,
    "rdf": suite_rdf,
    "factorization": suite_factorization,
    "extrapolation": suite_extrapolation,
    "sharp": suite_sharp,
}


def run_suite(name: str, ctx: LabContext) -> list[InequalityReport]:
    if name not in _SUITE_FNS:
        raise KeyError(name)
    return _SUITE_FNS[name](ctx)


def run_suites(names, ctx: LabContext) -> list[InequalityReport]:
    out: list[InequalityReport] = []
    for name in names:
        out.extend(run_suite(name, ctx))
    return out
