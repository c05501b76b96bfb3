"""Stopping-time Calderón-Zygmund decomposition on the dyadic lattice,
its verification checks, and the covering comparison between the centered
maximal operator and dilated selected cubes.

Selection walks the dyadic tree top-down and keeps the maximal cubes whose
penalized average exceeds the level: ``avg_Q |f| / (psi(Q) |Q|) > lam`` with
``psi(Q) = (1 + side/max_Q rho)**theta``.  Children of selected cubes are
not visited, so selected cubes are disjoint and their union equals the
superlevel set of the lattice-restricted dyadic maximal function exactly.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .grid import (
    Cube,
    DyadicLattice,
    GridFunction,
    GridSpec,
    VectorGridFunction,
    block_expand,
    block_reduce,
    vector_norm_pointwise,
)
from .maximal import MaximalConfig, maximal
from .potential import CriticalRadiusField, penalty_multiplier
from .weights import ExponentBudget

__all__ = [
    "SelectedCube",
    "CZDecomposition",
    "decompose",
    "verify_czd",
    "covering_check",
    "CZCheckReport",
    "CoveringReport",
]


@dataclass(frozen=True)
class SelectedCube:
    cube: Cube
    level: int
    index: tuple[int, ...]
    psi: float
    psi_average: float

    def descriptor(self) -> dict:
        d = self.cube.descriptor()
        d.update(level=self.level, index=list(self.index),
                 psi=self.psi, psi_average=self.psi_average)
        return d


def _digest(fields: tuple[GridFunction, ...]) -> str:
    acc = hashlib.sha256()
    for gf in fields:
        acc.update(gf.samples.tobytes())
    return acc.hexdigest()


@dataclass(frozen=True)
class CZDecomposition:
    """Level, selected cubes, superlevel mask, good/bad split and averages.

    ``fprime + fdoubleprime == f`` exactly (componentwise, bit level);
    ``fbar`` is constant on each selected cube, zero elsewhere.
    """

    lam: float
    theta: float
    r: float | None
    cubes: tuple[SelectedCube, ...]
    omega_mask: np.ndarray
    scalar: GridFunction
    fprime: VectorGridFunction
    fdoubleprime: VectorGridFunction
    fbar: VectorGridFunction
    rho: CriticalRadiusField
    input_digest: str

    def __post_init__(self):
        mask = np.asarray(self.omega_mask, dtype=bool).copy()
        mask.flags.writeable = False
        object.__setattr__(self, "omega_mask", mask)

    @property
    def spec(self) -> GridSpec:
        return self.scalar.spec

    def cube_list_rows(self) -> list[dict]:
        return [c.descriptor() for c in self.cubes]


def decompose(
    f: GridFunction | VectorGridFunction,
    lam: float,
    theta: float,
    rho: CriticalRadiusField,
    lattice: DyadicLattice | None = None,
    r: float = 2.0,
) -> CZDecomposition:
    """Stopping-time decomposition of |f| (or the l^r aggregate of a vector
    input) at level lam with psi-penalization exponent theta."""
    if not lam > 0:
        raise ValueError(f"decomposition level must be positive, got {lam}")
    if isinstance(f, VectorGridFunction):
        comps = f.components
        scalar = vector_norm_pointwise(f, r)
        r_used: float | None = r
    else:
        comps = (f,)
        scalar = GridFunction(f.spec, np.abs(f.samples))
        r_used = None
    spec = scalar.spec
    lat = lattice if lattice is not None else DyadicLattice.for_spec(spec)
    x = scalar.field
    rho_f = rho.rho.field
    covered = None
    cell_mask = np.zeros(spec.shape, dtype=bool)
    selected: list[SelectedCube] = []
    fbar_acc = [np.zeros(spec.shape) for _ in comps]
    for level, b in enumerate(lat.block_sizes):
        pen = penalty_multiplier(theta, lat.side(level), block_reduce(rho_f, b, "max"))
        pavg = block_reduce(x, b, "mean") * pen
        if covered is None:
            covered = np.zeros(pavg.shape, dtype=bool)
        sel = (pavg > lam) & ~covered
        if sel.any():
            for idx in np.argwhere(sel):
                tidx = tuple(int(i) for i in idx)
                cube = lat.cube(level, tidx)
                psi_val = float(np.exp(theta * np.log1p(lat.side(level) / rho_f[cube.slices].max())))
                selected.append(
                    SelectedCube(cube, level, tidx, psi_val, float(pavg[tidx]))
                )
            cell_mask |= block_expand(sel, b)
            for k, comp in enumerate(comps):
                cavg = block_reduce(np.abs(comp.field), b, "mean") * pen
                fbar_acc[k] += block_expand(np.where(sel, cavg, 0.0), b)
        covered |= sel
        if level + 1 < lat.n_levels:
            covered = block_expand(covered, 2)
    fprime = tuple(
        GridFunction.from_field(spec, np.where(cell_mask, 0.0, c.field)) for c in comps
    )
    fdouble = tuple(
        GridFunction.from_field(spec, np.where(cell_mask, c.field, 0.0)) for c in comps
    )
    fbar = tuple(GridFunction.from_field(spec, arr) for arr in fbar_acc)
    return CZDecomposition(
        lam=float(lam),
        theta=float(theta),
        r=r_used,
        cubes=tuple(selected),
        omega_mask=cell_mask,
        scalar=scalar,
        fprime=VectorGridFunction(fprime),
        fdoubleprime=VectorGridFunction(fdouble),
        fbar=VectorGridFunction(fbar),
        rho=rho,
        input_digest=_digest(comps),
    )


@dataclass(frozen=True)
class CZCheckReport:
    """Measured margins for the selection properties.

    * ``min_selected_margin``: min over cubes of psi-average - lam (> 0).
    * ``max_average_ratio``: max psi-average / ((4n)**theta 2**n lam) (<= 1).
    * ``outside_dyadic_violations``: cells off the union whose dyadic
      maximal value exceeds lam (0 by construction).
    * ``outside_pointwise_exceed``: cells off the union with |f| > lam
      (reported, not asserted; the guarantee is only psi-weighted).
    * ``measure_slack``: |Omega_lam| * lam / integral |f| (<= 1).
    """

    lam: float
    n_cubes: int
    min_selected_margin: float
    max_average_ratio: float
    outside_dyadic_violations: int
    outside_pointwise_exceed: int
    measure_slack: float
    disjoint: bool
    maximal_cubes: bool

    def to_dict(self) -> dict:
        return {
            "lam": self.lam,
            "n_cubes": self.n_cubes,
            "min_selected_margin": self.min_selected_margin,
            "max_average_ratio": self.max_average_ratio,
            "outside_dyadic_violations": self.outside_dyadic_violations,
            "outside_pointwise_exceed": self.outside_pointwise_exceed,
            "measure_slack": self.measure_slack,
            "disjoint": self.disjoint,
            "maximal_cubes": self.maximal_cubes,
        }

    @property
    def passed(self) -> bool:
        return (
            self.min_selected_margin > 0 or self.n_cubes == 0
        ) and self.max_average_ratio <= 1.0 + 1e-12 and self.outside_dyadic_violations == 0 and self.measure_slack <= 1.0 + 1e-12 and self.disjoint and self.maximal_cubes


def verify_czd(d: CZDecomposition, f: GridFunction | VectorGridFunction) -> CZCheckReport:
    """Recompute the selection properties of a decomposition against f."""
    comps = f.components if isinstance(f, VectorGridFunction) else (f,)
    if _digest(comps) != d.input_digest:
        raise ValueError("decomposition was produced from a different function")
    spec = d.spec
    lat = DyadicLattice.for_spec(spec)
    x = d.scalar.field
    n = spec.n
    margins = []
    ratios = []
    bound = (4.0 * n) ** d.theta * 2.0**n * d.lam
    seen = np.zeros(spec.shape, dtype=bool)
    disjoint = True
    for sc in d.cubes:
        region = x[sc.cube.slices]
        avg = region.mean() / sc.psi
        margins.append(avg - d.lam)
        ratios.append(avg / bound)
        if seen[sc.cube.slices].any():
            disjoint = False
        seen[sc.cube.slices] = True
    # dyadic-average form of the outside bound: the lattice-restricted dyadic
    # maximal function must not exceed lam off the selected union
    rho_f = d.rho.rho.field
    dyadic_max = np.full(spec.shape, -np.inf)
    for level, b in enumerate(lat.block_sizes):
        pen = penalty_multiplier(d.theta, lat.side(level), block_reduce(rho_f, b, "max"))
        pavg = block_reduce(x, b, "mean") * pen
        dyadic_max = np.maximum(dyadic_max, block_expand(pavg, b))
    outside = ~d.omega_mask
    dyadic_viol = int(np.count_nonzero(outside & (dyadic_max > d.lam)))
    pointwise = int(np.count_nonzero(outside & (x > d.lam)))
    omega_measure = float(d.omega_mask.sum()) * spec.cell_volume
    total = float(np.abs(x).sum()) * spec.cell_volume
    slack = omega_measure * d.lam / total if total > 0 else 0.0
    maximal_ok = _selected_cubes_maximal(d, lat, x)
    return CZCheckReport(
        lam=d.lam,
        n_cubes=len(d.cubes),
        min_selected_margin=float(min(margins)) if margins else math.inf,
        max_average_ratio=float(max(ratios)) if ratios else 0.0,
        outside_dyadic_violations=dyadic_viol,
        outside_pointwise_exceed=pointwise,
        measure_slack=slack,
        disjoint=disjoint,
        maximal_cubes=maximal_ok,
    )


def _selected_cubes_maximal(d: CZDecomposition, lat: DyadicLattice, x: np.ndarray) -> bool:
    rho_f = d.rho.rho.field
    for sc in d.cubes:
        b = lat.block_sizes[sc.level]
        idx = sc.index
        for anc_level in range(sc.level):
            ab = lat.block_sizes[anc_level]
            aidx = tuple((i * b) // ab for i in idx)
            cube = lat.cube(anc_level, aidx)
            pen = float(
                penalty_multiplier(
                    d.theta, lat.side(anc_level), rho_f[cube.slices].max()
                )
            )
            if x[cube.slices].mean() * pen > d.lam:
                return False
    return True


@dataclass(frozen=True)
class CoveringReport:
    """Containment of the centered-maximal superlevel set in dilated cubes."""

    lam: float
    c0_log: float
    violations: int
    n_cubes: int
    empirical_constant: float

    def to_dict(self) -> dict:
        return {
            "lam": self.lam,
            "c0_log": self.c0_log,
            "violations": self.violations,
            "n_cubes": self.n_cubes,
            "empirical_constant": self.empirical_constant,
        }

    @property
    def passed(self) -> bool:
        return self.violations == 0


def covering_check(
    f: GridFunction,
    lam: float,
    budget: ExponentBudget,
    rho: CriticalRadiusField,
    C0: float,
    l0: float,
    lattice: DyadicLattice | None = None,
    ladder: tuple[float, ...] | None = None,
) -> CoveringReport:
    """Check ``{M'_{eta3} f > c0 lam} subset union of 2 Q_j`` where the Q_j
    come from the decomposition at exponent eta2 and
    ``c0 = C0**2 4**(l0+1+n) (4n)**eta_bar``.

    c0 is astronomically large for realistic budgets, so the comparison is
    done in log space; the report also carries the empirical smallest
    constant for which containment would hold.
    """
    spec = f.spec
    n = spec.n
    d = decompose(f, lam, budget.eta2, rho, lattice)
    centered = maximal(f, MaximalConfig.centered(rho, budget.eta3, ladder=ladder))
    log_c0 = 2.0 * math.log(C0) + (l0 + 1.0 + n) * math.log(4.0) + budget.eta_bar * math.log(4.0 * n)
    with np.errstate(divide="ignore"):
        log_m = np.log(centered.field)
    lhs = log_m > log_c0 + math.log(lam)
    rhs = np.zeros(spec.shape, dtype=bool)
    for sc in d.cubes:
        rhs[sc.cube.dilate(spec, 2.0).slices] = True
    violations = int(np.count_nonzero(lhs & ~rhs))
    outside_vals = centered.field[~rhs]
    emp = float(outside_vals.max() / lam) if outside_vals.size else 0.0
    return CoveringReport(
        lam=float(lam),
        c0_log=log_c0,
        violations=violations,
        n_cubes=len(d.cubes),
        empirical_constant=emp,
    )
