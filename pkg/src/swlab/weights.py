"""Weight-class analysis: penalized A_p constants, duality, the product
rule, penalized BMO norms, and the exponent budget for the vector-valued
maximal inequalities.

The cube family behind every constant is fixed and reported: all dyadic
cubes plus ladder-sided cubes centered at every ``stride``-th grid point.
Penalties are the center-rho form (1 + side/rho(center))**theta throughout
this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import (
    Cube,
    DyadicLattice,
    GridFunction,
    GridSpec,
    block_expand,
    block_reduce,
    side_ladder,
    window_count,
    window_sum,
)
from .maximal import MaximalConfig, maximal, maximal_weighted
from .potential import CriticalRadiusField, penalty_multiplier

__all__ = [
    "Weight",
    "ApReport",
    "ExponentBudget",
    "CubeFamily",
    "ap_cube_products",
    "ap_constant",
    "dual_weight",
    "bmo_norm",
    "exponent_budget",
    "product_a1_check",
]

_SNAP = 1e-9


@dataclass(frozen=True)
class Weight:
    """Strictly positive grid function."""

    values: GridFunction

    def __post_init__(self):
        if np.min(self.values.samples) <= 0:
            raise ValueError("weight samples must be strictly positive")

    @property
    def spec(self) -> GridSpec:
        return self.values.spec

    @classmethod
    def constant(cls, spec: GridSpec, value: float = 1.0) -> "Weight":
        return cls(GridFunction.constant(spec, value))

    @classmethod
    def from_field(cls, spec: GridSpec, field) -> "Weight":
        return cls(GridFunction.from_field(spec, field))


@dataclass(frozen=True)
class CubeFamily:
    """Dyadic cubes plus strided ladder cubes; part of every report."""

    ladder: tuple[float, ...]
    stride: int
    lattice: DyadicLattice

    @classmethod
    def default(cls, spec: GridSpec, stride: int = 4) -> "CubeFamily":
        return cls(side_ladder(spec), stride, DyadicLattice.for_spec(spec))

    def descriptor(self) -> dict:
        return {
            "ladder": list(self.ladder),
            "stride": self.stride,
            "dyadic_levels": self.lattice.n_levels,
        }


def _center_rho_dyadic(rho_field: np.ndarray, lattice: DyadicLattice, level: int) -> np.ndarray:
    """rho at the cell containing each dyadic cube's center (low-side tie)."""
    b = lattice.block_sizes[level]
    n = rho_field.ndim
    m = rho_field.shape[0] // b
    pick = (b - 1) // 2
    idx = tuple(slice(pick, None, b) for _ in range(n))
    out = rho_field[idx]
    assert out.shape == (m,) * n
    return out


@dataclass(frozen=True)
class FamilyValues:
    """Per-cube values of some functional on one slab of the family."""

    kind: str  # "ladder" or "dyadic"
    side: float
    values: np.ndarray
    stride: int = 1
    level: int | None = None


def _locate(spec: GridSpec, family: CubeFamily, part: FamilyValues, flat: int) -> Cube:
    if part.kind == "ladder":
        m = len(range(0, spec.N, family.stride))
        idx = np.unravel_index(flat, (m,) * spec.n)
        cell = tuple(int(i) * family.stride for i in idx)
        return Cube.from_center(spec, spec.cell_center(cell), part.side)
    m = family.lattice.blocks_per_axis(part.level)
    idx = np.unravel_index(flat, (m,) * spec.n)
    return family.lattice.cube(part.level, tuple(int(i) for i in idx))


def ap_cube_products(
    w: Weight,
    p: float,
    theta: float,
    rho: CriticalRadiusField,
    family: CubeFamily | None = None,
) -> tuple[list[FamilyValues], CubeFamily]:
    """Per-cube A_p products over the family, for p > 1.

    Each cube Q contributes
    ``(avg_Q w / Psi) * (avg_Q w**(-1/(p-1)) / Psi)**(p-1)`` with
    Psi = (1 + side/rho(center))**theta and clipped averages.
    """
    if not p > 1:
        raise ValueError(f"per-cube products need p > 1, got {p}")
    spec = w.spec
    fam = family if family is not None else CubeFamily.default(spec)
    wf = w.values.field
    sf = wf ** (-1.0 / (p - 1.0))
    rho_f = rho.rho.field
    sub = (slice(None, None, fam.stride),) * spec.n
    parts: list[FamilyValues] = []
    for s in fam.ladder:
        half = int(s / (2.0 * spec.h) + _SNAP)
        cnt = window_count(spec.shape, half)
        aw = (window_sum(wf, half) / cnt)[sub]
        as_ = (window_sum(sf, half) / cnt)[sub]
        pen = penalty_multiplier(theta, s, rho_f[sub])
        vals = (pen * aw) * (pen * as_) ** (p - 1.0)
        parts.append(FamilyValues("ladder", s, vals.ravel(), stride=fam.stride))
    for level, b in enumerate(fam.lattice.block_sizes):
        aw = block_reduce(wf, b, "mean")
        as_ = block_reduce(sf, b, "mean")
        pen = penalty_multiplier(theta, fam.lattice.side(level), _center_rho_dyadic(rho_f, fam.lattice, level))
        vals = (pen * aw) * (pen * as_) ** (p - 1.0)
        parts.append(FamilyValues("dyadic", fam.lattice.side(level), vals.ravel(), level=level))
    return parts, fam


@dataclass(frozen=True)
class ApReport:
    """Estimated A_p constant with the worst cube and the family used."""

    p: float
    theta: float
    constant: float
    worst_cube: dict
    family: dict

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "theta": self.theta,
            "constant": self.constant,
            "worst_cube": self.worst_cube,
            "family": self.family,
        }


def ap_constant(
    w: Weight,
    p: float,
    theta: float,
    rho: CriticalRadiusField,
    family: CubeFamily | None = None,
) -> ApReport:
    """sup of per-cube A_p products (p > 1) or of M_{V,theta} w / w (p = 1)."""
    if p < 1:
        raise ValueError(f"A_p exponent p must be >= 1, got {p}")
    spec = w.spec
    fam = family if family is not None else CubeFamily.default(spec)
    if p == 1:
        cfg = MaximalConfig.cube(rho, theta, ladder=fam.ladder)
        ratio = maximal(w.values, cfg).samples / w.values.samples
        flat = int(np.argmax(ratio))
        idx = tuple(int(i) for i in np.unravel_index(flat, spec.shape))
        worst = {"center": list(spec.cell_center(idx)), "side": 0.0, "kind": "point"}
        return ApReport(1.0, theta, float(ratio[flat]), worst, fam.descriptor())
    parts, fam = ap_cube_products(w, p, theta, rho, fam)
    best = -np.inf
    worst = None
    for part in parts:
        flat = int(np.argmax(part.values))
        if part.values[flat] > best:
            best = float(part.values[flat])
            worst = _locate(spec, fam, part, flat).descriptor()
    return ApReport(p, theta, best, worst or {}, fam.descriptor())


def dual_weight(w: Weight, p: float) -> Weight:
    """w**(-1/(p-1)), the weight dual to w at exponent p."""
    if p == 1:
        raise ValueError("dual undefined at p=1")
    if not p > 1:
        raise ValueError(f"duality needs p > 1, got {p}")
    return Weight(GridFunction(w.spec, w.values.samples ** (-1.0 / (p - 1.0))))


def bmo_norm(
    f: GridFunction,
    theta: float,
    rho: CriticalRadiusField,
    family: CubeFamily | None = None,
) -> float:
    """sup over the cube family of penalized mean oscillation
    (1/(Psi |Q|)) * integral_Q |f - f_Q|."""
    spec = f.spec
    fam = family if family is not None else CubeFamily.default(spec)
    x = f.field
    rho_f = rho.rho.field
    sub = (slice(None, None, fam.stride),) * spec.n
    best = 0.0
    for s in fam.ladder:
        half = int(s / (2.0 * spec.h) + _SNAP)
        cnt = window_count(spec.shape, half)
        mean = window_sum(x, half) / cnt
        padded = np.pad(x, half)
        inside = np.pad(np.ones(spec.shape), half)
        mean_sub = mean[sub]
        cnt_sub = cnt[sub]
        osc = np.zeros(mean_sub.shape)
        offsets = np.meshgrid(*([np.arange(-half, half + 1)] * spec.n), indexing="ij")
        starts = [np.arange(0, spec.N, fam.stride) + half for _ in range(spec.n)]
        for o in zip(*(g.ravel() for g in offsets)):
            sl = tuple(ix + od for ix, od in zip(np.ix_(*starts), o))
            osc += np.abs(padded[sl] - mean_sub) * inside[sl]
        pen = penalty_multiplier(theta, s, rho_f[sub])
        best = max(best, float((osc / cnt_sub * pen).max()))
    for level, b in enumerate(fam.lattice.block_sizes):
        mean = block_reduce(x, b, "mean")
        osc = block_reduce(np.abs(x - block_expand(mean, b)), b, "mean")
        pen = penalty_multiplier(theta, fam.lattice.side(level), _center_rho_dyadic(rho_f, fam.lattice, level))
        best = max(best, float((osc * pen).max()))
    return best


@dataclass(frozen=True)
class ExponentBudget:
    """Exponent bookkeeping for the vector-valued maximal inequality.

    ``eta = p0 * theta0`` with ``p0 = 4 (l0+1)**5 (p + conj((r+1)/2))`` and
    ``theta0 = p ((3 theta + n) p + (l0+1) n)``; the derived chain divides
    eta by powers of (l0 + 1).
    """

    l0: float
    theta: float
    p: float
    r: float
    n: int
    p0: float
    theta0: float
    eta: float
    theta1: float
    theta2: float
    eta_bar: float
    eta3: float
    eta2: float
    eta1: float

    def to_dict(self) -> dict:
        return {
            "l0": self.l0,
            "theta": self.theta,
            "p": self.p,
            "r": self.r,
            "n": self.n,
            "p0": self.p0,
            "theta0": self.theta0,
            "eta": self.eta,
            "theta1": self.theta1,
            "theta2": self.theta2,
            "eta_bar": self.eta_bar,
            "eta3": self.eta3,
            "eta2": self.eta2,
            "eta1": self.eta1,
        }


def _conjugate(x: float) -> float:
    if not x > 1:
        raise ValueError(f"Hölder conjugate undefined for exponent {x} <= 1")
    return x / (x - 1.0)


def exponent_budget(l0: float, theta: float, p: float, r: float, n: int) -> ExponentBudget:
    """Evaluate the full exponent chain; see :class:`ExponentBudget`."""
    if not l0 > 0:
        raise ValueError(f"l0 must be positive, got {l0}")
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if not r > 1:
        raise ValueError(f"r must exceed 1, got {r}")
    if theta < 0:
        raise ValueError(f"theta must be nonnegative, got {theta}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    grow = l0 + 1.0
    p0 = 4.0 * grow**5 * (p + _conjugate((r + 1.0) / 2.0))
    theta0 = p * ((3.0 * theta + n) * p + grow * n)
    eta = p0 * theta0
    eta_bar = eta / (2.0 * grow**2)
    return ExponentBudget(
        l0=float(l0),
        theta=float(theta),
        p=float(p),
        r=float(r),
        n=int(n),
        p0=p0,
        theta0=theta0,
        eta=eta,
        theta1=theta * grow,
        theta2=theta * grow**2,
        eta_bar=eta_bar,
        eta3=eta_bar / grow,
        eta2=eta_bar / grow**2,
        eta1=eta_bar / grow**3,
    )


@dataclass(frozen=True)
class ProductWeightReport:
    """Certificates for the product rule w1 * w2 with w2 in A_1(w1)."""

    a1_relative_constant: float
    product_report: ApReport

    def to_dict(self) -> dict:
        return {
            "a1_relative_constant": self.a1_relative_constant,
            "product_report": self.product_report.to_dict(),
        }


def product_a1_check(
    w1: Weight,
    w2: Weight,
    p: float,
    theta: float,
    rho: CriticalRadiusField,
    family: CubeFamily | None = None,
) -> ProductWeightReport:
    """Measure sup M_{w1} w2 / w2 and the A_p constant of w1*w2 at
    penalization exponent theta*p."""
    rel = maximal_weighted(w2.values, w1).samples / w2.values.samples
    product = Weight(GridFunction(w1.spec, w1.values.samples * w2.values.samples))
    report = ap_constant(product, p, theta * p, rho, family)
    return ProductWeightReport(float(rel.max()), report)
