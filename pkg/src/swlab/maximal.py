"""Penalized maximal operators over cube families.

Four variants share one evaluation engine:

* ``cube``      sup over cubes containing x, penalty (1 + side/rho(center))**theta
* ``centered``  sup over cubes centered at x, penalty (1 + side/rho(x))**theta
* ``dyadic``    sup over dyadic cubes, penalty (1 + side/max_Q rho)**theta
* ``phi``       sup over cubes containing x, penalty (1 + side)**eta, no rho

Grid data is piecewise constant on cells, so the sub-cell scale limit of the
sup contributes |f(x)| with penalty 1; all families include that term by
default (``sub_cell_term``).  The stopping-time decomposition disables it to
keep the dyadic superlevel sets exactly equal to unions of selected cubes.

Cube averages use prefix-sum window sums (exact up to float accumulation);
the sup over cube positions containing a point is a sliding window maximum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .grid import (
    DyadicLattice,
    GridFunction,
    GridSpec,
    VectorGridFunction,
    block_expand,
    block_reduce,
    side_ladder,
    sliding_max,
    vector_norm_pointwise,
    window_count,
    window_sum,
)
from .potential import CriticalRadiusField, penalty_multiplier

__all__ = [
    "MaximalConfig",
    "maximal",
    "maximal_power",
    "maximal_weighted",
    "sharp_maximal",
    "maximal_vector",
]

_SNAP = 1e-9

_VARIANTS = ("cube", "dyadic", "centered", "phi")


@dataclass(frozen=True)
class MaximalConfig:
    """Variant, penalization exponent and cube family of a maximal operator."""

    variant: str
    exponent: float
    rho: CriticalRadiusField | None = None
    ladder: tuple[float, ...] | None = None
    lattice: DyadicLattice | None = None
    sub_cell_term: bool = True

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown maximal variant {self.variant!r}")
        if self.exponent < 0:
            raise ValueError("penalization exponent must be nonnegative")
        if self.variant != "phi" and self.rho is None:
            raise ValueError(f"variant {self.variant!r} requires a rho field")

    @classmethod
    def cube(cls, rho: CriticalRadiusField, theta: float, ladder=None, sub_cell_term=True):
        return cls("cube", theta, rho, ladder, None, sub_cell_term)

    @classmethod
    def centered(cls, rho: CriticalRadiusField, theta: float, ladder=None, sub_cell_term=True):
        return cls("centered", theta, rho, ladder, None, sub_cell_term)

    @classmethod
    def dyadic(cls, rho: CriticalRadiusField, theta: float, lattice=None, sub_cell_term=True):
        return cls("dyadic", theta, rho, None, lattice, sub_cell_term)

    @classmethod
    def phi(cls, eta: float, ladder=None, sub_cell_term=True):
        return cls("phi", eta, None, ladder, None, sub_cell_term)

    def with_exponent(self, exponent: float) -> "MaximalConfig":
        return replace(self, exponent=exponent)


def _resolve_ladder(cfg: MaximalConfig, spec: GridSpec) -> tuple[float, ...]:
    return cfg.ladder if cfg.ladder is not None else side_ladder(spec)


def _check_geometry(cfg: MaximalConfig, spec: GridSpec):
    if cfg.rho is not None and cfg.rho.spec != spec:
        raise ValueError("function and rho field must share a GridSpec")


def maximal(f: GridFunction, cfg: MaximalConfig) -> GridFunction:
    """Pointwise sup of penalized |f| averages over the configured family."""
    spec = f.spec
    _check_geometry(cfg, spec)
    x = np.abs(f.field)
    best = x.copy() if cfg.sub_cell_term else np.full(spec.shape, -np.inf)
    theta = cfg.exponent

    if cfg.variant == "dyadic":
        lat = cfg.lattice if cfg.lattice is not None else DyadicLattice.for_spec(spec)
        rho_f = cfg.rho.rho.field
        for level, b in enumerate(lat.block_sizes):
            avg = block_reduce(x, b, "mean")
            pen = penalty_multiplier(theta, lat.side(level), block_reduce(rho_f, b, "max"))
            np.maximum(best, block_expand(avg * pen, b), out=best)
        return GridFunction.from_field(spec, best)

    ladder = _resolve_ladder(cfg, spec)
    if cfg.variant == "phi":
        for s in ladder:
            half = int(s / (2.0 * spec.h) + _SNAP)
            avg = window_sum(x, half) / window_count(spec.shape, half)
            pen = math.exp(-theta * math.log1p(s))
            np.maximum(best, sliding_max(avg, half) * pen, out=best)
        return GridFunction.from_field(spec, best)

    rho_f = cfg.rho.rho.field
    for s in ladder:
        half = int(s / (2.0 * spec.h) + _SNAP)
        avg = window_sum(x, half) / window_count(spec.shape, half)
        pen = penalty_multiplier(theta, s, rho_f)
        if cfg.variant == "cube":
            np.maximum(best, sliding_max(avg * pen, half), out=best)
        else:  # centered: penalty reads rho at the evaluation point itself
            np.maximum(best, avg * pen, out=best)
    return GridFunction.from_field(spec, best)


def maximal_power(f: GridFunction, delta: float, cfg: MaximalConfig) -> GridFunction:
    """maximal(|f|**delta, cfg)**(1/delta) for 0 < delta <= 1."""
    if not 0 < delta <= 1:
        raise ValueError(f"power delta must lie in (0, 1], got {delta}")
    powered = GridFunction(f.spec, np.abs(f.samples) ** delta)
    return GridFunction(f.spec, maximal(powered, cfg).samples ** (1.0 / delta))


def maximal_weighted(f: GridFunction, weight, ladder=None) -> GridFunction:
    """sup over cubes B containing x of (1/w(5B)) * integral_B |f| w.

    The 5-fold dilate is taken in cell units (a w-cell window dilates to the
    5w-cell window) and clipped to the box.
    """
    wgf = getattr(weight, "values", weight)
    spec = f.spec
    if wgf.spec != spec:
        raise ValueError("function and weight must share a GridSpec")
    wf = wgf.field
    if wf.min() <= 0:
        raise ValueError("weight must be strictly positive")
    num_src = np.abs(f.field) * wf
    rungs = ladder if ladder is not None else side_ladder(spec)
    best = np.full(spec.shape, -np.inf)
    for s in rungs:
        half = int(s / (2.0 * spec.h) + _SNAP)
        half5 = 5 * half + 2
        num = window_sum(num_src, half)
        den = window_sum(wf, half5)
        if den.min() <= 0:
            raise ValueError("dilated weight mass vanished on some window")
        np.maximum(best, sliding_max(num / den, half), out=best)
    return GridFunction.from_field(spec, best)


def sharp_maximal(
    f: GridFunction,
    eta: float,
    delta: float | None = None,
    ladder=None,
) -> GridFunction:
    """Scale-split sharp function: small-cube mean oscillation plus
    (1+side)**eta-penalized averages over cubes of side >= 1.

    With ``delta`` given, applies the composition M(|f|**delta)**(1/delta).
    """
    spec = f.spec
    if spec.L <= 1:
        raise ValueError("no large-cube scale")
    if delta is not None:
        if not 0 < delta <= 1:
            raise ValueError(f"power delta must lie in (0, 1], got {delta}")
        powered = GridFunction(spec, np.abs(f.samples) ** delta)
        return GridFunction(spec, sharp_maximal(powered, eta, None, ladder).samples ** (1.0 / delta))

    rungs = ladder if ladder is not None else side_ladder(spec)
    x = f.field
    absx = np.abs(x)
    osc_best = np.zeros(spec.shape)
    avg_best = np.zeros(spec.shape)
    padded_cache: dict[int, np.ndarray] = {}
    for s in rungs:
        half = int(s / (2.0 * spec.h) + _SNAP)
        cnt = window_count(spec.shape, half)
        if s < 1.0:
            mean = window_sum(x, half) / cnt
            padded = padded_cache.get(half)
            if padded is None:
                padded = np.pad(x, half)
                padded_cache[half] = padded
            osc = np.zeros(spec.shape)
            core = tuple(slice(half, half + spec.N) for _ in range(spec.n))
            inside = np.pad(np.ones(spec.shape), half)
            offsets = np.meshgrid(*([np.arange(-half, half + 1)] * spec.n), indexing="ij")
            for o in zip(*(g.ravel() for g in offsets)):
                sl = tuple(slice(half + od, half + od + spec.N) for od in o)
                osc += np.abs(padded[sl] - mean) * inside[sl]
            np.maximum(osc_best, sliding_max(osc / cnt, half), out=osc_best)
        else:
            avg = window_sum(absx, half) / cnt
            pen = math.exp(-eta * math.log1p(s))
            np.maximum(avg_best, sliding_max(avg, half) * pen, out=avg_best)
    return GridFunction.from_field(spec, osc_best + avg_best)


def maximal_vector(F: VectorGridFunction, cfg: MaximalConfig, r: float) -> GridFunction:
    """Componentwise maximal operator followed by the pointwise l^r norm."""
    if not r > 1:
        raise ValueError(f"aggregation exponent r must exceed 1, got {r}")
    parts = VectorGridFunction(tuple(maximal(c, cfg) for c in F.components))
    return vector_norm_pointwise(parts, r)
