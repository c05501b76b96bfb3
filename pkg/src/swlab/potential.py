"""Nonnegative potentials, reverse Hölder diagnostics, and the critical
radius field rho(x) = 1/m_V(x) that sets the natural scale of -Delta + V.

rho(x) is the largest r with ``r**(2-n) * integral_{B(x,r)} V <= 1``.  The
solver scans a geometric radius ladder with digitized Euclidean balls and
refines each cell's value by bisection on the exact discrete ball integral.
Potentials carrying a closed-form tag are evaluated beyond the box so the
ball integrals are not truncated at the boundary; untagged potentials are
extended by zero and large-radius clamping is flagged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import Cube, GridFunction, GridSpec, side_ladder, sliding_max, window_count, window_sum

__all__ = [
    "Potential",
    "ReverseHolderReport",
    "CriticalRadiusField",
    "RegularityEstimate",
    "check_reverse_holder",
    "critical_radius_field",
    "psi_ball",
    "psi_cube_dyadic",
    "penalty_multiplier",
    "regularity_violation",
    "fit_regularity",
]

_SNAP = 1e-9


@dataclass(frozen=True)
class Potential:
    """Nonnegative, not identically zero potential sampled on a grid.

    ``closed_form`` is an optional tag ("one" or "square_norm") naming an
    analytic extension used when ball integrals reach beyond the box; the
    tag must agree with the samples to 1e-10.
    """

    values: GridFunction
    closed_form: str | None = None

    def __post_init__(self):
        s = self.values.samples
        if np.min(s) < 0:
            raise ValueError("potential samples must be nonnegative")
        if np.max(s) == 0:
            raise ValueError("potential must not vanish identically")
        if self.closed_form is not None:
            ref = self._closed_form_samples()
            if not np.allclose(s, ref, rtol=1e-10, atol=1e-10):
                raise ValueError(
                    f"samples disagree with closed form {self.closed_form!r}"
                )

    def _closed_form_samples(self) -> np.ndarray:
        spec = self.values.spec
        if self.closed_form == "one":
            return np.ones(spec.size)
        if self.closed_form == "square_norm":
            return (spec.radius_field() ** 2).ravel()
        raise ValueError(f"unknown closed form tag {self.closed_form!r}")

    @classmethod
    def one(cls, spec: GridSpec) -> "Potential":
        return cls(GridFunction.constant(spec, 1.0), "one")

    @classmethod
    def square_norm(cls, spec: GridSpec) -> "Potential":
        return cls(GridFunction.from_field(spec, spec.radius_field() ** 2), "square_norm")

    @classmethod
    def from_samples(cls, gf: GridFunction) -> "Potential":
        return cls(gf, None)

    @property
    def spec(self) -> GridSpec:
        return self.values.spec

    def padded_field(self, pad: int) -> np.ndarray:
        """Samples on the lattice extended by ``pad`` cells per side."""
        spec = self.spec
        if self.closed_form is None:
            return np.pad(self.values.field, pad)
        axis = -spec.L + (np.arange(-pad, spec.N + pad) + 0.5) * spec.h
        grids = np.meshgrid(*([axis] * spec.n), indexing="ij")
        if self.closed_form == "one":
            return np.ones(grids[0].shape)
        return sum(g * g for g in grids)


@dataclass(frozen=True)
class ReverseHolderReport:
    """sup over a ball family of (avg V^q)^(1/q) / avg V; q may be inf."""

    q: float
    constant: float
    worst_ball: dict

    def to_dict(self) -> dict:
        return {"q": self.q, "constant": self.constant, "worst_ball": self.worst_ball}


def check_reverse_holder(
    V: Potential,
    q: float,
    ladder: tuple[float, ...] | None = None,
    stride: int = 1,
) -> ReverseHolderReport:
    """Empirical reverse Hölder constant of V over a family of balls.

    Balls B(x, r) are realized as the grid cubes of side 2r around lattice
    centers, clipped to the box.  ``q = math.inf`` uses the window max in
    place of the q-th power mean.
    """
    if not q > 1:
        raise ValueError(f"reverse Hölder exponent must exceed 1, got {q}")
    spec = V.spec
    radii = ladder if ladder is not None else side_ladder(spec)
    vf = V.values.field
    vq = None if math.isinf(q) else vf**q
    sub = (slice(None, None, stride),) * spec.n
    best = -np.inf
    worst = None
    for r in radii:
        half = int(r / spec.h + _SNAP)
        cnt = window_count(spec.shape, half)[sub]
        mean_v = window_sum(vf, half)[sub] / cnt
        if math.isinf(q):
            num = sliding_max(vf, half)[sub]
        else:
            num = (window_sum(vq, half)[sub] / cnt) ** (1.0 / q)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(mean_v > 0, num / mean_v, np.where(num > 0, np.inf, -np.inf))
        flat = int(np.argmax(ratio))
        if ratio.ravel()[flat] > best:
            best = float(ratio.ravel()[flat])
            idx = tuple(int(i) * stride for i in np.unravel_index(flat, ratio.shape))
            worst = {"center": list(spec.cell_center(idx)), "radius": r}
    return ReverseHolderReport(q=q, constant=best, worst_ball=worst or {})


@dataclass(frozen=True)
class CriticalRadiusField:
    """rho samples plus the radius ladder and refinement tolerance used.

    ``clamped`` marks cells where even the top radius satisfied the
    constraint (the box truncates the sup there); ``floored`` marks cells
    where no radius did.
    """

    rho: GridFunction
    radii_ladder: tuple[float, ...]
    tolerance: float
    clamped: np.ndarray
    floored: np.ndarray

    def __post_init__(self):
        if np.min(self.rho.samples) <= 0:
            raise ValueError("rho samples must be positive")
        for name in ("clamped", "floored"):
            arr = np.asarray(getattr(self, name), dtype=bool).copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def spec(self) -> GridSpec:
        return self.rho.spec

    @property
    def clamped_fraction(self) -> float:
        return float(self.clamped.mean())

    def m_field(self) -> GridFunction:
        """m_V = 1 / rho."""
        return GridFunction(self.spec, 1.0 / self.rho.samples)

    def at_point(self, point) -> float:
        idx = self.spec.containing_cell(point)
        return float(self.rho.field[idx])

    @classmethod
    def constant(cls, spec: GridSpec, value: float = 1.0) -> "CriticalRadiusField":
        """Constant field, e.g. rho == 1 for the unpenalized-by-scale setting."""
        return cls(
            GridFunction.constant(spec, value),
            side_ladder(spec),
            0.0,
            np.zeros(spec.shape, dtype=bool),
            np.zeros(spec.shape, dtype=bool),
        )


def _ball_offsets(spec: GridSpec, r_lo: float, r_hi: float):
    """Integer cell offsets with r_lo < |o| h <= r_hi, and their distances."""
    h = spec.h
    amax = int(r_hi / h + _SNAP)
    rng = np.arange(-amax, amax + 1)
    grids = np.meshgrid(*([rng] * spec.n), indexing="ij")
    offs = np.stack([g.ravel() for g in grids], axis=-1)
    d2 = (offs.astype(float) ** 2).sum(axis=-1) * h * h
    slack = _SNAP * h * h
    keep = (d2 <= r_hi * r_hi + slack) & (d2 > r_lo * r_lo + slack)
    return offs[keep], np.sqrt(d2[keep])


def _ball_mass_ladder(vpad: np.ndarray, spec: GridSpec, pad: int, radii: np.ndarray) -> np.ndarray:
    """integral over B(x, r) of the padded potential, for every cell x and
    ladder radius r; slab decomposition over prefix sums along the last axis.

    Ball mass is nondecreasing in r, so once every cell's mass at rung k
    exceeds the worst remaining ``r**(n-2)`` the constraint fails everywhere
    on all later rungs; those are marked +inf and skipped.
    """
    h, n, N = spec.h, spec.n, spec.N
    lead = vpad.shape[:-1]
    pref = np.concatenate(
        [np.zeros(lead + (1,)), np.cumsum(vpad, axis=-1)], axis=-1
    )
    out = np.zeros((len(radii),) + spec.shape)
    slack = _SNAP * h * h
    cellvol = spec.cell_volume
    top = radii[-1]
    for k, r in enumerate(radii):
        amax = int(r / h + _SNAP)
        if n == 1:
            lead_offs = np.zeros((1, 0), dtype=int)
        else:
            rng = np.arange(-amax, amax + 1)
            grids = np.meshgrid(*([rng] * (n - 1)), indexing="ij")
            lead_offs = np.stack([g.ravel() for g in grids], axis=-1)
        d2 = (lead_offs.astype(float) ** 2).sum(axis=-1) * h * h
        keep = d2 <= r * r + slack
        lead_offs = lead_offs[keep]
        rem = np.maximum(r * r - d2[keep], 0.0)
        spans = (np.sqrt(rem) / h + _SNAP).astype(int)
        acc = out[k]
        for o, a in zip(lead_offs, spans):
            rows = pref[tuple(slice(pad + od, pad + od + N) for od in o)]
            acc += rows[..., pad + a + 1 : pad + a + 1 + N]
            acc -= rows[..., pad - a : pad - a + N]
        threshold = top ** (n - 2) if n >= 3 else r ** (n - 2)
        if k + 1 < len(radii) and float(acc.min()) * cellvol > threshold * (1.0 + 1e-12):
            out[k + 1 :] = np.inf
            break
    return out * cellvol


def _refine_bracket(
    vpad: np.ndarray,
    spec: GridSpec,
    pad: int,
    flat_pts: np.ndarray,
    r_lo: float,
    r_hi: float,
    base_mass: np.ndarray,
    tol: float,
) -> np.ndarray:
    """Bisect r in (r_lo, r_hi] for the boundary of {r : r**(2-n) I(x,r) <= 1},
    per point, on the exact digitized ball integral."""
    n, h = spec.n, spec.h
    offs, dists = _ball_offsets(spec, r_lo, r_hi)
    order = np.argsort(dists, kind="stable")
    offs, dists = offs[order], dists[order]
    pad_shape = vpad.shape
    strides = np.array([int(np.prod(pad_shape[d + 1 :])) for d in range(n)])
    off_lin = offs @ strides
    pts_nd = np.stack(np.unravel_index(flat_pts, spec.shape), axis=-1) + pad
    pts_lin = pts_nd @ strides
    vflat = vpad.ravel()
    cellvol = spec.cell_volume
    out = np.empty(len(flat_pts))
    max_iter = 80
    chunk = max(1, int(4_000_000 / max(len(offs), 1)))
    for beg in range(0, len(flat_pts), chunk):
        end = min(beg + chunk, len(flat_pts))
        if len(offs):
            gathered = vflat[pts_lin[beg:end, None] + off_lin[None, :]]
            csum = np.cumsum(gathered, axis=1) * cellvol
        else:
            csum = np.zeros((end - beg, 0))
        base = base_mass[beg:end]
        lo = np.full(end - beg, r_lo)
        hi = np.full(end - beg, r_hi)
        for _ in range(max_iter):
            live = (hi - lo) > tol * np.maximum(lo, 1e-3 * h)
            if not live.any():
                break
            mid = np.where(live, 0.5 * (lo + hi), lo)
            j = np.searchsorted(dists, mid, side="right")
            mass = base + np.where(j > 0, csum[np.arange(end - beg), j - 1], 0.0)
            g = mid ** (2 - n) * mass if n != 2 else mass
            good = g <= 1.0
            lo = np.where(live & good, mid, lo)
            hi = np.where(live & ~good, mid, hi)
        out[beg:end] = lo
    return out


def critical_radius_field(
    V: Potential,
    tol: float = 1e-4,
    ladder: tuple[float, ...] | None = None,
) -> CriticalRadiusField:
    """Largest ladder radius with ``r**(2-n) integral_{B(x,r)} V <= 1`` at
    each cell, refined by bisection between rungs to relative tolerance."""
    spec = V.spec
    radii = np.asarray(ladder if ladder is not None else side_ladder(spec))
    h, n = spec.h, spec.n
    pad = int(math.ceil(radii[-1] / h)) + 1
    vpad = V.padded_field(pad)
    mass = _ball_mass_ladder(vpad, spec, pad, radii)
    powers = radii ** (2 - n) if n != 2 else np.ones_like(radii)
    g = powers.reshape((-1,) + (1,) * n) * mass
    ok = g <= 1.0
    K = len(radii)
    any_ok = ok.any(axis=0)
    last_ok = (K - 1) - np.argmax(ok[::-1], axis=0)
    kstar = np.where(any_ok, last_ok, -1).ravel()
    rho = np.empty(spec.size)
    clamped = (kstar == K - 1).reshape(spec.shape)
    floored = np.zeros(spec.size, dtype=bool)
    rho[kstar == K - 1] = radii[-1]
    floor_val = h * 1e-3
    mass_flat = mass.reshape(K, -1)
    for k in np.unique(kstar):
        if k == K - 1:
            continue
        pts = np.nonzero(kstar == k)[0]
        if k < 0:
            refined = _refine_bracket(
                vpad, spec, pad, pts, 0.0, float(radii[0]), np.zeros(len(pts)), tol
            )
            # cells where not even tiny radii satisfy the constraint get the
            # floor value and a flag
            bad = refined <= floor_val
            rho[pts] = np.maximum(refined, floor_val)
            floored[pts[bad]] = True
        else:
            refined = _refine_bracket(
                vpad,
                spec,
                pad,
                pts,
                float(radii[k]),
                float(radii[k + 1]),
                mass_flat[k, pts],
                tol,
            )
            rho[pts] = refined
    return CriticalRadiusField(
        GridFunction(spec, rho),
        tuple(float(r) for r in radii),
        tol,
        clamped,
        floored.reshape(spec.shape),
    )


def penalty_multiplier(exponent: float, scale: float, rho_vals: np.ndarray) -> np.ndarray:
    """(1 + scale / rho)**(-exponent), computed in log space so that huge
    exponents underflow to 0 instead of overflowing."""
    if exponent == 0:
        return np.ones_like(np.asarray(rho_vals, dtype=float))
    return np.exp(-exponent * np.log1p(scale / np.asarray(rho_vals, dtype=float)))


def psi_ball(rho: CriticalRadiusField, center, radius: float, theta: float) -> float:
    """(1 + r / rho(x0))**theta with rho read at the cell containing x0."""
    if theta < 0:
        raise ValueError("penalization exponent must be nonnegative")
    r0 = rho.at_point(center)
    return float(np.exp(theta * np.log1p(radius / r0)))


def psi_cube_dyadic(rho: CriticalRadiusField, cube: Cube, theta: float) -> float:
    """(1 + side / max_Q rho)**theta over the cells of a dyadic cube."""
    if theta < 0:
        raise ValueError("penalization exponent must be nonnegative")
    m = float(rho.rho.field[cube.slices].max())
    return float(np.exp(theta * np.log1p(cube.side / m)))


@dataclass(frozen=True)
class RegularityEstimate:
    """Two-sided comparability certificate for m_V over sampled cell pairs."""

    C0: float
    l0: float
    max_violation: float

    def to_dict(self) -> dict:
        return {"C0": self.C0, "l0": self.l0, "max_violation": self.max_violation}


def _pair_stats(rho: CriticalRadiusField, pairs: np.ndarray):
    spec = rho.spec
    m = 1.0 / rho.rho.samples
    xs, ys = pairs[:, 0], pairs[:, 1]
    xi = np.stack(np.unravel_index(xs, spec.shape), axis=-1)
    yi = np.stack(np.unravel_index(ys, spec.shape), axis=-1)
    dist = np.sqrt(((xi - yi) ** 2).sum(axis=-1).astype(float)) * spec.h
    ratio = m[xs] / m[ys]
    scale = 1.0 + dist * m[xs]
    return ratio, scale


def regularity_violation(
    rho: CriticalRadiusField, pairs: np.ndarray, C0: float, l0: float
) -> RegularityEstimate:
    """Worst violation of
    (1/C0)(1+|x-y| m(x))**(-l0) <= m(x)/m(y) <= C0 (1+|x-y| m(x))**(l0/(l0+1))
    over the given pairs of flat cell indices (shape (m, 2))."""
    ratio, scale = _pair_stats(rho, np.asarray(pairs))
    lower = scale ** (-l0) / C0
    upper = C0 * scale ** (l0 / (l0 + 1.0))
    viol = np.maximum(lower - ratio, ratio - upper)
    return RegularityEstimate(C0=float(C0), l0=float(l0), max_violation=float(viol.max()))


_L0_GRID = tuple(np.arange(0.25, 4.0 + 1e-12, 0.25))
_C0_GRID = tuple(np.arange(1.1, 16.0 + 1e-12, 0.15))


def fit_regularity(
    rho: CriticalRadiusField,
    pairs: np.ndarray,
    l0_grid: tuple[float, ...] = _L0_GRID,
    C0_grid: tuple[float, ...] = _C0_GRID,
) -> RegularityEstimate:
    """Smallest certifying (C0, l0) on a fixed candidate grid.

    For each l0 the minimal certifying C0 is computed in closed form; the
    returned pair has the smallest grid C0, ties broken by smaller l0.  If
    nothing certifies, the least-violating pair is returned (violation > 0).
    """
    ratio, scale = _pair_stats(rho, np.asarray(pairs))
    best = None
    for l0 in l0_grid:
        up = ratio / scale ** (l0 / (l0 + 1.0))
        dn = scale ** (-l0) / ratio
        c_req = max(float(up.max()), float(dn.max()), 1.0)
        idx = np.searchsorted(C0_grid, c_req - 1e-12)
        if idx < len(C0_grid):
            cand = (float(C0_grid[idx]), float(l0))
            if best is None or cand < best:
                best = cand
    if best is None:
        worst = (float(C0_grid[-1]), float(l0_grid[0]))
        return regularity_violation(rho, pairs, *worst)
    return regularity_violation(rho, pairs, best[0], best[1])
