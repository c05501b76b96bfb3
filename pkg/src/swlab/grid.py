"""Uniform cell-centered lattices on the box [-L, L]^n.

Grid functions, axis-aligned cubes, dyadic lattices, Riemann-sum integration
and the strong / weak Lebesgue norms used throughout the package, plus the
"GFD" on-disk format for grid functions.

Conventions
-----------
* Cells are indexed 0..N-1 per axis; cell i has its center at
  ``-L + (i + 0.5) h`` with ``h = 2 L / N``.
* A function is identified with its cell samples and treated as 0 outside
  the box.  Cubes are clipped to the box; averages divide by the clipped
  volume.
* All integrals are first-order cell-centered Riemann sums,
  ``h**n * sum(samples)``.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

__all__ = [
    "GridSpec",
    "GridFunction",
    "VectorGridFunction",
    "Cube",
    "DyadicLattice",
    "integrate",
    "cube_average",
    "norm",
    "vector_norm_pointwise",
    "side_ladder",
    "window_sum",
    "window_count",
    "sliding_max",
    "block_reduce",
    "block_expand",
    "read_gfd",
    "write_gfd",
]

# slack used when snapping float side lengths / radii to cell indices
_SNAP = 1e-9


@dataclass(frozen=True)
class GridSpec:
    """Geometry of a uniform cell-centered lattice on [-L, L]^n.

    Parameters
    ----------
    n : int
        Spatial dimension, >= 1.
    L : float
        Half-width of the box.
    N : int
        Cells per axis; positive even integer >= 4.
    """

    n: int
    L: float
    N: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"dimension n must be >= 1, got {self.n}")
        if not self.L > 0:
            raise ValueError(f"half_width L must be positive, got {self.L}")
        if self.N < 4 or self.N % 2 != 0:
            raise ValueError(
                f"points_per_axis N must be an even integer >= 4, got {self.N}"
            )

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.n

    @property
    def size(self) -> int:
        return self.N**self.n

    @property
    def cell_volume(self) -> float:
        return self.h**self.n

    @property
    def volume(self) -> float:
        return (2.0 * self.L) ** self.n

    def axis(self) -> np.ndarray:
        """Cell-center coordinates along one axis."""
        return -self.L + (np.arange(self.N) + 0.5) * self.h

    def coordinate_fields(self) -> list[np.ndarray]:
        """Per-axis coordinate arrays broadcast to the full grid shape."""
        return list(np.meshgrid(*([self.axis()] * self.n), indexing="ij"))

    def radius_field(self) -> np.ndarray:
        """|x| at every cell center, full grid shape."""
        coords = self.coordinate_fields()
        return np.sqrt(sum(c * c for c in coords))

    def cell_center(self, idx: tuple[int, ...]) -> tuple[float, ...]:
        return tuple(-self.L + (i + 0.5) * self.h for i in idx)

    def containing_cell(self, point) -> tuple[int, ...]:
        """Index of the cell containing ``point`` (nearest cell center)."""
        out = []
        for x in point:
            i = int(math.floor((x + self.L) / self.h))
            out.append(min(max(i, 0), self.N - 1))
        return tuple(out)


@dataclass(frozen=True)
class GridFunction:
    """Real samples on a :class:`GridSpec`, stored flat in row-major order."""

    spec: GridSpec
    samples: np.ndarray

    def __post_init__(self):
        arr = np.array(self.samples, dtype=float, copy=True).ravel()
        if arr.size != self.spec.size:
            raise ValueError(
                f"expected {self.spec.size} samples, got {arr.size}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("samples must all be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)

    @property
    def field(self) -> np.ndarray:
        """Samples reshaped to the grid shape (read-only view)."""
        return self.samples.reshape(self.spec.shape)

    @classmethod
    def from_field(cls, spec: GridSpec, field) -> "GridFunction":
        return cls(spec, np.asarray(field, dtype=float).ravel())

    @classmethod
    def from_callable(cls, spec: GridSpec, fn) -> "GridFunction":
        """Sample ``fn(*coords)`` at all cell centers (vectorized call)."""
        coords = spec.coordinate_fields()
        vals = np.broadcast_to(np.asarray(fn(*coords), dtype=float), spec.shape)
        return cls(spec, vals.ravel())

    @classmethod
    def constant(cls, spec: GridSpec, value: float) -> "GridFunction":
        return cls(spec, np.full(spec.size, float(value)))

    def _binary(self, other, op) -> "GridFunction":
        if isinstance(other, GridFunction):
            if other.spec != self.spec:
                raise ValueError("grid functions must share a GridSpec")
            return GridFunction(self.spec, op(self.samples, other.samples))
        return GridFunction(self.spec, op(self.samples, float(other)))

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(other, np.divide)

    def __abs__(self):
        return GridFunction(self.spec, np.abs(self.samples))

    def __pow__(self, exponent: float):
        return GridFunction(self.spec, self.samples ** float(exponent))


@dataclass(frozen=True)
class VectorGridFunction:
    """Finite sequence of grid functions on a common lattice."""

    components: tuple[GridFunction, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("vector grid function needs at least one component")
        spec = comps[0].spec
        if any(c.spec != spec for c in comps):
            raise ValueError("all components must share a GridSpec")
        object.__setattr__(self, "components", comps)

    @property
    def spec(self) -> GridSpec:
        return self.components[0].spec

    def __len__(self) -> int:
        return len(self.components)


@dataclass(frozen=True)
class Cube:
    """Axis-aligned cube clipped to the box, as a cell-index range.

    ``lo``/``hi`` are per-axis half-open index ranges of the cells whose
    centers lie in the (unclipped) cube.
    """

    center: tuple[float, ...]
    side: float
    lo: tuple[int, ...]
    hi: tuple[int, ...]

    @classmethod
    def from_center(cls, spec: GridSpec, center, side: float) -> "Cube":
        if side <= 0:
            raise ValueError(f"cube side must be positive, got {side}")
        center = tuple(float(c) for c in center)
        if len(center) != spec.n:
            raise ValueError("center dimension mismatch")
        half = 0.5 * side
        lo, hi = [], []
        for c in center:
            a = int(math.ceil((c - half + spec.L) / spec.h - 0.5 - _SNAP))
            b = int(math.floor((c + half + spec.L) / spec.h - 0.5 + _SNAP)) + 1
            lo.append(max(a, 0))
            hi.append(min(b, spec.N))
        if any(b <= a for a, b in zip(lo, hi)):
            raise ValueError("empty region")
        return cls(center, float(side), tuple(lo), tuple(hi))

    @property
    def slices(self) -> tuple[slice, ...]:
        return tuple(slice(a, b) for a, b in zip(self.lo, self.hi))

    @property
    def cell_count(self) -> int:
        out = 1
        for a, b in zip(self.lo, self.hi):
            out *= b - a
        return out

    def clipped_volume(self, spec: GridSpec) -> float:
        return self.cell_count * spec.cell_volume

    def dilate(self, spec: GridSpec, factor: float) -> "Cube":
        """Center-preserving dilation, clipped to the box."""
        return Cube.from_center(spec, self.center, factor * self.side)

    def descriptor(self) -> dict:
        return {
            "center": list(self.center),
            "side": self.side,
            "lo": list(self.lo),
            "hi": list(self.hi),
        }


@dataclass(frozen=True)
class DyadicLattice:
    """Levels 0..J of dyadic cubes tiling the box.

    Level j cubes have side ``2 L / 2**j`` and are blocks of ``N / 2**j``
    cells per axis; J is the 2-adic depth of N.
    """

    spec: GridSpec
    block_sizes: tuple[int, ...]

    @classmethod
    def for_spec(cls, spec: GridSpec, max_level: int | None = None) -> "DyadicLattice":
        blocks = []
        b = spec.N
        while True:
            blocks.append(b)
            if b % 2 != 0 or b // 2 < 1:
                break
            if max_level is not None and len(blocks) > max_level:
                break
            b //= 2
        return cls(spec, tuple(blocks))

    @property
    def n_levels(self) -> int:
        return len(self.block_sizes)

    def side(self, level: int) -> float:
        return self.block_sizes[level] * self.spec.h

    def blocks_per_axis(self, level: int) -> int:
        return self.spec.N // self.block_sizes[level]

    def cube(self, level: int, idx: tuple[int, ...]) -> Cube:
        b = self.block_sizes[level]
        spec = self.spec
        lo = tuple(i * b for i in idx)
        hi = tuple(i * b + b for i in idx)
        center = tuple(-spec.L + (a + 0.5 * b) * spec.h for a in lo)
        return Cube(center, b * spec.h, lo, hi)

    def iter_cubes(self, level: int):
        m = self.blocks_per_axis(level)
        for flat in range(m**self.spec.n):
            idx = np.unravel_index(flat, (m,) * self.spec.n)
            yield self.cube(level, tuple(int(i) for i in idx))


def integrate(f: GridFunction, region: Cube | None = None) -> float:
    """Cell-centered Riemann sum of f over the box or a clipped cube."""
    if region is None:
        return float(f.samples.sum()) * f.spec.cell_volume
    if region.cell_count == 0:
        raise ValueError("empty region")
    return float(f.field[region.slices].sum()) * f.spec.cell_volume


def cube_average(f: GridFunction, cube: Cube) -> float:
    """Average of |f| over the clipped cube."""
    if cube.cell_count == 0:
        raise ValueError("empty region")
    return float(np.abs(f.field[cube.slices]).sum()) / cube.cell_count


def _weak_norm(absvals: np.ndarray, p: float, wts: np.ndarray, cellvol: float) -> float:
    # sup_t t * mu(|f| > t)^(1/p); on grid data the sup is approached just
    # below each distinct magnitude v, where it equals v * mu(|f| >= v)^(1/p)
    mask = absvals > 0
    if not mask.any():
        return 0.0
    order = np.argsort(absvals, kind="stable")
    asc = absvals[order]
    wasc = wts[order]
    suffix = np.cumsum(wasc[::-1])[::-1] * cellvol
    values = np.unique(asc[asc > 0])
    idx = np.searchsorted(asc, values, side="left")
    return float(np.max(values * suffix[idx] ** (1.0 / p)))


def norm(
    f: GridFunction,
    p: float,
    weight=None,
    mode: str = "strong",
) -> float:
    """Weighted L^p norm (``mode="strong"``) or weak-L^p quasi-norm.

    ``weight`` may be a :class:`GridFunction`, a ``Weight`` wrapper exposing
    ``.values``, or None for Lebesgue measure.  ``p = math.inf`` gives the
    essential sup, which on a grid is the plain max of |f|.
    """
    if not p > 0:
        raise ValueError(f"norm exponent p must be > 0, got {p}")
    if mode not in ("strong", "weak"):
        raise ValueError(f"unknown norm mode {mode!r}")
    a = np.abs(f.samples)
    if weight is None:
        w = np.ones_like(a)
    else:
        wgf = getattr(weight, "values", weight)
        if wgf.spec != f.spec:
            raise ValueError("weight and function must share a GridSpec")
        w = wgf.samples
        if np.min(w) <= 0:
            raise ValueError("weight must be strictly positive")
    if math.isinf(p):
        return float(a.max())
    cellvol = f.spec.cell_volume
    if mode == "strong":
        return float(np.sum(a**p * w) * cellvol) ** (1.0 / p)
    return _weak_norm(a, p, w, cellvol)


def vector_norm_pointwise(F: VectorGridFunction, r: float) -> GridFunction:
    """Pointwise l^r norm across the components of F."""
    if not r > 0:
        raise ValueError(f"aggregation exponent r must be > 0, got {r}")
    stacked = np.stack([np.abs(c.samples) for c in F.components])
    if math.isinf(r):
        agg = stacked.max(axis=0)
    else:
        agg = np.sum(stacked**r, axis=0) ** (1.0 / r)
    return GridFunction(F.spec, agg)


def side_ladder(spec: GridSpec, top: float | None = None, ratio: float = 2.0**0.25) -> tuple[float, ...]:
    """Geometric scale ladder from h up to the box diameter 2 L sqrt(n).

    Used both as cube side lengths and as ball radii; the final rung is
    clamped to ``top`` exactly.
    """
    if top is None:
        top = 2.0 * spec.L * math.sqrt(spec.n)
    rungs = [spec.h]
    while rungs[-1] * ratio < top:
        rungs.append(rungs[-1] * ratio)
    if rungs[-1] < top:
        rungs.append(top)
    return tuple(rungs)


# ---------------------------------------------------------------------------
# window machinery: prefix-sum window sums and sliding maxima
# ---------------------------------------------------------------------------


def _axis_window_sum(arr: np.ndarray, half: int, axis: int) -> np.ndarray:
    m = arr.shape[axis]
    pad_shape = list(arr.shape)
    pad_shape[axis] = 1
    csum = np.concatenate(
        [np.zeros(pad_shape, dtype=float), np.cumsum(arr, axis=axis)], axis=axis
    )
    hi = np.minimum(np.arange(m) + half + 1, m)
    lo = np.maximum(np.arange(m) - half, 0)
    return np.take(csum, hi, axis=axis) - np.take(csum, lo, axis=axis)


def window_sum(field: np.ndarray, half: int) -> np.ndarray:
    """Sum over the (2*half+1)-cell cube window around each cell, zero-padded."""
    out = np.asarray(field, dtype=float)
    for axis in range(out.ndim):
        out = _axis_window_sum(out, half, axis)
    return out


_COUNT_CACHE: dict[tuple[tuple[int, ...], int], np.ndarray] = {}


def window_count(shape: tuple[int, ...], half: int) -> np.ndarray:
    """Number of in-box cells in each window (clipped cube cell counts)."""
    key = (tuple(shape), int(half))
    cached = _COUNT_CACHE.get(key)
    if cached is None:
        cached = window_sum(np.ones(shape), half)
        cached.flags.writeable = False
        _COUNT_CACHE[key] = cached
    return cached


def sliding_max(field: np.ndarray, half: int) -> np.ndarray:
    """Max over the (2*half+1)-cell window around each cell."""
    if half == 0:
        return np.asarray(field, dtype=float).copy()
    return ndimage.maximum_filter(
        np.asarray(field, dtype=float), size=2 * half + 1, mode="constant", cval=-np.inf
    )


def block_reduce(field: np.ndarray, b: int, op: str = "mean") -> np.ndarray:
    """Reduce disjoint b^n blocks of a cubic array with mean/max/sum."""
    n = field.ndim
    m = field.shape[0] // b
    shaped = field.reshape(sum(((m, b),) * n, ()))
    axes = tuple(range(1, 2 * n, 2))
    if op == "mean":
        return shaped.mean(axis=axes)
    if op == "max":
        return shaped.max(axis=axes)
    if op == "sum":
        return shaped.sum(axis=axes)
    raise ValueError(f"unknown block op {op!r}")


def block_expand(coarse: np.ndarray, b: int) -> np.ndarray:
    """Inverse of block_reduce shape-wise: repeat each block value b^n times."""
    out = coarse
    for axis in range(coarse.ndim):
        out = np.repeat(out, b, axis=axis)
    return out


# ---------------------------------------------------------------------------
# GFD file format
# ---------------------------------------------------------------------------

_GFD_DTYPE = "f64le"


def write_gfd(path, f: GridFunction, inline: bool = False, meta: dict | None = None) -> Path:
    """Write a grid function as a GFD manifest (+ sibling .bin payload).

    The manifest is UTF-8 JSON with keys ``dim``, ``points_per_axis``,
    ``half_width``, ``dtype`` ("f64le") and ``payload``, which is either a
    path relative to the manifest or an inline ``base64:`` blob.  The raw
    payload is the row-major little-endian float64 sample array.
    """
    path = Path(path)
    raw = f.samples.astype("<f8").tobytes()
    if inline:
        payload = "base64:" + base64.b64encode(raw).decode("ascii")
    else:
        bin_path = path.with_name(path.name + ".bin")
        bin_path.write_bytes(raw)
        payload = bin_path.name
    manifest = {
        "dim": f.spec.n,
        "points_per_axis": f.spec.N,
        "half_width": f.spec.L,
        "dtype": _GFD_DTYPE,
        "payload": payload,
    }
    if meta is not None:
        manifest["meta"] = meta
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", "utf-8")
    return path


def read_gfd(path) -> GridFunction:
    """Read a GFD manifest; rejects dtype or payload-length mismatches."""
    path = Path(path)
    manifest = json.loads(path.read_text("utf-8"))
    for key in ("dim", "points_per_axis", "half_width", "dtype", "payload"):
        if key not in manifest:
            raise ValueError(f"GFD manifest missing key {key!r}")
    if manifest["dtype"] != _GFD_DTYPE:
        raise ValueError(f"unsupported GFD dtype {manifest['dtype']!r}")
    spec = GridSpec(
        int(manifest["dim"]), float(manifest["half_width"]), int(manifest["points_per_axis"])
    )
    payload = manifest["payload"]
    if payload.startswith("base64:"):
        raw = base64.b64decode(payload[len("base64:"):])
    else:
        raw = (path.parent / payload).read_bytes()
    arr = np.frombuffer(raw, dtype="<f8")
    if arr.size != spec.size:
        raise ValueError(
            f"payload length mismatch: expected {spec.size} samples, got {arr.size}"
        )
    return GridFunction(spec, arr.astype(float))
