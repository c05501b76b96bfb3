import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swlab.grid import (
    Cube,
    DyadicLattice,
    GridFunction,
    GridSpec,
    VectorGridFunction,
    block_expand,
    block_reduce,
    cube_average,
    integrate,
    norm,
    read_gfd,
    side_ladder,
    sliding_max,
    vector_norm_pointwise,
    window_count,
    window_sum,
    write_gfd,
)


@pytest.fixture
def spec2():
    return GridSpec(2, 1.0, 16)


def rng():
    return np.random.default_rng(42)


# ---------------------------------------------------------------------------
# construction and validation


def test_spec_validation():
    with pytest.raises(ValueError):
        GridSpec(0, 1.0, 16)
    with pytest.raises(ValueError):
        GridSpec(2, -1.0, 16)
    with pytest.raises(ValueError):
        GridSpec(2, 1.0, 3)
    with pytest.raises(ValueError):
        GridSpec(2, 1.0, 7)  # odd


def test_spec_geometry(spec2):
    assert spec2.h == pytest.approx(0.125)
    assert spec2.shape == (16, 16)
    assert spec2.cell_volume == pytest.approx(0.125**2)
    ax = spec2.axis()
    assert ax[0] == pytest.approx(-1 + 0.0625)
    assert ax[-1] == pytest.approx(1 - 0.0625)


def test_gridfunction_validation(spec2):
    with pytest.raises(ValueError):
        GridFunction(spec2, np.ones(5))
    bad = np.ones(spec2.size)
    bad[3] = np.nan
    with pytest.raises(ValueError):
        GridFunction(spec2, bad)


def test_gridfunction_immutable(spec2):
    f = GridFunction.constant(spec2, 1.0)
    with pytest.raises(ValueError):
        f.samples[0] = 2.0


def test_vector_validation(spec2):
    with pytest.raises(ValueError):
        VectorGridFunction(())
    other = GridSpec(2, 1.0, 8)
    with pytest.raises(ValueError):
        VectorGridFunction((GridFunction.constant(spec2, 1), GridFunction.constant(other, 1)))


# ---------------------------------------------------------------------------
# integration


def test_integrate_constant_box():
    spec = GridSpec(2, 1.0, 16)
    assert integrate(GridFunction.constant(spec, 1.0)) == pytest.approx(4.0, abs=1e-14)


def test_integrate_odd_function_cancels(spec2):
    f = GridFunction.from_callable(spec2, lambda x, y: x)
    assert abs(integrate(f)) < 1e-12


def test_integrate_half_domain_indicator(spec2):
    f = GridFunction.from_callable(spec2, lambda x, y: (x > 0).astype(float))
    assert integrate(f) == pytest.approx(2.0, abs=spec2.cell_volume)


def test_integrate_empty_region(spec2):
    with pytest.raises(ValueError, match="empty region"):
        Cube.from_center(spec2, (3.0, 3.0), 0.1)


def test_cube_average_constant(spec2):
    Q = Cube.from_center(spec2, (0.0, 0.0), 0.5)
    assert cube_average(GridFunction.constant(spec2, 3.0), Q) == pytest.approx(3.0)


def test_cube_average_self_indicator(spec2):
    Q = Cube.from_center(spec2, (0.0625, 0.0625), 0.5)
    arr = np.zeros(spec2.shape)
    arr[Q.slices] = 1.0
    f = GridFunction.from_field(spec2, arr)
    assert cube_average(f, Q) == pytest.approx(1.0)


def test_cube_average_spike(spec2):
    Q = Cube.from_center(spec2, (0.0, 0.0), 1.0)
    arr = np.zeros(spec2.shape)
    arr[8, 8] = 5.0
    f = GridFunction.from_field(spec2, arr)
    mass = 5.0 * spec2.cell_volume
    assert cube_average(f, Q) == pytest.approx(mass / Q.clipped_volume(spec2), rel=1e-12)


def test_cube_clipping(spec2):
    Q = Cube.from_center(spec2, (1.0, 1.0), 1.0)
    assert Q.cell_count < (int(1.0 / spec2.h) + 1) ** 2
    assert all(h <= spec2.N for h in Q.hi)


# ---------------------------------------------------------------------------
# norms


def test_strong_norm_constant():
    spec = GridSpec(2, 1.0, 16)
    c = 3.7
    assert norm(GridFunction.constant(spec, c), 2.0) == pytest.approx(2 * c, rel=1e-12)


def test_norm_rejects_bad_exponent(spec2):
    with pytest.raises(ValueError):
        norm(GridFunction.constant(spec2, 1.0), 0.0)


def test_weak_norm_indicator(spec2):
    arr = np.zeros(spec2.shape)
    arr[:4, :4] = 1.0
    f = GridFunction.from_field(spec2, arr)
    measure = 16 * spec2.cell_volume
    for p in (1.0, 2.0, 3.5):
        assert norm(f, p, mode="weak") == pytest.approx(measure ** (1 / p), rel=1e-12)


def test_weak_le_strong_random(spec2):
    g = rng()
    for _ in range(100):
        f = GridFunction.from_field(spec2, g.standard_normal(spec2.shape))
        p = float(g.uniform(0.5, 4.0))
        w = GridFunction.from_field(spec2, np.exp(g.standard_normal(spec2.shape) * 0.3))
        assert norm(f, p, w, mode="weak") <= norm(f, p, w, mode="strong") * (1 + 1e-12)


def test_norm_inf(spec2):
    f = GridFunction.from_field(spec2, rng().standard_normal(spec2.shape))
    assert norm(f, math.inf) == pytest.approx(np.abs(f.samples).max())


def test_vector_norm_basics(spec2):
    f = GridFunction.from_field(spec2, rng().standard_normal(spec2.shape))
    single = vector_norm_pointwise(VectorGridFunction((f,)), 2.0)
    assert np.allclose(single.samples, np.abs(f.samples))
    double = vector_norm_pointwise(VectorGridFunction((f, f)), 2.0)
    assert np.allclose(double.samples, math.sqrt(2) * np.abs(f.samples))


def test_vector_norm_dominates_components(spec2):
    g = rng()
    comps = tuple(GridFunction.from_field(spec2, g.standard_normal(spec2.shape)) for _ in range(5))
    agg = vector_norm_pointwise(VectorGridFunction(comps), 2.5)
    for c in comps:
        assert np.all(agg.samples >= np.abs(c.samples) - 1e-14)


# ---------------------------------------------------------------------------
# dyadic lattice and ladders


def test_dyadic_levels_partition():
    spec = GridSpec(2, 1.5, 16)
    lat = DyadicLattice.for_spec(spec)
    assert lat.n_levels == 5
    for level in range(lat.n_levels):
        vols = [c.clipped_volume(spec) for c in lat.iter_cubes(level)]
        assert sum(vols) == pytest.approx(spec.volume, rel=1e-12)


def test_dyadic_parents():
    spec = GridSpec(1, 1.0, 8)
    lat = DyadicLattice.for_spec(spec)
    child = lat.cube(2, (3,))
    parent = lat.cube(1, (1,))
    assert parent.lo[0] <= child.lo[0] and child.hi[0] <= parent.hi[0]


def test_side_ladder_span():
    spec = GridSpec(2, 2.0, 32)
    rungs = side_ladder(spec)
    assert rungs[0] == pytest.approx(spec.h)
    assert rungs[-1] == pytest.approx(2 * spec.L * math.sqrt(2))
    ratios = np.diff(np.log(np.asarray(rungs)))
    assert np.all(ratios > 0)
    assert np.all(ratios <= 0.25 * math.log(2) + 1e-9)


# ---------------------------------------------------------------------------
# window machinery vs naive sums


def _naive_window_sum(arr, half):
    out = np.zeros_like(arr, dtype=float)
    n = arr.ndim
    N = arr.shape[0]
    for idx in np.ndindex(arr.shape):
        sl = tuple(slice(max(i - half, 0), min(i + half + 1, N)) for i in idx)
        out[idx] = arr[sl].sum()
    return out


@pytest.mark.parametrize("half", [0, 1, 3, 9])
def test_window_sum_matches_naive(half):
    arr = rng().standard_normal((12, 12))
    fast = window_sum(arr, half)
    slow = _naive_window_sum(arr, half)
    assert np.allclose(fast, slow, rtol=1e-12, atol=1e-12)


def test_window_count(spec2):
    cnt = window_count((8, 8), 2)
    assert cnt[4, 4] == 25
    assert cnt[0, 0] == 9


def test_sliding_max_matches_naive():
    arr = rng().standard_normal((10, 10))
    half = 2
    fast = sliding_max(arr, half)
    slow = np.full_like(arr, -np.inf)
    for idx in np.ndindex(arr.shape):
        sl = tuple(slice(max(i - half, 0), min(i + half + 1, 10)) for i in idx)
        slow[idx] = arr[sl].max()
    assert np.array_equal(fast, slow)


def test_block_ops_roundtrip():
    arr = rng().standard_normal((8, 8))
    coarse = block_reduce(arr, 2, "mean")
    assert coarse.shape == (4, 4)
    assert block_expand(coarse, 2).shape == (8, 8)
    assert block_reduce(arr, 2, "sum") == pytest.approx(coarse * 4)
    assert np.all(block_reduce(arr, 2, "max") >= coarse)


# ---------------------------------------------------------------------------
# GFD format


def test_gfd_roundtrip(tmp_path, spec2):
    f = GridFunction.from_field(spec2, rng().standard_normal(spec2.shape))
    path = write_gfd(tmp_path / "f.gfd", f)
    back = read_gfd(path)
    assert back.spec == spec2
    assert np.array_equal(back.samples, f.samples)


def test_gfd_inline_roundtrip(tmp_path, spec2):
    f = GridFunction.from_field(spec2, rng().standard_normal(spec2.shape))
    path = write_gfd(tmp_path / "f.gfd", f, inline=True)
    assert json.loads(path.read_text())["payload"].startswith("base64:")
    back = read_gfd(path)
    assert np.array_equal(back.samples, f.samples)


def test_gfd_rejects_length_mismatch(tmp_path, spec2):
    f = GridFunction.constant(spec2, 1.0)
    path = write_gfd(tmp_path / "f.gfd", f)
    manifest = json.loads(path.read_text())
    manifest["points_per_axis"] = 8
    path.write_text(json.dumps(manifest))
    with pytest.raises(ValueError, match="length mismatch"):
        read_gfd(path)


def test_gfd_rejects_bad_dtype(tmp_path, spec2):
    path = write_gfd(tmp_path / "f.gfd", GridFunction.constant(spec2, 1.0))
    manifest = json.loads(path.read_text())
    manifest["dtype"] = "f32le"
    path.write_text(json.dumps(manifest))
    with pytest.raises(ValueError, match="dtype"):
        read_gfd(path)


# ---------------------------------------------------------------------------
# property tests


small_spec = GridSpec(2, 1.0, 8)
sample_arrays = st.lists(
    st.floats(min_value=-50, max_value=50, allow_nan=False), min_size=64, max_size=64
)


@settings(max_examples=25, deadline=None)
@given(sample_arrays, sample_arrays, st.floats(-3, 3), st.floats(-3, 3))
def test_integrate_linear(a, b, ca, cb):
    fa = GridFunction(small_spec, np.array(a))
    fb = GridFunction(small_spec, np.array(b))
    combined = GridFunction(small_spec, ca * fa.samples + cb * fb.samples)
    lhs = integrate(combined)
    rhs = ca * integrate(fa) + cb * integrate(fb)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(sample_arrays, st.floats(0.01, 50), st.floats(0.3, 5))
def test_norm_homogeneous(a, c, p):
    f = GridFunction(small_spec, np.array(a))
    scaled = GridFunction(small_spec, c * f.samples)
    assert norm(scaled, p) == pytest.approx(c * norm(f, p), rel=1e-12, abs=1e-300)


@settings(max_examples=25, deadline=None)
@given(sample_arrays, st.floats(0.3, 5))
def test_weak_norm_below_strong(a, p):
    f = GridFunction(small_spec, np.array(a))
    assert norm(f, p, mode="weak") <= norm(f, p, mode="strong") * (1 + 1e-12)


@settings(max_examples=25, deadline=None)
@given(
    st.lists(sample_arrays, min_size=2, max_size=4),
    st.floats(1.1, 3.0),
    st.floats(0.1, 2.0),
)
def test_vector_norm_decreasing_in_r(arrays, r1, bump):
    comps = tuple(GridFunction(small_spec, np.array(a)) for a in arrays)
    F = VectorGridFunction(comps)
    r2 = r1 + bump
    hi = vector_norm_pointwise(F, r1)
    lo = vector_norm_pointwise(F, r2)
    assert np.all(lo.samples <= hi.samples * (1 + 1e-12) + 1e-12)
