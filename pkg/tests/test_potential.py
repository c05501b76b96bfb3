import math

import numpy as np
import pytest

from swlab.grid import Cube, GridFunction, GridSpec, side_ladder
from swlab.potential import (
    CriticalRadiusField,
    Potential,
    check_reverse_holder,
    critical_radius_field,
    fit_regularity,
    psi_ball,
    psi_cube_dyadic,
    regularity_violation,
)


def ball_mass_oracle(V: Potential, center, r: float) -> float:
    """Independent digitized ball integral, evaluated on the padded lattice."""
    spec = V.spec
    pad = int(math.ceil(r / spec.h)) + 2
    vpad = V.padded_field(pad)
    axis = -spec.L + (np.arange(-pad, spec.N + pad) + 0.5) * spec.h
    grids = np.meshgrid(*([axis] * spec.n), indexing="ij")
    d2 = sum((g - c) ** 2 for g, c in zip(grids, center))
    return float(vpad[d2 <= r * r * (1 + 1e-12)].sum()) * spec.cell_volume


def rho_bisection_oracle(V: Potential, center, lo=1e-6, hi=None, iters=60) -> float:
    """Bisect g(r) = r**(2-n) * I(r) = 1 assuming g is increasing (holds for
    the closed-form potentials used here)."""
    spec = V.spec
    n = spec.n
    if hi is None:
        hi = 2 * spec.L * math.sqrt(n)

    def g(r):
        mass = ball_mass_oracle(V, center, r)
        return mass if n == 2 else r ** (2 - n) * mass

    assert g(hi) > 1.0
    a, b = lo, hi
    for _ in range(iters):
        mid = 0.5 * (a + b)
        if g(mid) <= 1.0:
            a = mid
        else:
            b = mid
    return a


def test_potential_validation():
    spec = GridSpec(2, 1.0, 8)
    with pytest.raises(ValueError):
        Potential(GridFunction.constant(spec, -1.0))
    with pytest.raises(ValueError):
        Potential(GridFunction.constant(spec, 0.0))
    with pytest.raises(ValueError):
        Potential(GridFunction.constant(spec, 2.0), "one")
    Potential(GridFunction.constant(spec, 1.0), "one")


def test_closed_form_constructors():
    spec = GridSpec(2, 1.0, 8)
    assert Potential.one(spec).values.samples.max() == 1.0
    xsq = Potential.square_norm(spec)
    assert xsq.values.samples.min() >= 0
    corner = spec.radius_field().max() ** 2
    assert xsq.values.samples.max() == pytest.approx(corner)


def test_padded_field_extends_closed_form():
    spec = GridSpec(1, 1.0, 8)
    xsq = Potential.square_norm(spec)
    padded = xsq.padded_field(2)
    assert padded.shape == (12,)
    x0 = -1.0 + (-2 + 0.5) * spec.h
    assert padded[0] == pytest.approx(x0 * x0)
    custom = Potential.from_samples(GridFunction.constant(spec, 1.0))
    assert custom.padded_field(2)[0] == 0.0


# ---------------------------------------------------------------------------
# reverse Hölder


def test_reverse_holder_constant_potential():
    spec = GridSpec(2, 1.0, 16)
    rep = check_reverse_holder(Potential.one(spec), 2.0)
    assert rep.constant == pytest.approx(1.0, rel=1e-12)


def test_reverse_holder_polynomial_finite_even_at_inf():
    spec = GridSpec(2, 1.0, 16)
    xsq = Potential.square_norm(spec)
    finite_q = check_reverse_holder(xsq, 4.0)
    assert math.isfinite(finite_q.constant) and finite_q.constant >= 1.0
    at_inf = check_reverse_holder(xsq, math.inf)
    assert math.isfinite(at_inf.constant) and at_inf.constant >= finite_q.constant


def test_reverse_holder_monotone_in_q():
    spec = GridSpec(2, 1.0, 16)
    xsq = Potential.square_norm(spec)
    consts = [check_reverse_holder(xsq, q).constant for q in (1.5, 2.0, 4.0)]
    assert consts[0] <= consts[1] * (1 + 1e-12) <= consts[2] * (1 + 1e-12) ** 2


def test_reverse_holder_singular_grows_under_ladder_refinement():
    # near-singular profile: constant grows monotonically as the radius
    # ladder refines (nested families)
    spec = GridSpec(2, 1.0, 32)
    r = spec.radius_field()
    prof = (r + spec.h) ** (-1.9)
    V = Potential.from_samples(GridFunction.from_field(spec, prof))
    ladders = [side_ladder(spec, ratio=2.0 ** (1 / k)) for k in (2, 4, 8)]
    consts = [check_reverse_holder(V, 6.0, ladder=lad).constant for lad in ladders]
    assert consts[0] <= consts[1] * (1 + 1e-12)
    assert consts[1] <= consts[2] * (1 + 1e-12)


# ---------------------------------------------------------------------------
# critical radius


def test_rho_constant_potential_n3_closed_form():
    spec = GridSpec(3, 1.0, 16)
    field = critical_radius_field(Potential.one(spec))
    closed = math.sqrt(3.0 / (4.0 * math.pi))
    assert np.all(np.abs(field.rho.samples - closed) <= 2 * spec.h)
    # constant across the grid within the bisection tolerance
    spread = field.rho.samples.max() - field.rho.samples.min()
    assert spread <= field.tolerance * field.rho.samples.max() + 1e-12


def test_rho_square_norm_origin_n3():
    spec = GridSpec(3, 1.0, 16)
    field = critical_radius_field(Potential.square_norm(spec))
    closed = (5.0 / (4.0 * math.pi)) ** 0.25
    idx = spec.containing_cell((0.0, 0.0, 0.0))
    assert abs(field.rho.field[idx] - closed) <= 2 * spec.h


def test_rho_matches_bisection_oracle():
    spec = GridSpec(3, 1.0, 16)
    for V in (Potential.one(spec), Potential.square_norm(spec)):
        field = critical_radius_field(V)
        for point in [(0.03125, 0.03125, 0.03125), (0.53125, -0.46875, 0.03125)]:
            idx = spec.containing_cell(point)
            center = spec.cell_center(idx)
            oracle = rho_bisection_oracle(V, center)
            assert field.rho.field[idx] == pytest.approx(oracle, rel=5e-4)


def test_rho_scaling_under_potential_rescale():
    # quadrupling a constant potential halves rho, up to digitization at the
    # smaller radius; compared on interior cells whose balls stay in the box
    # (the untagged 4c potential is zero-extended, the tagged one is not)
    spec = GridSpec(3, 1.0, 32)
    base = critical_radius_field(Potential.one(spec))
    scaled = critical_radius_field(
        Potential.from_samples(GridFunction.constant(spec, 4.0))
    )
    interior = (slice(12, 20),) * 3
    ratio = scaled.rho.field[interior] / base.rho.field[interior]
    assert np.all(np.abs(ratio - 0.5) < 0.1)


def test_rho_monotone_in_potential():
    spec = GridSpec(2, 1.0, 16)
    g = np.random.default_rng(3)
    v1 = np.abs(g.standard_normal(spec.shape)) + 0.5
    bump = np.abs(g.standard_normal(spec.shape))
    r1 = critical_radius_field(Potential.from_samples(GridFunction.from_field(spec, v1)))
    r2 = critical_radius_field(
        Potential.from_samples(GridFunction.from_field(spec, v1 + bump))
    )
    assert np.all(r2.rho.samples <= r1.rho.samples * (1 + 1e-9))


def test_rho_clamped_flag_for_tiny_potential():
    spec = GridSpec(2, 1.0, 8)
    tiny = Potential.from_samples(GridFunction.constant(spec, 1e-8))
    field = critical_radius_field(tiny)
    assert field.clamped_fraction == 1.0
    assert np.all(field.rho.samples == pytest.approx(2 * math.sqrt(2)))


def test_rho_ladder_covers_domain():
    spec = GridSpec(2, 1.0, 16)
    field = critical_radius_field(Potential.one(spec))
    assert field.radii_ladder[0] == pytest.approx(spec.h)
    assert field.radii_ladder[-1] == pytest.approx(2 * spec.L * math.sqrt(2))


# ---------------------------------------------------------------------------
# psi factors


def test_psi_ball_trivial_cases():
    spec = GridSpec(2, 1.0, 16)
    rho = critical_radius_field(Potential.one(spec))
    assert psi_ball(rho, (0.0, 0.0), 0.5, 0.0) == 1.0
    assert psi_ball(rho, (0.0, 0.0), 1e-15, 2.0) == pytest.approx(1.0)


def test_psi_ball_at_rho_scale():
    spec = GridSpec(3, 1.0, 16)
    rho = critical_radius_field(Potential.one(spec))
    r0 = rho.at_point((0.0, 0.0, 0.0))
    for theta in (0.5, 1.0, 3.0):
        assert psi_ball(rho, (0.0, 0.0, 0.0), r0, theta) == pytest.approx(2.0**theta, rel=1e-6)


def test_psi_ball_monotone():
    spec = GridSpec(2, 1.0, 16)
    rho = critical_radius_field(Potential.one(spec))
    radii = [0.1, 0.3, 0.9]
    vals = [psi_ball(rho, (0.0, 0.0), r, 1.5) for r in radii]
    assert vals[0] < vals[1] < vals[2]
    thetas = [psi_ball(rho, (0.0, 0.0), 0.5, t) for t in (0.5, 1.0, 2.0)]
    assert thetas[0] < thetas[1] < thetas[2]


def test_psi_cube_dyadic_constant_rho_matches_ball_form():
    spec = GridSpec(2, 1.0, 16)
    rho = CriticalRadiusField.constant(spec, 0.7)
    Q = Cube.from_center(spec, (0.0625, 0.0625), 0.5)
    expect = (1 + 0.5 / 0.7) ** 1.3
    assert psi_cube_dyadic(rho, Q, 1.3) == pytest.approx(expect, rel=1e-12)
    assert psi_cube_dyadic(rho, Q, 0.0) == 1.0


def test_psi_cube_dyadic_uses_max_rho():
    spec = GridSpec(2, 4.0, 16)
    rho = critical_radius_field(Potential.square_norm(spec))
    Q = Cube.from_center(spec, (-3.0, -3.0), 2.0)
    brute = float(rho.rho.field[Q.slices].max())
    expect = (1 + Q.side / brute) ** 2.0
    assert psi_cube_dyadic(rho, Q, 2.0) == pytest.approx(expect, rel=1e-12)


# ---------------------------------------------------------------------------
# regularity comparisons


def test_regularity_trivial_for_constant_potential():
    spec = GridSpec(2, 1.0, 16)
    rho = critical_radius_field(Potential.one(spec))
    pairs = np.random.default_rng(0).integers(0, spec.size, size=(64, 2))
    est = regularity_violation(rho, pairs, C0=1.1, l0=0.25)
    assert est.max_violation <= 1e-9


def test_regularity_same_point_any_c0():
    spec = GridSpec(2, 1.0, 16)
    rho = critical_radius_field(Potential.square_norm(spec))
    pairs = np.stack([np.arange(10), np.arange(10)], axis=1)
    est = regularity_violation(rho, pairs, C0=1.0, l0=1.0)
    assert est.max_violation <= 1e-12


def test_fit_regularity_square_norm():
    spec = GridSpec(3, 4.0, 16)
    rho = critical_radius_field(Potential.square_norm(spec))
    pairs = np.random.default_rng(1).integers(0, spec.size, size=(200, 2))
    est = fit_regularity(rho, pairs)
    assert est.max_violation <= 0
    assert est.C0 >= 1.0 and est.l0 > 0
    # growth comparison: rho * (1 + |x|) stays within a fixed band
    radius = spec.radius_field().ravel()
    product = rho.rho.samples * (1.0 + radius)
    assert product.max() / product.min() < 8.0


def test_regularity_serialization_fields():
    spec = GridSpec(2, 1.0, 8)
    rho = critical_radius_field(Potential.one(spec))
    est = regularity_violation(rho, np.array([[0, 1]]), 1.5, 0.5)
    d = est.to_dict()
    assert set(d) == {"C0", "l0", "max_violation"}
