import math

import numpy as np
import pytest

import oracles
from nmhl import (
    FrequencyGrid,
    Perturbed,
    PurePower,
    Symbol,
    TiltSpec,
    apply_semigroup,
    build_symbol,
    chapman_kolmogorov_check,
    derivative_seminorm,
    duhamel_series,
    heat_kernel,
    kernel_symmetry_check,
    kernel_values,
    log_abs_kernel,
    spatial_grid,
    tilted_semigroup,
)
from nmhl.errors import ComplexResidue, CutoffTooSmall, SeriesDiverged
from nmhl.presets import duhamel_pair
from nmhl.semigroup import DuhamelConfig

GAUSS_DIAG_T1 = 0.28212397345676224   # (1/2pi) sum exp(-n^2), two oracle routes


def gaussian_symbol(cutoff=32):
    return build_symbol(PurePower(k=1), FrequencyGrid(1, cutoff))


def quartic_symbol(cutoff=16):
    return build_symbol(PurePower(k=2), FrequencyGrid(1, cutoff))


def test_gaussian_kernel_matches_image_sum():
    sym = gaussian_symbol()
    kern = heat_kernel(sym, 0.1, resolution=512)
    np.testing.assert_allclose(
        kern.values, oracles.wrapped_gaussian(0.1, kern.points), atol=1e-12
    )


def test_gaussian_diagonal_value():
    kern = heat_kernel(gaussian_symbol(), 1.0, resolution=256)
    assert kern.values[0] == pytest.approx(GAUSS_DIAG_T1, abs=1e-14)


def test_quartic_kernel_goes_negative_at_short_time():
    kern = heat_kernel(quartic_symbol(24), 0.01, resolution=512)
    assert float(np.min(kern.values)) < 0.0
    # but total mass is still exactly that of the zero mode
    assert kern.mass() == pytest.approx(1.0, abs=1e-12)


def test_drift_term_translates_the_kernel():
    # the odd first-order coefficient acts as pure transport by c*t
    c, t = 0.8, 0.2
    spec = Perturbed(base=PurePower(k=1), q_coeffs={(1,): c})
    kern = heat_kernel(build_symbol(spec, FrequencyGrid(1, 32)), t, resolution=512)
    np.testing.assert_allclose(
        kern.values, oracles.wrapped_gaussian(t, kern.points - c * t), atol=1e-12
    )


def test_kernel_values_agree_with_dense_grid():
    sym = quartic_symbol()
    dense = heat_kernel(sym, 0.1, resolution=4096)
    idx = np.array([0, 300, 1024, 2000])
    vals = kernel_values(sym, 0.1, dense.points[idx])
    np.testing.assert_allclose(vals, dense.values[idx], atol=1e-12)


def test_apply_semigroup_diagonalizes_eigenfunctions():
    sym = gaussian_symbol()
    x = spatial_grid(64)
    out = apply_semigroup(sym, 0.5, np.cos(x))
    np.testing.assert_allclose(out, math.exp(-0.5) * np.cos(x), atol=1e-13)
    # t = 0 is the identity
    np.testing.assert_allclose(apply_semigroup(sym, 0.0, np.cos(x)), np.cos(x))


def test_chapman_kolmogorov_and_symmetry():
    sym = quartic_symbol()
    assert chapman_kolmogorov_check(sym, 0.05, 0.07) < 1e-10
    assert kernel_symmetry_check(sym, 0.05) < 1e-12


def test_cutoff_too_small_carries_usable_suggestion():
    sym = build_symbol(PurePower(k=1), FrequencyGrid(1, 4))
    with pytest.raises(CutoffTooSmall) as exc_info:
        heat_kernel(sym, 0.001, resolution=64)
    suggested = exc_info.value.suggested_cutoff
    assert suggested is not None and suggested > 4
    retry = build_symbol(PurePower(k=1), FrequencyGrid(1, suggested))
    kern = heat_kernel(retry, 0.001, resolution=2 * suggested + 2)
    assert np.all(np.isfinite(kern.values))


def test_non_hermitian_multiplier_rejected():
    grid = FrequencyGrid(1, 4)
    xi = grid.points[:, 0].astype(float)
    values = xi**2 + 0.0j                   # dissipative, passes truncation
    values[grid.points[:, 0] == 1] += 1.0j  # breaks a(-xi) == conj(a(xi))
    sym = Symbol(grid=grid, values=values, order=2, ellipticity_order=2,
                 real_valued=False, even=False, nonnegative_real_part=True,
                 spec=None)
    with pytest.raises(ComplexResidue):
        heat_kernel(sym, 2.5, resolution=64)


def test_duhamel_partial_sums_sit_within_their_own_tail_bound():
    base, q, full = duhamel_pair()
    exact = np.exp(-0.5 * full.values)
    for l_max in (1, 3, 5, 8):
        result = duhamel_series(base, q, 0.5, DuhamelConfig(l_max=l_max))
        gap = float(np.max(np.abs(result.multiplier - exact)))
        assert gap <= result.remainder_bound
        assert np.all(np.diff(result.level_bounds) < 0)


def test_duhamel_flags_nondecreasing_tail():
    # a perturbation large enough that the tail still grows at the cap
    grid = FrequencyGrid(1, 4)
    base = build_symbol(PurePower(k=2), grid)
    q_vals = 3.0 * grid.points[:, 0].astype(float) ** 2
    q_sym = Symbol(grid=grid, values=q_vals.astype(complex), order=2,
                   ellipticity_order=0, real_valued=True, even=True,
                   nonnegative_real_part=True, spec=None)
    with pytest.raises(SeriesDiverged):
        duhamel_series(base, q_sym, 1.0, DuhamelConfig(l_max=4))


def test_tilted_semigroup_reduces_to_heat_kernel_at_zero_tilt():
    sym = gaussian_symbol()
    op = tilted_semigroup(sym, TiltSpec(xi_tilt=0.0, eps=1.0), 0.5)
    np.testing.assert_allclose(
        op.kernel(resolution=512),
        heat_kernel(sym, 0.5, resolution=512).values,
        atol=1e-13,
    )
    assert op.l1_norm(resolution=512) == pytest.approx(1.0, abs=1e-12)


def test_tilted_gaussian_matches_completed_square():
    s, tau = 0.7, 0.3
    sym = gaussian_symbol()
    op = tilted_semigroup(sym, TiltSpec(xi_tilt=tau, eps=1.0), s)
    z = spatial_grid(1024)
    z = np.where(z > np.pi, z - 2 * np.pi, z)
    np.testing.assert_allclose(
        op.kernel(resolution=1024),
        oracles.tilted_gaussian_kernel(s, tau, z),
        atol=1e-12,
    )
    assert op.norm_on_constants() == pytest.approx(math.exp(s * tau**2), rel=1e-12)


def test_log_abs_kernel_matches_dense_evaluation():
    spec = PurePower(k=2)
    sym = build_symbol(spec, FrequencyGrid(1, 24))
    dense = heat_kernel(sym, 0.05, resolution=256)
    z = float(dense.points[64])    # pi/2 exactly on the grid
    assert log_abs_kernel(spec, 0.05, z) == pytest.approx(
        math.log(abs(float(dense.values[64]))), abs=1e-9
    )


def test_derivative_seminorm_grows_as_t_shrinks():
    sym = build_symbol(PurePower(k=1), FrequencyGrid(1, 128))
    c_small = derivative_seminorm(sym, 0.5, 1, 0.01)
    c_large = derivative_seminorm(sym, 0.5, 1, 0.1)
    assert c_small > c_large > 0.0
