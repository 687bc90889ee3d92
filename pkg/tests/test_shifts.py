import math

import numpy as np
import pytest

import oracles
from dyadlmo.dyadic import (
    DepthError,
    DyadicInterval,
    DyadicRectangle,
    GridSignal,
    HaarExpansion,
    haar_forward,
    haar_inverse,
    levels,
)
from dyadlmo.norms import bmo_norm
from dyadlmo.paraproducts import PartitionSpec, multiplication_terms
from dyadlmo.shifts import (
    GridSpec,
    appendix_identity_check,
    commutator_apply,
    exact_shift_average,
    expansion_step_error,
    grid_shift_action,
    iterated_commutator,
    log_test_1d,
    log_test_rect,
    monte_carlo_samples,
    monte_carlo_shift_average,
    multiply,
    reflect,
    sample_grid,
    shift_apply,
    shift_matrix,
    shift_on_grid,
    shifted_view,
)


def rand(rng, shape):
    return HaarExpansion(rng.standard_normal(shape))


def clean(rng, depth, axes):
    """Random expansion with no Haar content at levels >= J-1 on ``axes``."""
    c = rng.standard_normal(tuple(2 ** J for J in depth))
    for a in axes:
        drop = np.flatnonzero(levels(depth[a]) >= depth[a] - 1)
        idx = [slice(None)] * len(depth)
        idx[a] = drop
        c[tuple(idx)] = 0.0
    return HaarExpansion(c)


# --- shift ---------------------------------------------------------------------


def test_shift_matches_literal_definition():
    rng = np.random.default_rng(0)
    c = rng.standard_normal(16)
    np.testing.assert_allclose(shift_matrix(4) @ c, oracles.shift_1d(c))


def test_shift_of_top_haar():
    e = HaarExpansion.single((3,), (DyadicInterval(0, 0),))
    out = shift_apply(e, 0)
    assert not out.truncation_flag
    np.testing.assert_allclose(out.output.coeffs, [0, 0, -1, 1, 0, 0, 0, 0])


def test_shift_kills_constants_and_flags_truncation():
    one = HaarExpansion.single((3, 2), (None, None))
    assert not shift_apply(one, 0).output.coeffs.any()
    fine = HaarExpansion.single((3, 2), (DyadicInterval(2, 1), None))
    res = shift_apply(fine, 0)
    assert res.truncation_flag and res.output.truncated
    assert not res.output.coeffs.any()
    with pytest.raises(DepthError):
        shift_apply(one, 2)


def test_shift_doubles_surviving_mass():
    rng = np.random.default_rng(1)
    e = rand(rng, (8, 4))
    out = shift_apply(e, 0).output
    kept = e.coeffs[1:4]  # levels 0 and 1; level 2 is annihilated
    assert np.sum(out.coeffs ** 2) == pytest.approx(2 * np.sum(kept ** 2))


# --- commutators -------------------------------------------------------------------


def test_constant_symbol_commutes():
    rng = np.random.default_rng(2)
    phi = HaarExpansion.single((3, 3), (None, None), 1.7)
    b = rand(rng, (8, 8))
    for axes in [(0,), (1,), (0, 1)]:
        assert np.allclose(iterated_commutator(phi, b, axes).output.coeffs, 0.0, atol=1e-12)


def test_single_axis_commutator_on_one():
    I = DyadicInterval(1, 0)
    phi = HaarExpansion.single((3,), (I,))
    one = HaarExpansion.single((3,), (None,))
    out = iterated_commutator(phi, one, (0,)).output
    # S(h_I * 1) - h_I * S(1) = h_{I+} - h_{I-}
    expect = HaarExpansion.single((3,), (I.plus,)).coeffs - HaarExpansion.single((3,), (I.minus,)).coeffs
    np.testing.assert_allclose(out.coeffs, expect, atol=1e-12)


def test_commutator_is_sum_over_channels():
    rng = np.random.default_rng(3)
    phi, b = rand(rng, (8, 8)), rand(rng, (8, 8))
    full = iterated_commutator(phi, b, (0, 1)).output.coeffs
    parts = sum(commutator_apply(op, b, (0, 1)).output.coeffs
                for op in multiplication_terms(phi).values())
    np.testing.assert_allclose(full, parts, atol=1e-10)


def test_commutator_rejects_repeats_and_mismatch():
    e = HaarExpansion.zeros((2, 2))
    with pytest.raises(ValueError):
        commutator_apply(lambda x: x, e, (0, 0))
    with pytest.raises(DepthError):
        iterated_commutator(e, HaarExpansion.zeros((2, 3)), (0,))


def test_multiply_is_pointwise():
    rng = np.random.default_rng(4)
    a, b = rand(rng, (4, 4)), rand(rng, (4, 4))
    np.testing.assert_allclose(haar_inverse(multiply(a, b)).values,
                               haar_inverse(a).values * haar_inverse(b).values, atol=1e-12)


# --- appendix identity ---------------------------------------------------------------


SPEC3 = PartitionSpec({0}, {1}, {2})


def test_appendix_zero_symbol():
    rng = np.random.default_rng(5)
    phi = HaarExpansion.zeros((3, 3, 3))
    b = clean(rng, (3, 3, 3), (0, 2))
    assert appendix_identity_check(phi, b, SPEC3) == 0.0


def test_appendix_precondition():
    rng = np.random.default_rng(6)
    phi = rand(rng, (8, 8, 8))
    b = clean(rng, (3, 3, 3), (0, 2))
    with pytest.raises(ValueError):
        appendix_identity_check(phi, b, SPEC3)


@pytest.mark.xfail(strict=True, reason="the literal commutator does not reduce to the "
                   "stated Delta form; see the decision log")
def test_appendix_single_term():
    depth = (3, 3, 3)
    R = (DyadicInterval(0, 0), DyadicInterval(1, 1), DyadicInterval(1, 0))
    phi = HaarExpansion.single(depth, R)
    b = HaarExpansion.single(depth, R, 0.5)
    assert appendix_identity_check(phi, b, SPEC3) <= 1e-12


def test_expansion_step_resolves_exponent():
    rng = np.random.default_rng(7)
    phi, b = rand(rng, (8, 8, 8, 8)), rand(rng, (8, 8, 8, 8))
    # J1 = {0}, J2 = {1, 2}, J3 = {3}: shifted axes are 0 and 3
    shifted = (0, 3)
    assert expansion_step_error(phi, b, shifted, 2) <= 1e-10
    for wrong in (1, 3, 4):
        assert expansion_step_error(phi, b, shifted, wrong) > 1e-3
    p3, b3 = rand(rng, (8, 8, 8)), rand(rng, (8, 8, 8))
    assert expansion_step_error(p3, b3, (0, 2), 2) <= 1e-10
    assert expansion_step_error(p3, b3, (0, 2), 3) > 1e-3


# --- logarithmic test functions ---------------------------------------------------------


def test_log_1d_values():
    J = 5
    np.testing.assert_allclose(log_test_1d(DyadicInterval(0, 0), J).values, math.log(4))
    I = DyadicInterval(3, 5)
    v = log_test_1d(I, J).values
    np.testing.assert_allclose(v[I.cells(J)], math.log(4 / I.length))
    assert np.all(v <= math.log(4 / I.length) + 1e-15)
    with pytest.raises(DepthError):
        log_test_1d(DyadicInterval(4, 0), 3)


def test_log_1d_bmo_bounded_uniformly():
    # levels 0 and 1 give constants; finer levels grow to a depth-independent ceiling
    for J in (4, 6, 8):
        vals = [bmo_norm(log_test_1d(DyadicInterval(k, 0), J)).value for k in range(J)]
        assert vals[0] == pytest.approx(0.0, abs=1e-12) and vals[1] == pytest.approx(0.0, abs=1e-12)
        assert np.all(np.diff(vals) >= -1e-3)
        assert max(vals) < 0.75


def test_log_rect_properties():
    J = 3
    top = DyadicRectangle.unit(2)
    np.testing.assert_allclose(log_test_rect(top, J).values, 2 * math.log(4))
    R = DyadicRectangle.of((1, 1), (2, 2))
    sig = log_test_rect(R, J)
    expect = math.log(4 / 0.5) + math.log(4 / 0.25)
    np.testing.assert_allclose(sig.values[R.cells((J, J))], expect)
    one_d = sum(bmo_norm(log_test_1d(I, J)).value for I in R.intervals)
    assert bmo_norm(sig).value <= one_d + 1e-12


# --- translated / dilated grids ----------------------------------------------------------


def test_grid_spec_validation():
    assert GridSpec((1, 0, 1)).tau == pytest.approx(0.625)
    with pytest.raises(ValueError):
        GridSpec((2,))
    with pytest.raises(ValueError):
        GridSpec((0,), 2.0)
    with pytest.raises(ValueError):
        GridSpec((0,), 1.0 + 1e-12)
    s = sample_grid(4, seed=3)
    assert s == sample_grid(4, seed=3) and len(s.alpha) == 4


def test_standard_grid_is_identity_and_half_turn_rolls():
    rng = np.random.default_rng(8)
    sig = GridSignal(rng.standard_normal(16))
    np.testing.assert_allclose(shift_on_grid(sig, GridSpec((0, 0, 0, 0))).coeffs,
                               haar_forward(sig).coeffs, atol=1e-12)
    np.testing.assert_allclose(shifted_view(sig, GridSpec((1, 0, 0, 0))).values,
                               np.roll(sig.values, -8), atol=1e-12)
    np.testing.assert_allclose(shifted_view(sig, GridSpec((0, 0, 1, 0))).values,
                               np.roll(sig.values, -2), atol=1e-12)


def test_random_grid_analysis_round_trip():
    rng = np.random.default_rng(9)
    sig = GridSignal(rng.standard_normal(16))
    spec = sample_grid(4, rng=rng)
    view = shifted_view(sig, spec)
    np.testing.assert_allclose(haar_inverse(shift_on_grid(sig, spec)).values, view.values,
                               atol=1e-12)
    # dilation averages but preserves the mean over a full period only when r = 1
    assert shifted_view(sig, GridSpec((1, 1, 0, 1))).integral() == pytest.approx(sig.integral())


def test_grid_action_on_standard_grid_is_the_centred_shift():
    rng = np.random.default_rng(10)
    v = rng.standard_normal(8)
    out = grid_shift_action(GridSignal(v), GridSpec((0, 0, 0)), extra=0).values
    half = 4
    c = haar_forward(GridSignal(np.roll(v, -half))).coeffs
    expect = np.roll(haar_inverse(HaarExpansion(shift_matrix(3) @ c)).values, half)
    np.testing.assert_allclose(out, expect, atol=1e-12)


def test_monte_carlo_zero_and_reproducible():
    z = GridSignal(np.zeros(16))
    assert not monte_carlo_shift_average(z, 20, 0).values.any()
    rng = np.random.default_rng(11)
    sig = GridSignal(rng.standard_normal(16))
    a = monte_carlo_shift_average(sig, 50, 123).values
    b = monte_carlo_shift_average(sig, 50, 123).values
    assert a.tobytes() == b.tobytes()
    with pytest.raises(ValueError):
        monte_carlo_samples(sig, 0, 0)


def test_exact_average_symmetries():
    rng = np.random.default_rng(12)
    sig = GridSignal(rng.standard_normal(16))
    A = exact_shift_average(sig).values
    np.testing.assert_allclose(exact_shift_average(reflect(sig)).values, -A[::-1], atol=1e-12)
    np.testing.assert_allclose(exact_shift_average(GridSignal(np.roll(sig.values, 3))).values,
                               np.roll(A, 3), atol=1e-12)


def test_monte_carlo_antisymmetry_within_three_sigma():
    x = (np.arange(16) + 0.5) / 16
    sig = GridSignal(np.exp(np.cos(2 * np.pi * x)) + x)
    n = 10_000
    rows, _ = monte_carlo_samples(sig, n, 1)
    rrows, _ = monte_carlo_samples(reflect(sig), n, 2)
    stat = rows.mean(axis=0) + rrows.mean(axis=0)[::-1]
    sigma = np.sqrt(rows.var(axis=0, ddof=1) / n + rrows.var(axis=0, ddof=1)[::-1] / n)
    assert np.all(np.abs(stat) <= 3 * sigma + 1e-12)
