import math

import numpy as np
import pytest

from dyadlmo.dyadic import DyadicInterval, HaarExpansion, haar_inverse
from dyadlmo.norms import bmo_norm, lmo_norm, product_bmo_norm
from dyadlmo.operators import OperatorHandle
from dyadlmo.opnorm import (
    DENSE_LIMIT,
    ConvergenceError,
    _log_family,
    bmo_to_bmo_lower_bound,
    core_lemma_suite,
    cotlar_decay_suite,
    ensemble_symbol,
    equivalence_experiment,
    growth_constants,
    l2_opnorm,
    log_family_bmo_max,
    pi_ratio,
    random_expansion,
    random_symbol,
    stability_factor,
)
from dyadlmo.paraproducts import pi_main


def diag_handle(d):
    d = np.asarray(d, dtype=float)
    return OperatorHandle(lambda x: d * x, lambda y: d * y, len(d), len(d))


# --- operator norms ----------------------------------------------------------------


def test_identity_and_rank_one():
    assert l2_opnorm(OperatorHandle.from_matrix(np.eye(7))) == pytest.approx(1.0)
    rng = np.random.default_rng(0)
    u, v = rng.standard_normal(6), rng.standard_normal(9)
    A = np.outer(v, u)
    assert l2_opnorm(OperatorHandle.from_matrix(A)) == pytest.approx(
        np.linalg.norm(u) * np.linalg.norm(v))


def test_random_matrix_matches_svd():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((50, 50))
    assert l2_opnorm(OperatorHandle.from_matrix(A)) == pytest.approx(
        np.linalg.svd(A, compute_uv=False)[0], rel=1e-9)


def test_power_iteration_path():
    n = DENSE_LIMIT + 10
    d = np.linspace(0.0, 1.0, n)
    d[17] = 3.0
    assert l2_opnorm(diag_handle(d), rtol=1e-12) == pytest.approx(3.0, rel=1e-6)
    with pytest.raises(ConvergenceError):
        l2_opnorm(diag_handle(np.linspace(0.0, 1.0, n)), max_iter=3)
    assert l2_opnorm(diag_handle(np.zeros(n))) == 0.0


def test_handle_adjoint_and_composition():
    rng = np.random.default_rng(2)
    A, B = rng.standard_normal((5, 4)), rng.standard_normal((4, 3))
    h = OperatorHandle.from_matrix(A) @ OperatorHandle.from_matrix(B)
    np.testing.assert_allclose(h.dense(), A @ B)
    np.testing.assert_allclose(h.T.dense(), (A @ B).T)
    x, y = rng.standard_normal(3), rng.standard_normal(5)
    assert float(h.apply(x) @ y) == pytest.approx(float(x @ h.adjoint_apply(y)))
    with pytest.raises(ValueError):
        OperatorHandle.from_matrix(B) @ OperatorHandle.from_matrix(B)


# --- ensembles ----------------------------------------------------------------------------


def test_random_expansion_and_symbols():
    rng = np.random.default_rng(3)
    e = random_expansion((3, 2), rng, mean=2.0)
    assert e.coeffs[0, 0] == 2.0 and not e.coeffs[0, 1:].any() and not e.coeffs[1:, 0].any()
    with pytest.raises(ValueError):
        random_expansion((2, 2), rng, "pink")
    for kind in ("bmo", "log", "sparse"):
        assert random_symbol((2, 2), rng, kind).coeffs.shape == (4, 4)
    sp = random_symbol((3, 3), rng, "sparse")
    assert 1 <= np.count_nonzero(sp.coeffs) <= 3
    with pytest.raises(ValueError):
        random_symbol((2, 2), rng, "other")


# --- lower bound ------------------------------------------------------------------------


def test_zero_symbol_has_zero_bound():
    rec = bmo_to_bmo_lower_bound(HaarExpansion.zeros((2, 2)), budget=3)
    assert rec.lower_bound == 0.0 and rec.ratio == 0.0 and rec.lmo_norm == 0.0


def test_top_haar_symbol_bound_beats_every_log_candidate():
    phi = HaarExpansion.single((2, 2), (DyadicInterval(0, 0), DyadicInterval(0, 0)))
    rec = bmo_to_bmo_lower_bound(phi, budget=4)
    chain = 0.0
    for R, b, osc in _log_family((2, 2)):
        direct = math.sqrt(product_bmo_norm(pi_main(phi, b)).value) / bmo_norm(haar_inverse(b)).value
        assert pi_ratio(phi, b) == pytest.approx(direct)
        chain = max(chain, direct)
    assert chain > 0
    assert rec.log_bound == pytest.approx(chain, rel=1e-12)
    assert rec.lower_bound >= chain * (1 - 1e-12)
    assert rec.lmo_norm == pytest.approx(2.0)


def test_log_family_excludes_constants():
    fam = _log_family((2, 2))
    assert all(osc > 0 for _, _, osc in fam)
    assert all(R.intervals != (DyadicInterval(0, 0), DyadicInterval(0, 0)) for R, _, _ in fam)
    assert log_family_bmo_max((2, 2)) == max(osc for _, _, osc in fam)


@pytest.mark.parametrize("seed", range(3))
def test_bound_is_certified_and_monotone(seed):
    rng = np.random.default_rng(seed)
    phi = random_symbol((2, 2), rng, "bmo")
    prev = 0.0
    for budget in (1, 2, 4, 8):
        rec = bmo_to_bmo_lower_bound(phi, budget=budget, seed=seed)
        assert abs(rec.reevaluate(phi) - rec.lower_bound) <= 1e-9
        assert rec.lower_bound >= prev - 1e-12
        assert rec.ratio == pytest.approx(rec.lmo_norm / rec.lower_bound ** 2)
        prev = rec.lower_bound
    with pytest.raises(ValueError):
        bmo_to_bmo_lower_bound(phi, budget=0)


def test_equivalence_experiment_records():
    recs = equivalence_experiment(2, [2], 4, seed=5, budget=2)
    assert [r.symbol_id for r in recs] == [0, 1, 2, 3]
    assert [r.kind for r in recs] == ["bmo", "log", "sparse", "bmo"]
    for r in recs:
        phi = ensemble_symbol(2, 2, r.symbol_id, seed=5)
        assert lmo_norm(phi).value == pytest.approx(1.0)
        assert abs(r.reevaluate(phi) - r.lower_bound) <= 1e-9
        assert r.equiv_quantity > 0
    again = equivalence_experiment(2, [2], 4, seed=5, budget=2)
    assert [r.lower_bound for r in again] == [r.lower_bound for r in recs]
    assert equivalence_experiment(2, [2], 0) == []


# --- suites ------------------------------------------------------------------------------


def test_core_suite_sigma_equality():
    rep = core_lemma_suite(seed=0, depths=(2,), trials=1, sigma_trials=3)
    assert rep.passed
    assert rep.summary["sigma_max_dev"] <= 1e-8
    assert all(math.isfinite(rep.summary[f"{k}_J2"]) for k in ("core2", "core2bis", "core2one"))


def test_cotlar_suite_orthogonality():
    rep = cotlar_decay_suite(seed=0, depths=(2, 3), trials=2)
    assert rep.passed
    assert rep.summary["cross_J2"] == 0.0 and rep.summary["cross_J3"] == 0.0
    assert rep.summary["C_J3"] > 0


def test_growth_constants_of_constant_and_scaling():
    from dyadlmo.dyadic import GridSignal
    assert growth_constants(GridSignal(np.full((4, 4), 5.0)))["a"] == 0.0
    rng = np.random.default_rng(6)
    sig = haar_inverse(random_expansion((2, 2), rng))
    g1 = growth_constants(sig)
    g2 = growth_constants(GridSignal(3 * sig.values + 1))
    for k in ("a", "b", "c"):
        assert g2[k] == pytest.approx(g1[k])


def test_stability_factor():
    s = {"x_J2": 1.0, "x_J3": 1.5, "x_J4": 0.5}
    assert stability_factor(s, "x", (2, 3, 4)) == pytest.approx(3.0)
    assert stability_factor({"x_J2": 0.0, "x_J3": 1.0}, "x", (2, 3)) == math.inf
