import math

import numpy as np
import pytest

from conftest import bivariate
from xover.design import (
    Design,
    OaSpec,
    all_permutations,
    construct_oa,
    design_to_counts,
    enumerate_binary_counts,
    enumerate_binary_designs,
    is_oa_type1_strength2,
    parse_design,
    serialize_design,
)
from xover.errors import EnumerationSizeError, EstimabilityError, ValidationError
from xover.information import ContrastSet, contrast_dispersion, info_block_projection, info_matrix
from xover.linalg import centering_matrix
from xover.model import CovarianceSpec, StudyConfig, build_cov
from xover.optimality import (
    batch_criteria,
    criteria,
    criteria_from_zetas,
    default_r_grid,
    efficiency,
    exchange_search,
    exhaustive_search,
    reference_oa,
    sweep,
)


def projection_criteria(d, cfg):
    """Criteria recomputed from the projection form, with numpy eigenvalues."""
    a = logd = 0.0
    e = -np.inf
    for s2, v in zip(cfg.sigma2s, cfg.covariances(d.p)):
        z = np.linalg.eigvalsh(info_block_projection(d, v))[1:]
        a += np.sum(s2 / z)
        logd += np.sum(np.log(s2 / z))
        e = max(e, s2 / z[0])
    return a, logd, e


# criteria

def test_completely_symmetric_block():
    c = criteria_from_zetas([np.array([4.0, 4.0])], [2.0], [True])
    assert c.phiA == pytest.approx(2 * 2.0 / 4.0)
    assert c.phiE == pytest.approx(0.5)
    assert c.logPhiD == pytest.approx(2 * math.log(0.5))


def test_identical_blocks_double(d0):
    one = criteria(d0, StudyConfig.of((1.0, CovarianceSpec.ar1(0.2))))
    two = criteria(d0, StudyConfig.of((1.0, CovarianceSpec.ar1(0.2)), (1.0, CovarianceSpec.ar1(0.2))))
    assert two.phiA == pytest.approx(2 * one.phiA)
    assert two.logPhiD == pytest.approx(2 * one.logPhiD)
    assert two.phiE == pytest.approx(one.phiE)


def test_d0_end_to_end(d0, study):
    c = criteria(d0, study)
    a, logd, e = projection_criteria(d0, study)
    assert c.estimable
    assert c.phiA == pytest.approx(a, rel=1e-9)
    assert c.logPhiD == pytest.approx(logd, rel=1e-9)
    assert c.phiE == pytest.approx(e, rel=1e-9)


def test_criteria_invariants(study):
    for d in list(enumerate_binary_designs(3, 6))[::7]:
        c = criteria(d, study)
        if not c.estimable:
            assert c.phiA == c.phiE == c.logPhiD == math.inf
            continue
        m = 2 * 2
        assert c.phiA >= m * math.exp(c.logPhiD / m) * (1 - 1e-12)
        assert c.phiE <= c.phiA


def test_sigma_scaling(d0, study):
    base = criteria(d0, study)
    scaled = criteria(d0, study.scale_sigma2(3.0))
    assert scaled.phiA == pytest.approx(3 * base.phiA)
    assert scaled.phiE == pytest.approx(3 * base.phiE)
    assert scaled.logPhiD == pytest.approx(base.logPhiD + 4 * math.log(3.0))
    dstar = reference_oa(d0)
    e1, e2 = efficiency(d0, dstar, study), efficiency(d0, dstar, study.scale_sigma2(3.0))
    assert (e1.effA, e1.effD, e1.effE) == pytest.approx((e2.effA, e2.effD, e2.effE), rel=1e-12)


def test_eigen_reciprocal_identity(d0, study):
    info = info_matrix(d0, study)
    g = contrast_dispersion(info, ContrastSet.helmert(3, 2))
    eta = np.sort(np.linalg.eigvalsh(g))
    zetas = np.sort(np.concatenate([s2 / b.positive_eigs for s2, b in zip(study.sigma2s, info.blocks)]))
    np.testing.assert_allclose(eta, zetas, rtol=1e-9)


def test_batch_matches_scalar(study):
    counts = np.stack(list(enumerate_binary_counts(3, 6)))
    batch = batch_criteria(counts, 3, study)
    for i in range(0, len(counts), 11):
        c = criteria(Design.from_sequences(np.repeat(all_permutations(3), counts[i], axis=0), 3), study)
        assert batch["estimable"][i] == c.estimable
        for key, val in (("A", c.phiA), ("D", c.logPhiD), ("E", c.phiE)):
            if math.isinf(val):
                assert math.isinf(batch[key][i])
            else:
                assert batch[key][i] == pytest.approx(val, rel=1e-10)


# efficiency and sweep

def test_self_efficiency(d0, study):
    row = efficiency(d0, d0, study)
    assert (row.effA, row.effD, row.effE) == pytest.approx((1, 1, 1))


def test_efficiency_definitions(d0, study):
    dstar = reference_oa(d0)
    c0, cs = criteria(d0, study), criteria(dstar, study)
    row = efficiency(d0, dstar, study)
    assert row.effA == pytest.approx(cs.phiA / c0.phiA)
    assert row.effD == pytest.approx(math.exp(cs.logPhiD - c0.logPhiD))
    assert row.effE == pytest.approx(cs.phiE / c0.phiE)
    assert 0 < row.effA <= 1 and 0 < row.effD <= 1 and 0 < row.effE <= 1


def test_efficiency_non_estimable_d0(study):
    d0 = Design.from_sequences([(1, 2, 3)] * 6, 3)
    row = efficiency(d0, construct_oa(OaSpec(3, 1)), study)
    assert (row.effA, row.effD, row.effE, row.estimable) == (0, 0, 0, False)
    with pytest.raises(EstimabilityError):
        efficiency(construct_oa(OaSpec(3, 1)), d0, study)


def test_efficiency_shape_mismatch(d0, oa3, study):
    with pytest.raises(ValidationError):
        efficiency(d0, oa3, study)


def test_reference_oa(d0):
    ref = reference_oa(d0)
    assert ref.n == 18 and is_oa_type1_strength2(ref) == (True, 3)
    with pytest.raises(ValidationError):
        reference_oa(parse_design("1,2,3\n2,3,1\n3,1,2\n1,3,2", 3))


def test_default_grid():
    grid = default_r_grid()
    assert len(grid) == 141 and grid[0] == -0.45 and grid[-1] == 0.95 and grid[55] == 0.1


def test_sweep_zero_row_is_identity_case(d0, study):
    dstar = reference_oa(d0)
    res = sweep(d0, dstar, study, [0.0])
    ident = StudyConfig.of((2.0, CovarianceSpec.identity()), (1.0, CovarianceSpec.identity()))
    row = efficiency(d0, dstar, ident)
    assert (res.rows[0].effA, res.rows[0].effD, res.rows[0].effE) == pytest.approx((row.effA, row.effD, row.effE))


def test_sweep_skips_out_of_range(d0, study):
    res = sweep(d0, reference_oa(d0), study, [-0.6, -0.5, 0.0, 0.5])
    assert [r.r for r in res.rows] == [0.0, 0.5]
    assert res.skipped == [-0.6, -0.5] and res.summary["skipped"] == 2


def test_sweep_closed_form_reference_matches_direct(d0, study):
    grid = [-0.3, 0.0, 0.4, 0.9]
    a = sweep(d0, reference_oa(d0), study, grid)
    b = sweep(d0, reference_oa(d0), study, grid, reference="closed-form")
    for x, y in zip(a.rows, b.rows):
        assert (x.effA, x.effD, x.effE) == pytest.approx((y.effA, y.effD, y.effE), rel=1e-10)


def test_unscaled_q22_reference_divides_maxima_by_n_over_t_minus_1(d0, study):
    """The bare-q22 closed form overstates the OA information by n/(t-1) = 9
    here, which scales every efficiency by 1/9 (1/9^4 for D). At r = 0 that
    gives 0.25/9 = 0.02777... and 0.25^4/9^4 = 5.9537e-7."""
    grid = default_r_grid()
    direct = sweep(d0, reference_oa(d0), study, grid).summary
    bare = sweep(d0, reference_oa(d0), study, grid, reference="closed-form-unscaled-q22").summary
    assert direct["maxA"] == pytest.approx(0.25) and direct["argmaxA"] == 0.0
    assert bare["maxA"] == pytest.approx(direct["maxA"] / 9, rel=1e-10)
    assert bare["maxE"] == pytest.approx(direct["maxE"] / 9, rel=1e-10)
    assert bare["maxD"] == pytest.approx(direct["maxD"] / 9**4, rel=1e-10)
    assert bare["maxA"] == pytest.approx(0.0278, rel=0.02)
    assert bare["maxD"] == pytest.approx(5.9537e-7, rel=0.05)
    assert bare["maxE"] == pytest.approx(0.0278, rel=0.02)


def test_sweep_rejects_unknown_reference(d0, study):
    with pytest.raises(ValidationError):
        sweep(d0, reference_oa(d0), study, [0.0], reference="other")


# search

@pytest.mark.parametrize("criterion", ["A", "D", "E"])
def test_exhaustive_finds_oa(study, criterion):
    res = exhaustive_search(3, 6, study, criterion)
    assert res.evaluated == 462 and res.finite
    assert is_oa_type1_strength2(res.best_design) == (True, 1)
    assert len(res.optima_set) == 1


@pytest.mark.parametrize("criterion", ["A", "D", "E"])
def test_exhaustive_identity_covariance(criterion):
    cfg = StudyConfig.of((1.0, CovarianceSpec.identity()), (1.0, CovarianceSpec.identity()))
    res = exhaustive_search(3, 6, cfg, criterion)
    assert is_oa_type1_strength2(res.best_design)[0]


def test_exhaustive_best_bounds_everything(study):
    res = exhaustive_search(3, 4, study, "A")
    for d in enumerate_binary_designs(3, 4):
        assert res.best_value <= criteria(d, study).phiA * (1 + 1e-12)


def test_exhaustive_single_subject_has_no_optimum(study):
    res = exhaustive_search(3, 1, study, "D")
    assert not res.finite and res.evaluated == 6


def test_exhaustive_cap(study):
    with pytest.raises(EnumerationSizeError):
        exhaustive_search(5, 20, study, "A")


def test_exhaustive_tie_break_is_order_free():
    cfg = StudyConfig.of((1.0, CovarianceSpec.identity()))
    res = exhaustive_search(3, 3, cfg, "A")
    assert len(res.optima_set) == 6
    keys = sorted(serialize_design(d) for d in res.optima_set)
    assert serialize_design(res.best_design) == keys[0]


@pytest.mark.parametrize("criterion", ["A", "D", "E"])
def test_exchange_reaches_exhaustive_optimum(study, criterion):
    best = exhaustive_search(3, 6, study, criterion).best_value
    res = exchange_search(3, 6, study, criterion, restarts=5, seed=3)
    assert res.best_value == pytest.approx(best, rel=1e-10)


def test_exchange_oa_is_fixed_point():
    oa = construct_oa(OaSpec(5, 1))
    cfg = bivariate(0.3)
    before = criteria(oa, cfg).phiA
    res = exchange_search(5, 20, cfg, "A", restarts=0, start=oa)
    assert res.best_value == pytest.approx(before, rel=1e-12)
    assert res.best_design.canonical() == oa.canonical()


def test_exchange_deterministic(study):
    a = exchange_search(3, 7, study, "D", restarts=3, seed=11)
    b = exchange_search(3, 7, study, "D", restarts=3, seed=11)
    assert a.best_design == b.best_design and a.best_value == b.best_value


def test_search_rejects_bad_criterion(study):
    with pytest.raises(ValidationError):
        exhaustive_search(3, 2, study, "G")


def test_design_counts_helper(oa3):
    assert design_to_counts(oa3).tolist() == [1] * 6


def test_search_thread_count_independent(study, monkeypatch):
    monkeypatch.setenv("XOVER_THREADS", "1")
    a = exhaustive_search(3, 12, study, "A")  # two chunks
    monkeypatch.setenv("XOVER_THREADS", "4")
    b = exhaustive_search(3, 12, study, "A")
    assert a.best_design == b.best_design and a.best_value == b.best_value
    assert [serialize_design(d) for d in a.optima_set] == [serialize_design(d) for d in b.optima_set]


def test_worker_count_validation(monkeypatch):
    from xover.optimality import worker_count

    monkeypatch.setenv("XOVER_THREADS", "2")
    assert worker_count() == 2
    monkeypatch.setenv("XOVER_THREADS", "-1")
    with pytest.raises(ValidationError):
        worker_count()
