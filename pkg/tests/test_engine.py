import math

import numpy as np
import pytest

from bsccs import engine
from bsccs.data import Era, SubjectRecord, build_dataset, subset_dataset
from bsccs.errors import EngineError
from bsccs.simkit import oracle_curvature, oracle_gradient, oracle_log_likelihood

from conftest import random_beta


def _assert_state_equal(a, b):
    for name in ("beta", "xbeta", "l_exp_xbeta", "denominators"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name), err_msg=name)


def test_init_state_toy(toy):
    s = engine.init_state(toy)
    np.testing.assert_array_equal(s.l_exp_xbeta, [1.0, 1.0])
    np.testing.assert_array_equal(s.denominators, [2.0])
    s = engine.init_state(toy, [math.log(2)])
    np.testing.assert_allclose(s.l_exp_xbeta, [2.0, 1.0], rtol=1e-15)
    np.testing.assert_allclose(s.denominators, [3.0], rtol=1e-15)


def test_init_state_rejects_bad_beta(toy):
    with pytest.raises(ValueError):
        engine.init_state(toy, [np.nan])
    with pytest.raises(ValueError):
        engine.init_state(toy, [0.0, 1.0])


def test_init_zero_beta_uses_lengths(small_suite):
    ds = small_suite[5]
    s = engine.init_state(ds)
    np.testing.assert_array_equal(s.l_exp_xbeta, ds.L)
    np.testing.assert_array_equal(s.denominators, np.add.reduceat(ds.L, ds.subject_offsets[:-1]))


def test_empty_column_beta_irrelevant():
    ds = build_dataset([SubjectRecord("s", (Era(2, 1, (0,)), Era(3, 0, ())))], 2)
    a = engine.init_state(ds, [0.3, 0.0])
    b = engine.init_state(ds, [0.3, 5.0])
    np.testing.assert_array_equal(a.denominators, b.denominators)
    before = b.copy()
    engine.sparse_delta_update(ds, b, 1, 2.5)
    for name in ("xbeta", "l_exp_xbeta", "denominators"):
        np.testing.assert_array_equal(getattr(b, name), getattr(before, name))


def test_dense_recompute_identity_at_zero(small_suite):
    ds = small_suite[2]
    s = engine.init_state(ds)
    again = engine.dense_recompute(ds, s.copy(), np.zeros(ds.J))
    _assert_state_equal(s, again)


def test_overflow_guard(toy):
    with pytest.raises(EngineError, match="800"):
        engine.init_state(toy, [800.0])
    s = engine.init_state(toy, [60.0], precision="single")
    with pytest.raises(EngineError):
        engine.sparse_delta_update(toy, s, 0, 30.0)


def test_sparse_update_toy(toy):
    s = engine.init_state(toy)
    engine.sparse_delta_update(toy, s, 0, 1.0)
    np.testing.assert_array_equal(s.xbeta, [1.0, 0.0])
    np.testing.assert_allclose(s.l_exp_xbeta, [math.e, 1.0], rtol=1e-15)
    np.testing.assert_allclose(s.denominators, [1 + math.e], rtol=1e-15)


def test_zero_delta_bit_identical(small_suite):
    ds = small_suite[4]
    s = engine.init_state(ds, random_beta(ds, 1))
    before = s.copy()
    engine.sparse_delta_update(ds, s, 0, 0.0)
    _assert_state_equal(s, before)


def test_incremental_matches_recompute(small_suite):
    rng = np.random.default_rng(11)
    for ds in small_suite[:10]:
        s = engine.init_state(ds)
        for _ in range(1000):
            j = int(rng.integers(ds.J))
            engine.sparse_delta_update(ds, s, j, float(rng.normal(0, 0.05)))
        fresh = engine.init_state(ds, s.beta)
        np.testing.assert_allclose(s.xbeta, fresh.xbeta, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(s.l_exp_xbeta, fresh.l_exp_xbeta, rtol=1e-9)
        np.testing.assert_allclose(s.denominators, fresh.denominators, rtol=1e-9)


def test_sparse_after_updates_within_1e10(small_suite):
    ds = small_suite[9]
    s = engine.init_state(ds)
    for j, d in [(0, 0.3), (ds.J - 1, -0.2), (0, 0.1)]:
        engine.sparse_delta_update(ds, s, j, d)
    fresh = engine.init_state(ds, s.beta)
    np.testing.assert_allclose(s.denominators, fresh.denominators, rtol=1e-10)


def test_grad_hess_toy(toy):
    s = engine.init_state(toy)
    g, h = engine.fused_grad_hess(toy, s, 0)
    assert g == pytest.approx(0.5, abs=1e-15)
    assert h == pytest.approx(-0.25, abs=1e-15)
    assert g == pytest.approx(oracle_gradient(toy, [0.0], 0), abs=1e-6)


def test_single_era_subject_contributes_nothing():
    ds = build_dataset([SubjectRecord("s", (Era(4, 3, (0,)),))], 1)
    g, h = engine.fused_grad_hess(ds, engine.init_state(ds, [0.7]), 0)
    assert (g, h) == (0.0, 0.0)


def test_reduction_hand_example():
    # subject 0: n=1, w=0.5; subject 1: n=2, w=0.25
    recs = [
        SubjectRecord("a", (Era(1, 1, (0,)), Era(1, 0, ()))),
        SubjectRecord("b", (Era(1, 2, (0,)), Era(3, 0, ()))),
    ]
    ds = build_dataset(recs, 1)
    g, h = engine.fused_grad_hess(ds, engine.init_state(ds), 0)
    assert ds.y_dot_x[0] - g == pytest.approx(1.0, abs=1e-15)
    assert h == pytest.approx(-0.625, abs=1e-15)


def test_dense_mode_matches_sparse(small_suite):
    for seed, ds in enumerate(small_suite[:20]):
        s = engine.init_state(ds, random_beta(ds, seed))
        for j in range(ds.J):
            a = engine.fused_grad_hess(ds, s, j)
            b = engine.fused_grad_hess(ds, s, j, dense=True)
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


def test_log_likelihood_toy(toy):
    assert engine.log_likelihood(toy, engine.init_state(toy)) == pytest.approx(-0.6931472, abs=1e-7)
    s = engine.init_state(toy, [math.log(2)])
    assert engine.log_likelihood(toy, s) == pytest.approx(-0.4054651, abs=1e-7)


def test_log_likelihood_doubles(small_suite):
    ds = small_suite[6]
    beta = random_beta(ds, 3)
    twice = subset_dataset(ds, np.repeat(np.arange(ds.N), 2))
    a = engine.log_likelihood(ds, engine.init_state(ds, beta))
    b = engine.log_likelihood(twice, engine.init_state(twice, beta))
    assert b == pytest.approx(2 * a, rel=1e-14)


def test_log_likelihood_matches_oracle(small_suite):
    for seed, ds in enumerate(small_suite):
        beta = random_beta(ds, seed)
        got = engine.log_likelihood(ds, engine.init_state(ds, beta))
        assert got == pytest.approx(oracle_log_likelihood(ds, beta), rel=1e-10)


def test_grad_hess_against_finite_differences(small_suite):
    for seed, ds in enumerate(small_suite[:30]):
        beta = random_beta(ds, seed)
        s = engine.init_state(ds, beta)
        for j in range(ds.J):
            g, h = engine.fused_grad_hess(ds, s, j)
            fd_g = oracle_gradient(ds, beta, j)
            fd_h = oracle_curvature(ds, beta, j)
            assert abs(g - fd_g) <= 1e-5 * max(1.0, abs(fd_g))
            assert abs(h - fd_h) <= 1e-4 * max(1.0, abs(fd_h))
            assert h <= 0.0


def test_parallel_one_partition_bit_identical(small_suite):
    for seed, ds in enumerate(small_suite[:20]):
        s = engine.init_state(ds, random_beta(ds, seed))
        for j in range(ds.J):
            assert engine.parallel_fused_grad_hess(ds, s, j, 1) == engine.fused_grad_hess(ds, s, j)


@pytest.mark.parametrize("partitions", [2, 4, 8])
def test_parallel_matches_serial(small_suite, partitions):
    for seed, ds in enumerate(small_suite):
        s = engine.init_state(ds, random_beta(ds, seed))
        for j in range(ds.J):
            a = engine.fused_grad_hess(ds, s, j)
            b = engine.parallel_fused_grad_hess(ds, s, j, partitions)
            np.testing.assert_allclose(b, a, rtol=1e-8, atol=1e-12)


def test_partitions_beyond_subjects(small_suite):
    ds = small_suite[0]
    s = engine.init_state(ds, random_beta(ds, 0))
    for j in range(ds.J):
        assert (engine.parallel_fused_grad_hess(ds, s, j, ds.N + 7)
                == engine.parallel_fused_grad_hess(ds, s, j, ds.N))


def test_partitioned_update_matches_serial(small_suite):
    for seed, ds in enumerate(small_suite[:20]):
        a = engine.init_state(ds, random_beta(ds, seed))
        b = a.copy()
        for j in range(ds.J):
            engine.sparse_delta_update(ds, a, j, 0.1 * (j + 1))
            engine.sparse_delta_update(ds, b, j, 0.1 * (j + 1), partitions=4)
        _assert_state_equal(a, b)


def test_single_precision_grad_hess(small_suite):
    for seed, ds in enumerate(small_suite[:30]):
        beta = random_beta(ds, seed)
        d = engine.init_state(ds, beta)
        f = engine.init_state(ds, beta, precision="single")
        assert f.denominators.dtype == np.float32
        for j in range(ds.J):
            np.testing.assert_allclose(engine.fused_grad_hess(ds, f, j),
                                       engine.fused_grad_hess(ds, d, j), rtol=1e-4, atol=1e-4)


def test_constant_column_is_invisible():
    recs = [SubjectRecord(f"s{i}", tuple(Era(1 + (i + k) % 7, (i * k) % 3, (0, 1) if k % 2 else (0,))
                                         for k in range(4)))
            for i in range(6)]
    ds = build_dataset(recs, 2)
    s = engine.init_state(ds, [0.4, -0.8])
    g, h = engine.fused_grad_hess(ds, s, 0)
    assert abs(g) <= 1e-10 and abs(h) <= 1e-10
    assert abs(oracle_gradient(ds, [0.4, -0.8], 0)) <= 1e-6


def test_set_threads_caps():
    assert engine.set_threads(1) == 1
    assert engine.set_threads(10_000) >= 1
