import numpy as np
import pytest

from bsccs.bootstrap import (BootstrapConfig, BootstrapResult, format_report,
                             replicate_rng, report_ranked_intervals, resample, run_bootstrap)
from bsccs.data import Era, SubjectRecord, build_dataset
from bsccs.errors import BootstrapError
from bsccs.priors import PriorSpec
from bsccs.simkit import SimConfig, simulate
from bsccs.solver import SolverConfig

LAPLACE = PriorSpec("laplace", 0.5)


@pytest.fixture(scope="module")
def data():
    cfg = SimConfig(n_subjects=1500, n_drugs=5, true_beta=(1.2, 0.0, -0.7, 0.0, 0.0),
                    prevalence=(0.3, 0.3, 0.3, 0.3, 1e-9), era_length=(1, 30),
                    baseline_mean=np.log(1 / 20), seed=8, stop_at_kept=120)
    return simulate(cfg)[0]


def test_resample_single_subject(toy):
    for seed in range(5):
        np.testing.assert_array_equal(resample(toy, np.random.default_rng(seed)), [0])


def test_resample_deterministic_and_sized(data):
    a = resample(data, replicate_rng(3, 7))
    b = resample(data, replicate_rng(3, 7))
    np.testing.assert_array_equal(a, b)
    assert a.size == data.N and a.min() >= 0 and a.max() < data.N


def test_single_replicate_degenerate(data):
    res = run_bootstrap(data, BootstrapConfig(LAPLACE, replicates=1, seed=4))
    np.testing.assert_array_equal(res.lower, res.replicate_betas[0])
    np.testing.assert_array_equal(res.upper, res.replicate_betas[0])
    assert set(np.unique(res.p_hat)) <= {0.0, 1.0}


def test_unexposed_drug(data):
    assert data.column(4).size == 0
    res = run_bootstrap(data, BootstrapConfig(LAPLACE, replicates=20, seed=1))
    assert res.p_hat[4] == 0.0 and res.lower[4] == 0.0 and res.upper[4] == 0.0
    assert np.all(res.replicate_betas[:, 4] == 0.0)


def test_interval_brackets_median(data):
    res = run_bootstrap(data, BootstrapConfig(LAPLACE, replicates=40, seed=2))
    med = np.median(res.replicate_betas, axis=0)
    assert np.all(res.lower <= med) and np.all(med <= res.upper)


def test_quantiles_are_linear_interpolation(data):
    res = run_bootstrap(data, BootstrapConfig(LAPLACE, replicates=17, seed=2, level=0.9))
    col = np.sort(res.replicate_betas[:, 0])
    pos = 0.05 * (col.size - 1)
    lo = col[int(np.floor(pos))] + (pos - np.floor(pos)) * (col[int(np.ceil(pos))] - col[int(np.floor(pos))])
    assert res.lower[0] == pytest.approx(lo, abs=1e-15)


def test_prefix_stability(data):
    small = run_bootstrap(data, BootstrapConfig(LAPLACE, replicates=10, seed=6))
    large = run_bootstrap(data, BootstrapConfig(LAPLACE, replicates=25, seed=6))
    np.testing.assert_array_equal(large.replicate_betas[:10], small.replicate_betas)


def test_deterministic_across_threads(data):
    a = run_bootstrap(data, BootstrapConfig(LAPLACE, replicates=12, seed=3, threads=1))
    b = run_bootstrap(data, BootstrapConfig(LAPLACE, replicates=12, seed=3, threads=4))
    np.testing.assert_array_equal(a.replicate_betas, b.replicate_betas)
    assert format_report(report_ranked_intervals(a, 0)) == format_report(report_ranked_intervals(b, 0))


def test_nonconverged_excluded(data, monkeypatch):
    import dataclasses
    from bsccs import bootstrap
    real_fit = bootstrap.fit
    calls = []

    def flaky_fit(*args, **kwargs):
        res = real_fit(*args, **kwargs)
        calls.append(res)
        # the first call is the full-data fit; fail every other replicate after it
        return dataclasses.replace(res, converged=len(calls) == 1 or len(calls) % 2 == 0)

    monkeypatch.setattr(bootstrap, "fit", flaky_fit)
    res = run_bootstrap(data, BootstrapConfig(LAPLACE, replicates=6, seed=1))
    assert res.n_failed == 3
    assert res.replicate_betas.shape == (3, data.J)


def test_all_failed_raises(data):
    cfg = BootstrapConfig(PriorSpec("normal", 1.0), replicates=3, warm_start=False,
                          solver=SolverConfig(max_cycles=1, epsilon=1e-14))
    with pytest.raises(BootstrapError):
        run_bootstrap(data, cfg)


def _result(p_hat, beta, labels=None):
    labels = labels or tuple(f"d{j}" for j in range(len(beta)))
    beta = np.asarray(beta, float)
    return BootstrapResult(labels, beta, beta - 1, beta + 1, np.asarray(p_hat, float),
                           np.zeros((1, len(beta))), 0)


def test_report_threshold_and_order():
    res = _result([0.0, 0.3, 1.0, 0.6, 1.0], [0.0, 0.5, -0.2, 0.5, 0.9], ("a", "b", "c", "d", "e"))
    assert [r.drug_id for r in report_ranked_intervals(res)] == ["e", "d", "c"]
    assert [r.drug_id for r in report_ranked_intervals(res, 0.0)] == ["e", "b", "d", "c"]
    assert [r.drug_id for r in report_ranked_intervals(res, 1.0)] == ["e", "c"]


def test_report_format():
    text = format_report(report_ranked_intervals(_result([1.0], [0.25])))
    assert text == "drug_id\tbeta_map\tci_lower\tci_upper\tp_hat\nd0\t0.25\t-0.75\t1.25\t1.0\n"


@pytest.mark.parametrize("kwargs", [dict(replicates=0), dict(level=1.0), dict(threads=0)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        BootstrapConfig(LAPLACE, **kwargs)


def test_duplicated_subjects_independent():
    ds = build_dataset([SubjectRecord("s", (Era(1, 1, (0,)), Era(1, 0, ())))], 1)
    res = run_bootstrap(ds, BootstrapConfig(PriorSpec("normal", 1.0), replicates=3))
    np.testing.assert_allclose(res.replicate_betas[:, 0], res.beta_map[0], atol=1e-3)
