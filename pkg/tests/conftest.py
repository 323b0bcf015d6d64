import math

import numpy as np
import pytest

from bsccs.data import Era, SubjectRecord, build_dataset
from bsccs.simkit import small_instance

SUITE_SIZE = 100


@pytest.fixture(scope="session")
def toy():
    """One subject, two one-day eras; the event falls in the exposed era."""
    rec = SubjectRecord("S1", (Era(1, 1, (0,)), Era(1, 0, ())))
    return build_dataset([rec], 1, ("A",))


@pytest.fixture(scope="session")
def toy_root():
    # bisection on 1/(e^b + 1) = b, the normal(1) stationarity condition on the toy data
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if 1.0 / (math.exp(mid) + 1.0) - mid > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@pytest.fixture(scope="session")
def small_suite():
    return [small_instance(seed) for seed in range(SUITE_SIZE)]


def random_beta(ds, seed, scale=0.7):
    return np.random.default_rng(seed).normal(0.0, scale, size=ds.J)
