"""Bayesian self-controlled case series: MAP fitting by cyclic coordinate descent."""

import warnings

# numba probes for TBB when compiling parallel kernels; the omp layer is used instead
warnings.filterwarnings("ignore", message="The TBB threading layer requires")

from .data import (Dataset, DrugDictionary, Era, SubjectRecord, build_dataset,  # noqa: E402
                   read_long_format, subset_dataset, write_long_format)
from .priors import PriorSpec  # noqa: E402
from .solver import FitResult, SolverConfig, fit  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "Dataset", "DrugDictionary", "Era", "SubjectRecord", "build_dataset", "read_long_format",
    "subset_dataset", "write_long_format", "PriorSpec", "FitResult", "SolverConfig", "fit",
]
