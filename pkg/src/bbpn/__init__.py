"""Black-box probabilistic extrapolation of numerical methods.

Outputs q(h, t) of a traditional method at several resolutions h are modelled
with a Gaussian process whose error component vanishes like h^alpha, and the
process is conditioned on the data to give a posterior for the h = 0 limit.
"""

from .dataset import Dataset, HParameterization, build, read_csv, write_csv
from .exceptions import (
    BBPNError,
    ConditioningError,
    DataConsistencyError,
    DegenerateDataError,
    EmptyDatasetError,
)
from .kernel import BasisSet, Hyperparameters, Prior, Profile
from .likelihood import FitConfig, FitResult, fit
from .posterior import LimitPosterior, condition, credible_band, predict, predict_limit

__version__ = "0.1.0"

__all__ = [
    "BBPNError",
    "BasisSet",
    "ConditioningError",
    "DataConsistencyError",
    "Dataset",
    "DegenerateDataError",
    "EmptyDatasetError",
    "FitConfig",
    "FitResult",
    "HParameterization",
    "Hyperparameters",
    "LimitPosterior",
    "Prior",
    "Profile",
    "build",
    "condition",
    "credible_band",
    "fit",
    "predict",
    "predict_limit",
    "read_csv",
    "write_csv",
]
