"""Variable selection by early-terminated random experiments.

The package fits forward-selection paths against fresh decoy columns,
aggregates which real variables repeatedly beat the decoys, and calibrates
a selection threshold against a target false-discovery level.  Grouped
designs are handled by an informed elastic net whose quadratic penalty
couples variables within correlation clusters while adding only one
augmented row per cluster.
"""

from .core import Dataset, RngStream, StandardizedDataset, snr_noise_variance, standardize
from .errors import ConfigError, InputError, NumericalError, TrexnetError
from .lars import PathEvent, SolutionPath, StopRule, entries_until, lars_path

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "Dataset",
    "InputError",
    "NumericalError",
    "PathEvent",
    "RngStream",
    "SolutionPath",
    "StandardizedDataset",
    "StopRule",
    "TrexnetError",
    "entries_until",
    "lars_path",
    "snr_noise_variance",
    "standardize",
    "__version__",
]
