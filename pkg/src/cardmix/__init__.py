"""Workload-mixture reweighting for a transferable learned cardinality estimator.

The package builds synthetic relational corpora, labels SPJ COUNT(*) queries
exactly, trains a small schema-agnostic regressor, ranks workload groups with
group DRO and scores estimators with q-error and plan-cost p-error.
"""

from .errors import CardmixError, ConfigError, ContractViolation, DataError

__version__ = "0.1.0"

__all__ = ["CardmixError", "ConfigError", "ContractViolation", "DataError", "__version__"]
