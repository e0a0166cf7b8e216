"""Exception hierarchy shared by every cardmix module.

The CLI maps the three top-level families onto process exit codes:
``ConfigError`` -> 2, ``DataError`` -> 3, ``ContractViolation`` -> 4.
"""

from __future__ import annotations


class CardmixError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(CardmixError):
    """Invalid configuration or call arguments."""


class DataError(CardmixError):
    """Problem with input data or files."""


class ContractViolation(CardmixError):
    """A runtime invariant check failed."""


class ParseError(DataError):
    """Malformed CSV row or SQL text.

    ``line`` is 1-based for file input; ``position`` is a 0-based character
    offset for SQL text.
    """

    def __init__(self, message: str, *, line: int | None = None, position: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if position is not None:
            where.append(f"position {position}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line = line
        self.position = position


class IntegrityError(DataError):
    """Duplicate primary key, out-of-domain value or dangling foreign key."""


class ResolutionError(ParseError):
    """SQL text names a table or column the schema does not have."""


class UnsupportedJoinError(ParseError):
    """Equality between two columns that is not a declared PK-FK edge."""


class ConnectivityError(DataError):
    """The tables of a query do not form a connected join graph."""


class GenerationError(ConfigError):
    """The workload generator cannot satisfy its configuration."""


class CapacityError(ConfigError):
    """Too many tables for exhaustive subset enumeration."""


class CheckpointError(DataError):
    """Unreadable, truncated or incompatible model checkpoint."""


class IncompleteCardinalityError(DataError):
    """A cardinality set lacks a subset the planner needs."""
