"""Exception taxonomy shared across the pipeline.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
ServiceError -> 3.
"""

from __future__ import annotations


class DistilkgError(Exception):
    """Base class for all package errors."""


class ConfigError(DistilkgError):
    """Bad run configuration, unusable paths, or invalid arguments."""


class DataError(DistilkgError):
    """Malformed or inconsistent data files / records."""


class ServiceError(DistilkgError):
    """Remote completion or scorer endpoint failure."""
