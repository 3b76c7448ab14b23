"""Distill causal commonsense triples from a completion LLM.

The pipeline generates events and per-relation inferences with few-shot
prompts, filters the resulting triple corpus with a critic score, and emits
analytics plus training data for a compact student model.
"""

from .errors import ConfigError, DataError, DistilkgError, ServiceError

__version__ = "0.1.0"

__all__ = ["ConfigError", "DataError", "DistilkgError", "ServiceError", "__version__"]
