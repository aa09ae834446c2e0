"""Command-line experiment harness.

Each registered experiment checks one claim about the transforms, norms,
pattern operators, or dimension testers, and emits a deterministic JSON
report with observed values, bounds, margins, and verdicts.
"""

from .experiments import REGISTRY, run_experiment
from .reporting import SCHEMA_VERSION, canonical_json

__all__ = ["REGISTRY", "run_experiment", "SCHEMA_VERSION", "canonical_json"]
