"""Topology-guided reconnaissance of unknown 2-D scalar fields.

Simulates correlated random fields, extracts their Morse structure,
traces isoline/gradient motion primitives, tracks information acquisition
through partition entropies, runs and compares reconnaissance strategies,
and hosts the human reconnaissance game with its preference estimator.
"""

__version__ = "0.1.0"

from .field import ScalarField, apply_boundary_window, generate_grf, make_field

__all__ = [
    "ScalarField",
    "apply_boundary_window",
    "generate_grf",
    "make_field",
    "__version__",
]
