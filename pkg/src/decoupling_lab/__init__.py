"""Coupled and decoupled random chaoses at desk scale.

Exact identity checks (Walsh calculus over Rademacher signs) plus seeded
Monte Carlo probes for decoupling inequalities in concrete finite
dimensional norms.
"""

__version__ = "0.1.0"
