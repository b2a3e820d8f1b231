"""Certified H-infinity state-feedback synthesis from high-level requirements.

The package turns plant models plus structured or natural-language
performance requirements into state-feedback gains backed by linear matrix
inequality certificates, verifies them with Monte Carlo simulation and
frequency-domain analysis, and iteratively adapts the specification with a
severity-aware gamma-floor guardrail.
"""

__version__ = "0.1.0"
