"""Fairness auditing for biometric verification scores."""

__version__ = "0.1.0"
