"""Certified Newton-step unlearning for fairness-regularized logistic regression."""

__version__ = "0.1.0"
