"""Entanglement detection with kernel-SVM witnesses and classical-shadow features."""

__version__ = "0.1.0"
