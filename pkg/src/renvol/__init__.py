"""Renormalized volumes and anomalies of conformally compact regions."""
__version__ = "0.1.0"
