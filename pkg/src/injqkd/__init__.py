"""Modulator-free injection-locked time-bin QKD transmitter simulation."""
__version__ = "0.1.0"
