"""Voltage control of a thermostatically controlled load feeder with tabular Q-learning."""

__version__ = "0.1.0"
