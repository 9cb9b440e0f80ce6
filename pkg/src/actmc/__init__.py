"""Synthesis of optimal timer values for continuous-time Markov chains with alarms."""

__version__ = "0.1.0"
