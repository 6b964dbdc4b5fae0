"""Event-based dynamic spectrum access: frame simulator, learning agents and baselines."""

__version__ = "0.1.0"
