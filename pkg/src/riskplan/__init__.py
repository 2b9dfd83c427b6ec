"""Risk-aware ethical trajectory planning for simulated autonomous vehicles."""

__version__ = "0.1.0"
