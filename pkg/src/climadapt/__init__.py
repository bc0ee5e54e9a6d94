"""Urban climate-adaptation simulator and reinforcement-learning harness."""

__version__ = "0.1.0"
