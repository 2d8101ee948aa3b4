"""Logic operations on period-doubled states of driven dissipative oscillators."""

__version__ = "0.1.0"
