"""European option pricing under SVCJ with a high-order compact IMEX scheme."""

__version__ = "0.1.0"
