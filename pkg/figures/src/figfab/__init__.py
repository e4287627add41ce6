"""Publication figures rendered from simulation CSV/JSON artifacts."""

__version__ = "0.1.0"
