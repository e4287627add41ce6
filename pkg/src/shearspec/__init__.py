"""Frequency-space simulator and verification harness for linearized
compressible shear-flow dynamics (Couette and near-Couette monotone
shears)."""

__version__ = "0.1.0"
