"""Numerical laboratory for integer-fluxonium erasure qubits."""

__version__ = "0.1.0"
