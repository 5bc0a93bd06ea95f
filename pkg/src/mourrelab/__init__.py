"""Grid-level numerics for commutator methods in the spectral theory of
Schrödinger operators: conjugate operators, Mourre windows, limiting
absorption sweeps, regularity diagnostics and wave-operator traces."""

__version__ = "0.1.0"
