"""Stochastic bi-level optimisation with approximate implicit differentiation,
exact hypergradient oracles, and coupled-run stability measurement."""

__version__ = "0.1.0"
