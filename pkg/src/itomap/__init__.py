"""Simulation and orthogonal martingale bases for Itô-Markov additive processes."""

__version__ = "0.1.0"
