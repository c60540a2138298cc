"""Numerical laboratory for the grand canonical interacting Bose gas.

The package implements two dual descriptions of the same gas of bosons on a
torus: a quantum side built from time-periodic heat propagators driven by a
Gaussian auxiliary field, and a classical side built from a Gibbs measure for
a complex Gaussian free field with a Wick-ordered quartic interaction.  Small
systems can additionally be solved exactly on a truncated Fock space, which
provides independent oracles for every Monte Carlo estimator.
"""

from boselab.torus import TorusSpec, Mode

__all__ = ["TorusSpec", "Mode"]
