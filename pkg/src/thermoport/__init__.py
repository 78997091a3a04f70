"""Structure-preserving simulation of conduction and diffusion with boundary ports.

The package assembles state-modulated skew-symmetric transport operators
on staggered 1D/2D grids, extracts collocated boundary port variables,
and certifies discrete energy and entropy balances on every run.
"""

__version__ = "0.1.0"
