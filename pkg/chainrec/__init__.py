"""
chainrec: chain recurrence of maps at finite resolution.

Discretises a compact domain into a grid of cells, builds the ε-transition
graph of a map, extracts its chain-recurrent classes (Morse nodes), the
attractor/dual-repeller pairs between them and a complete Lyapunov function
whose values code the pairs as Cantor-set digits.
"""

from ._version import PACKAGE_VERSION

__version__ = PACKAGE_VERSION

__all__ = ["__version__"]
