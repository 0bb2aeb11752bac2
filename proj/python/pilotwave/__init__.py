"""Pilot-wave trajectory laws on periodic grids.

Thin Python surface over the C++ core: spectral Schroedinger evolution,
the full/reduced/symmetrized velocity laws, the variable-particle-set jump
process, and the statistical tests used to certify equivariance.
"""

try:
    from pilotwave._core import *  # noqa: F401,F403
except ImportError:  # pragma: no cover - test-tree layout without installation
    from _core import *  # noqa: F401,F403

__version__ = "0.1.0"
