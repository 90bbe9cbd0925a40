"""Numerics for Gibbons-Hawking multi-center spaces.

Metric, frame and curvature evaluation; abelian anti-self-dual connections
with closed-form curvature; fiber holonomy asymptotics; characteristic-class
quadratures; and exact closed-form evaluation of the associated Dirac index,
with every closed form cross-checked against an independent numerical path.
"""

from .geometry import GHSpace, PatchChart, NORTH, SOUTH
from .instanton import InstantonBundle, LineBundle

__version__ = "0.1.0"

__all__ = [
    "GHSpace",
    "PatchChart",
    "NORTH",
    "SOUTH",
    "LineBundle",
    "InstantonBundle",
    "__version__",
]
