"""softlimit: a numerical laboratory for soft inductive systems of
finite-dimensional operator systems.

Builds, verifies, strictifies and probes finite-horizon families of
matrix-block algebras connected by unital completely positive maps, and
runs the completely-positive-approximation pipeline (approximation system
-> induced split system -> strict system) end to end.
"""

__version__ = "0.1.0"

from .algebra import AlgElement, FdVNAlgebra, OperatorSystemSpace
from .cpmaps import CPMap
from .linalg import Tolerance, default_tolerance

__all__ = [
    "__version__",
    "AlgElement",
    "FdVNAlgebra",
    "OperatorSystemSpace",
    "CPMap",
    "Tolerance",
    "default_tolerance",
]
