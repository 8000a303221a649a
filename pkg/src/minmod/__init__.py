"""minmod: iterating the minimum modulus of entire functions.

Subpackages cover expression parsing/evaluation (:mod:`minmod.expr`),
extended-range values and growth models (:mod:`minmod.growth`), certified
circle extrema (:mod:`minmod.modulus`), real-line escape dynamics
(:mod:`minmod.realdyn`), growth/gap classification (:mod:`minmod.classify`)
and escape-set rendering (:mod:`minmod.grid`).  The ``minmod`` console
script wires them together.
"""

from .backend import BACKEND_NAME

__version__ = "0.1.0"

__all__ = ["BACKEND_NAME", "__version__"]
