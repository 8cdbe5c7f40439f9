"""Partial tubes, warped and quasi-warped products of immersions in space forms.

Construction side: products, partial tubes over a base immersion with a
parallel flat normal subbundle, warped products, tubes over curves and
multi-factor quasi-warped products, each with its closed-form geometry.
Inverse side: extraction of the defining triple from a sampled immersion,
metric classification, sphere recovery from curves and flat-normal-bundle
analysis. Everything is verified numerically on sampled grids.
"""

from polartube.ambient import AmbientSpace, SpaceForm, contains, inner, orthonormal_complement
from polartube.expr import Expression, Jet2, differentiate, eval_jet2, eval_value, parse
from polartube.immersion import Immersion, ProductChart

__all__ = [
    "AmbientSpace",
    "SpaceForm",
    "Expression",
    "Jet2",
    "Immersion",
    "ProductChart",
    "parse",
    "eval_jet2",
    "eval_value",
    "differentiate",
    "inner",
    "contains",
    "orthonormal_complement",
]

__version__ = "0.1.0"
