"""Publication-style figures from dickesim result trees.

The simulation CLI leaves one directory per run, each holding CSV tables
and a run_manifest.json with sha256 digests of every output.  This
package binds those files to figure recipes, refuses to draw from a tree
whose checksums do not match, and stamps every image with the digests it
consumed so a rendered panel can always be traced back to the exact run
that produced it.
"""

from .inputs import InputBinding, StaleInputError, VerifiedInput, verify_binding
from .recipes import RECIPES, FigureRecipe
from .render import build_figure, embedded_description, render

__all__ = [
    "FigureRecipe",
    "InputBinding",
    "RECIPES",
    "StaleInputError",
    "VerifiedInput",
    "build_figure",
    "embedded_description",
    "render",
    "verify_binding",
]

__version__ = "0.1.0"
