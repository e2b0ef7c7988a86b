"""2D smectic-A liquid crystal flow on a staggered grid with linear, energy-stable schemes."""

from .fields import FaceVectorField, Grid, ScalarField, new_grid
from .ieq import Params, SimState
from .operators import BcSpec

__all__ = ["FaceVectorField", "Grid", "ScalarField", "new_grid", "Params", "SimState", "BcSpec"]
__version__ = "0.1.0"
