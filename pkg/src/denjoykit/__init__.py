"""denjoykit: executable moduli-of-continuity algebra, lattice-path
selection bounds, Denjoy-type circle dynamics, and consistency witnesses."""

__version__ = "0.1.0"

from . import dynamics, errors, moduli, selection, witness

__all__ = ["dynamics", "errors", "moduli", "selection", "witness",
           "__version__"]
